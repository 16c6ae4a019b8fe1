#pragma once

// Configuration-driven pipeline: sieve -> atlas -> synthesis -> detection ->
// monodromy, with persistence, plots and reproducible manifests.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "specmono/atlas.hpp"
#include "specmono/classical.hpp"
#include "specmono/detect.hpp"
#include "specmono/io.hpp"
#include "specmono/monodromy.hpp"

namespace specmono {

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
    // [model]
    std::string model = "quadratic";      // quadratic | linear-degenerate | trigpoly
    double energy = 0.5;
    std::vector<TrigTerm> trig_terms;     // trigpoly only
    double trig_a0 = 0.0;
    double trig_a1 = 1.0;

    // [regime]
    double h = 1e-4;
    double delta = 0.5;
    double eps = -1.0;                    // < 0: derived as h^delta
    double big_C = 1.0;
    double lambda = 1e-6;
    double alpha = 1e-2;
    double d = 1.0;

    // [atlas]
    std::string atlas = "focus_focus";    // trivial | focus_focus
    Annulus annulus;
    double s_shear = 0.1;
    double correction_scale = 0.05;

    // [loop]
    int loop_count = 8;
    double loop_radius = 0.011;
    int triple_clusters = 0;              // extra 3-rectangle clusters for triple overlaps
    double C1 = 2.0;

    // [noise]
    double noise_kappa = 0.01;
    double noise_power = 2.0;

    // [detector]
    int degree = 2;
    double reject_threshold = 0.25;
    double min_coverage = 0.95;
    double transition_tolerance = 0.1;
    double max_residual_tol_h = 2.0;

    // [sieve]
    int k_max = 200;
    int n_samples = 64;
    int grid_n = 64;

    // [run]
    std::uint64_t seed = 1;
    int workers = 1;
    bool blind = false;
    std::string out_dir = "out";

    SemiclassicalRegime regime() const {
        SemiclassicalRegime r;
        r.h = h;
        r.delta = delta;
        r.eps = eps > 0.0 ? eps : std::pow(h, delta);
        r.lambda = lambda;
        r.alpha = alpha;
        r.d = d;
        return r;
    }
};

namespace detail {

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

inline double parse_num(const std::string& v, const std::string& key) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

inline std::string trim(std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

}  // namespace detail

// Flat key = value text with [section] headers; '#' comments; unknown keys
// are hard errors.
inline RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;
        auto num = [&] { return detail::parse_num(val, qual); };

        if (qual == "model.name") cfg.model = val;
        else if (qual == "model.energy") cfg.energy = num();
        else if (qual == "model.trig_a0") cfg.trig_a0 = num();
        else if (qual == "model.trig_a1") cfg.trig_a1 = num();
        else if (qual == "model.trig_term") {
            // "m n c" triplet, repeatable
            std::istringstream ts(val);
            TrigTerm t;
            if (!(ts >> t.m >> t.n >> t.c))
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": trig_term wants 'm n c'");
            cfg.trig_terms.push_back(t);
        }
        else if (qual == "regime.h") cfg.h = num();
        else if (qual == "regime.delta") cfg.delta = num();
        else if (qual == "regime.eps") cfg.eps = num();
        else if (qual == "regime.C") cfg.big_C = num();
        else if (qual == "regime.lambda") cfg.lambda = num();
        else if (qual == "regime.alpha") cfg.alpha = num();
        else if (qual == "regime.d") cfg.d = num();
        else if (qual == "atlas.name") cfg.atlas = val;
        else if (qual == "atlas.center_x") cfg.annulus.center.x = num();
        else if (qual == "atlas.center_y") cfg.annulus.center.y = num();
        else if (qual == "atlas.r_min") cfg.annulus.r_min = num();
        else if (qual == "atlas.r_max") cfg.annulus.r_max = num();
        else if (qual == "atlas.s_shear") cfg.s_shear = num();
        else if (qual == "atlas.correction_scale") cfg.correction_scale = num();
        else if (qual == "loop.count") cfg.loop_count = int(num());
        else if (qual == "loop.radius") cfg.loop_radius = num();
        else if (qual == "loop.triple_clusters") cfg.triple_clusters = int(num());
        else if (qual == "loop.C1") cfg.C1 = num();
        else if (qual == "noise.kappa") cfg.noise_kappa = num();
        else if (qual == "noise.power") cfg.noise_power = num();
        else if (qual == "detector.degree") cfg.degree = int(num());
        else if (qual == "detector.reject_threshold") cfg.reject_threshold = num();
        else if (qual == "detector.min_coverage") cfg.min_coverage = num();
        else if (qual == "detector.transition_tolerance") cfg.transition_tolerance = num();
        else if (qual == "detector.max_residual_tol_h") cfg.max_residual_tol_h = num();
        else if (qual == "sieve.k_max") cfg.k_max = int(num());
        else if (qual == "sieve.n_samples") cfg.n_samples = int(num());
        else if (qual == "sieve.grid_n") cfg.grid_n = int(num());
        else if (qual == "run.seed") cfg.seed = std::uint64_t(num());
        else if (qual == "run.workers") cfg.workers = int(num());
        else if (qual == "run.blind") cfg.blind = detail::parse_bool(val, qual);
        else if (qual == "run.out_dir") cfg.out_dir = val;
        else
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": unknown key '" + qual + "'");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    return parse_config(read_text_file(path));
}

inline IntegrableModel model_from_config(const RunConfig& cfg) {
    if (cfg.model == "quadratic") return make_quadratic_model();
    if (cfg.model == "linear-degenerate") return make_linear_degenerate_model();
    if (cfg.model == "trigpoly")
        return make_trig_poly_model(cfg.trig_terms, cfg.trig_a0, cfg.trig_a1);
    throw ConfigError("config: unknown model '" + cfg.model + "'");
}

inline AtlasSpec atlas_from_config(const RunConfig& cfg) {
    AtlasSpec atlas;
    if (cfg.atlas == "trivial")
        atlas = build_trivial_atlas(cfg.annulus, cfg.regime());
    else if (cfg.atlas == "focus_focus")
        atlas = build_focus_focus_atlas(cfg.annulus, cfg.regime());
    else
        throw ConfigError("config: unknown atlas '" + cfg.atlas + "'");
    atlas.s_shear = cfg.s_shear;
    atlas.correction_scale = cfg.correction_scale;
    return atlas;
}

/// Rectangle centers: loop_count evenly spaced on the loop circle, plus
// triple_clusters groups of three mutually overlapping rectangles (the loop
// cover itself has only pairwise overlaps).
inline std::vector<std::pair<double, double>> loop_centers(const RunConfig& cfg) {
    std::vector<std::pair<double, double>> centers;
    const Vec2 c = cfg.annulus.center;
    const double r = cfg.loop_radius;
    for (int i = 0; i < cfg.loop_count; ++i) {
        const double a = two_pi * i / cfg.loop_count;
        centers.emplace_back(c.x + r * std::cos(a), c.y + r * std::sin(a));
    }
    const double rho = std::pow(cfg.h, cfg.delta) / cfg.C1;
    const double step = 0.6 * rho / r;  // angular offset: chord 0.6 rho
    for (int t = 0; t < cfg.triple_clusters; ++t) {
        // first cluster straddles the branch cut at angle 0; the small 0.1
        // shift keeps cluster rectangles distinct from the ring rectangles
        const double base = two_pi * t / std::max(1, cfg.triple_clusters);
        for (int s = -1; s <= 1; ++s) {
            const double a = base + (s + 0.1) * step;
            centers.emplace_back(c.x + r * std::cos(a), c.y + r * std::sin(a));
        }
    }
    return centers;
}

namespace detail {

template <class Fn>
inline void parallel_for(std::size_t n, int workers, Fn&& fn) {
    const int w = std::max(1, workers);
    if (w == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int t = 0; t < w; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

inline std::string stage_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

inline void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

struct SieveStageResult {
    SieveResult sieve;
    std::string csv_path;
    std::vector<std::string> warnings;
};

inline SieveStageResult run_sieve(const RunConfig& cfg) {
    detail::ensure_out_dir(cfg);
    const RegimeReport regime = regime_check(cfg.regime(), cfg.big_C);
    if (!regime.all_pass) {
        std::string bad;
        for (const auto& c : regime.checks)
            if (!c.pass) bad += (bad.empty() ? "" : ", ") + c.name;
        throw ConfigError("regime check failed: " + bad);
    }
    const IntegrableModel model = model_from_config(cfg);
    SieveStageResult out;
    out.sieve = good_value_sieve(model, cfg.energy, cfg.alpha, cfg.d, cfg.k_max,
                                 cfg.n_samples, cfg.grid_n);
    if (out.sieve.retained.empty())
        out.warnings.push_back("sieve retained no good values");
    if (out.sieve.rho_constant_flag)
        out.warnings.push_back("rotation number appears constant along the energy curve");
    if (out.sieve.vertex_rule_skipped)
        out.warnings.push_back("model declares vertices; proximity rule not applied");

    std::ostringstream csv;
    csv << "G,xi1,xi2,omega1,omega2,dioph_margin,dq_norm,rho_prime\n";
    for (const auto& e : out.sieve.retained) {
        csv << format_double(e.G) << ',' << format_double(e.xi.xi1) << ','
            << format_double(e.xi.xi2) << ',' << format_double(e.omega.omega1) << ','
            << format_double(e.omega.omega2) << ',' << format_double(e.dioph_margin)
            << ',' << format_double(e.dq_norm) << ',' << format_double(e.rho_prime)
            << '\n';
    }
    out.csv_path = detail::stage_path(cfg, "sieve.csv");
    write_text_file(out.csv_path, csv.str());
    return out;
}

struct SynthStageResult {
    AtlasSpec atlas;
    BandResult band;
    std::vector<std::string> rect_csv_paths;
    std::string band_csv_path;
    std::string manifest_path;
};

inline SynthStageResult run_synth(const RunConfig& cfg) {
    detail::ensure_out_dir(cfg);
    const SemiclassicalRegime regime = cfg.regime();
    const RegimeReport check = regime_check(regime, cfg.big_C);
    if (!check.all_pass) throw ConfigError("regime check failed before synthesis");

    SynthStageResult out;
    out.atlas = atlas_from_config(cfg);
    validate_atlas(out.atlas, regime);

    const auto centers = loop_centers(cfg);

    // Synthesize rectangles in parallel, then aggregate in index order so
    // the output is independent of the worker count.
    std::vector<GoodRectangle> rects;
    std::vector<int> chart_ids;
    for (const auto& [E, K] : centers) {
        rects.push_back(good_rectangle(E, K, regime, cfg.C1));
        const int chart_id = chart_for_center(out.atlas, {E, K});
        if (chart_id < 0) throw DomainError("run_synth: center interior to no chart");
        chart_ids.push_back(chart_id);
    }
    std::vector<SpectrumDataset> parts(rects.size());
    std::vector<std::exception_ptr> errors(rects.size());
    detail::parallel_for(rects.size(), cfg.workers, [&](std::size_t i) {
        try {
            parts[i] = synthesize_rectangle(out.atlas, chart_ids[i], rects[i], regime,
                                            cfg.noise_kappa, cfg.noise_power, cfg.seed);
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    out.band.merged.regime = regime;
    out.band.merged.provenance = {out.atlas.name, cfg.seed, cfg.noise_kappa,
                                  cfg.noise_power, "", rects};
    const double tol = regime.h * 1e-6;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        out.band.jobs.push_back({rects[i], chart_ids[i], parts[i].points.size()});
        out.band.merged.newton_failures += parts[i].newton_failures;
        for (std::size_t j = 0; j < i; ++j) {
            std::size_t shared = 0;
            const auto& a = parts[j].points;
            const auto& b = parts[i].points;
            std::size_t qi = 0;
            for (const auto& p : a) {
                while (qi < b.size() && b[qi].re < p.re - tol) ++qi;
                for (std::size_t t = qi; t < b.size() && b[t].re <= p.re + tol; ++t) {
                    if (std::abs(b[t].im - p.im) / regime.eps <= tol) {
                        ++shared;
                        break;
                    }
                }
            }
            if (shared > 0) out.band.overlap_counts[{int(j), int(i)}] = shared;
        }
    }
    for (auto& part : parts)
        out.band.merged.points.insert(out.band.merged.points.end(), part.points.begin(),
                                      part.points.end());
    specmono::detail::dedup_points(out.band.merged.points, regime.eps, tol);

    for (std::size_t i = 0; i < parts.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "rect_%02zu.csv", i);
        const std::string path = detail::stage_path(cfg, name);
        write_spectrum_csv(parts[i], path, cfg.blind);
        out.rect_csv_paths.push_back(path);
    }
    out.band_csv_path = detail::stage_path(cfg, "band.csv");
    write_spectrum_csv(out.band.merged, out.band_csv_path, cfg.blind);

    json manifest;
    manifest["atlas"] = out.atlas.name;
    manifest["regime"] = to_json(regime);
    manifest["seed"] = cfg.seed;
    manifest["noise"] = {{"kappa", cfg.noise_kappa}, {"power", cfg.noise_power}};
    manifest["blind"] = cfg.blind;
    manifest["newton_failures"] = out.band.merged.newton_failures;
    manifest["n_points"] = out.band.merged.points.size();
    json jrects = json::array();
    for (std::size_t i = 0; i < rects.size(); ++i) {
        json jr = to_json(rects[i]);
        jr["chart_id"] = chart_ids[i];
        jr["csv"] = out.rect_csv_paths[i];
        jr["csv_hash"] = file_hash(out.rect_csv_paths[i]);
        jr["n_points"] = out.band.jobs[i].n_points;
        jrects.push_back(jr);
    }
    manifest["rectangles"] = jrects;
    json joverlaps = json::array();
    for (const auto& [ij, n] : out.band.overlap_counts)
        joverlaps.push_back({{"i", ij.first}, {"j", ij.second}, {"shared", n}});
    manifest["overlaps"] = joverlaps;
    manifest["band_csv"] = out.band_csv_path;
    manifest["band_hash"] = file_hash(out.band_csv_path);
    out.manifest_path = detail::stage_path(cfg, "synth_manifest.json");
    write_text_file(out.manifest_path, manifest.dump(2) + "\n");
    return out;
}

struct DetectStageResult {
    std::vector<std::optional<ChartFit>> fits;  // one slot per rectangle
    std::vector<std::string> errors;            // per-rectangle diagnostics
    std::string fits_path;
    std::string svg_path;
};

inline DetectStageResult run_detect(const RunConfig& cfg, const SpectrumDataset& dataset,
                                    const std::vector<GoodRectangle>& rects) {
    detail::ensure_out_dir(cfg);
    DetectStageResult out;
    out.fits.resize(rects.size());
    out.errors.assign(rects.size(), "");
    const SemiclassicalRegime regime = cfg.regime();

    detail::parallel_for(rects.size(), cfg.workers, [&](std::size_t i) {
        try {
            const RescaledCloud cloud = rescale(dataset, rects[i]);
            const BasisPair basis = detect_basis(cloud);
            const LatticeLabeling labeling =
                label_lattice(cloud, basis, cfg.reject_threshold, cfg.min_coverage);
            out.fits[i] = fit_chart(cloud, labeling, cfg.degree, regime,
                                    cfg.max_residual_tol_h);
        } catch (const Error& e) {
            out.errors[i] = e.what();
        }
    });

    json jfits = json::array();
    for (std::size_t i = 0; i < rects.size(); ++i) {
        json jf;
        jf["rect"] = to_json(rects[i]);
        if (out.fits[i]) {
            jf["fit"] = to_json(*out.fits[i]);
        } else {
            jf["error"] = out.errors[i];
        }
        jfits.push_back(jf);
    }
    out.fits_path = detail::stage_path(cfg, "fits.json");
    write_text_file(out.fits_path, jfits.dump(2) + "\n");

    // debug overlay for the first fitted rectangle
    for (std::size_t i = 0; i < rects.size(); ++i) {
        if (!out.fits[i]) continue;
        const RescaledCloud cloud = rescale(dataset, rects[i]);
        out.svg_path = detail::stage_path(cfg, "cloud.svg");
        write_text_file(out.svg_path, svg_cloud(cloud, &*out.fits[i]));
        break;
    }
    return out;
}

struct MonodromyStageResult {
    CechCocycle cocycle;
    CocycleReport report;
    std::optional<HolonomyClass> holonomy_class;
    bool trivial = false;
    std::string report_path;
    std::string svg_path;
    std::vector<std::string> warnings;
};

// Transitions for every ordered pair of fitted rectangles whose rescaled
// rectangles both contain the midpoint of their centers; holonomy over the
// first loop_count rectangles (counterclockwise).
inline MonodromyStageResult run_monodromy(const RunConfig& cfg,
                                          const std::vector<std::optional<ChartFit>>& fits,
                                          const std::vector<GoodRectangle>& rects) {
    detail::ensure_out_dir(cfg);
    if (fits.size() != rects.size())
        throw PreconditionError("run_monodromy: one fit slot per rectangle required");
    MonodromyStageResult out;
    const double eps = cfg.regime().eps;

    for (std::size_t i = 0; i < rects.size(); ++i) {
        if (fits[i]) out.cocycle.cover.push_back(int(i));
    }
    for (std::size_t i = 0; i < rects.size(); ++i) {
        for (std::size_t j = 0; j < rects.size(); ++j) {
            if (i == j || !fits[i] || !fits[j]) continue;
            const Rect ri = rects[i].rescaled(eps), rj = rects[j].rescaled(eps);
            const Vec2 mid = (ri.center + rj.center) / 2.0;
            if (!ri.contains(mid) || !rj.contains(mid)) continue;
            try {
                out.cocycle.transitions[{int(i), int(j)}] =
                    transition(*fits[i], *fits[j], mid, cfg.transition_tolerance);
            } catch (const Error& e) {
                out.warnings.push_back("transition (" + std::to_string(i) + "," +
                                       std::to_string(j) + "): " + e.what());
            }
        }
    }
    out.report = cocycle_check(out.cocycle);

    std::vector<int> loop;
    for (int i = 0; i < cfg.loop_count; ++i) loop.push_back(i);
    loop.push_back(0);
    try {
        out.holonomy_class = holonomy(out.cocycle, loop);
        out.trivial = is_trivial(*out.holonomy_class);
    } catch (const Error& e) {
        out.warnings.push_back(std::string("holonomy: ") + e.what());
    }

    json report;
    report["cocycle"] = to_json(out.report);
    json jtr = json::array();
    for (const auto& [ij, t] : out.cocycle.transitions) {
        json j = to_json(t);
        j["i"] = ij.first;
        j["j"] = ij.second;
        jtr.push_back(j);
    }
    report["transitions"] = jtr;
    if (out.holonomy_class) {
        report["holonomy"] = to_json(*out.holonomy_class);
        report["is_trivial"] = out.trivial;
        json jkam = json::array();
        for (const auto& [ij, t] : out.cocycle.transitions) {
            json j;
            j["i"] = ij.first;
            j["j"] = ij.second;
            j["m"] = to_json(kam_adjoint(t.m));
            jkam.push_back(j);
        }
        report["kam_transitions"] = jkam;
    }
    report["warnings"] = out.warnings;
    out.report_path = detail::stage_path(cfg, "monodromy.json");
    write_text_file(out.report_path, report.dump(2) + "\n");

    out.svg_path = detail::stage_path(cfg, "cover.svg");
    write_text_file(out.svg_path, svg_cover(rects, out.cocycle, cfg.annulus.center));
    return out;
}

// ---------------------------------------------------------------------------
// run-all

struct RunManifest {
    json resolved_config;
    std::map<std::string, double> stage_seconds;
    std::vector<std::pair<std::string, std::string>> files;  // path, hash
    std::optional<std::array<std::int64_t, 3>> fingerprint;
    bool trivial = false;
    std::vector<std::string> warnings;
    std::string first_failure;  // empty on success
    std::string manifest_path;
};

inline json config_to_json(const RunConfig& cfg) {
    json j;
    j["model"] = {{"name", cfg.model}, {"energy", cfg.energy}};
    j["regime"] = to_json(cfg.regime());
    j["atlas"] = {{"name", cfg.atlas},
                  {"center", {cfg.annulus.center.x, cfg.annulus.center.y}},
                  {"r_min", cfg.annulus.r_min},
                  {"r_max", cfg.annulus.r_max},
                  {"s_shear", cfg.s_shear},
                  {"correction_scale", cfg.correction_scale}};
    j["loop"] = {{"count", cfg.loop_count},
                 {"radius", cfg.loop_radius},
                 {"triple_clusters", cfg.triple_clusters},
                 {"C1", cfg.C1}};
    j["noise"] = {{"kappa", cfg.noise_kappa}, {"power", cfg.noise_power}};
    j["detector"] = {{"degree", cfg.degree},
                     {"reject_threshold", cfg.reject_threshold},
                     {"min_coverage", cfg.min_coverage},
                     {"transition_tolerance", cfg.transition_tolerance},
                     {"max_residual_tol_h", cfg.max_residual_tol_h}};
    j["sieve"] = {{"k_max", cfg.k_max}, {"n_samples", cfg.n_samples},
                  {"grid_n", cfg.grid_n}};
    j["run"] = {{"seed", cfg.seed}, {"workers", cfg.workers}, {"blind", cfg.blind},
                {"out_dir", cfg.out_dir}};
    return j;
}

inline RunManifest run_all(const RunConfig& cfg) {
    using clock = std::chrono::steady_clock;
    detail::ensure_out_dir(cfg);
    RunManifest man;
    man.resolved_config = config_to_json(cfg);

    auto timed = [&](const std::string& name, auto&& fn) {
        const auto t0 = clock::now();
        fn();
        man.stage_seconds[name] =
            std::chrono::duration<double>(clock::now() - t0).count();
    };
    auto record = [&](const std::string& path) {
        if (!path.empty()) man.files.emplace_back(path, file_hash(path));
    };

    try {
        SieveStageResult sieve;
        timed("sieve", [&] { sieve = run_sieve(cfg); });
        record(sieve.csv_path);
        for (const auto& w : sieve.warnings) man.warnings.push_back(w);

        SynthStageResult synth;
        timed("synth", [&] { synth = run_synth(cfg); });
        for (const auto& p : synth.rect_csv_paths) record(p);
        record(synth.band_csv_path);
        record(synth.manifest_path);

        std::vector<GoodRectangle> rects;
        for (const auto& job : synth.band.jobs) rects.push_back(job.rect);

        DetectStageResult detect;
        timed("detect", [&] { detect = run_detect(cfg, synth.band.merged, rects); });
        record(detect.fits_path);
        record(detect.svg_path);
        for (std::size_t i = 0; i < detect.errors.size(); ++i)
            if (!detect.errors[i].empty())
                man.warnings.push_back("rect " + std::to_string(i) + ": " +
                                       detect.errors[i]);

        MonodromyStageResult mono;
        timed("monodromy", [&] { mono = run_monodromy(cfg, detect.fits, rects); });
        record(mono.report_path);
        record(mono.svg_path);
        for (const auto& w : mono.warnings) man.warnings.push_back(w);
        if (mono.holonomy_class) {
            man.fingerprint = mono.holonomy_class->fingerprint();
            man.trivial = mono.trivial;
        } else {
            man.first_failure = "holonomy not computed";
        }
        if (!mono.report.pass) man.first_failure = "cocycle check failed";
    } catch (const Error& e) {
        man.first_failure = e.what();
    }

    json j;
    j["config"] = man.resolved_config;
    j["stage_seconds"] = man.stage_seconds;
    json jfiles = json::array();
    for (const auto& [p, h] : man.files) jfiles.push_back({{"path", p}, {"hash", h}});
    j["files"] = jfiles;
    if (man.fingerprint)
        j["fingerprint"] = *man.fingerprint;
    j["is_trivial"] = man.trivial;
    j["warnings"] = man.warnings;
    j["failure"] = man.first_failure;
    man.manifest_path = detail::stage_path(cfg, "manifest.json");
    write_text_file(man.manifest_path, j.dump(2) + "\n");

    if (!man.first_failure.empty()) throw DetectionError("run-all: " + man.first_failure);
    return man;
}

}  // namespace specmono
