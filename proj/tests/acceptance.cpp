// Acceptance gate: one pass/fail line per criterion. Exit status is the
// number of failed criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "specmono/specmono.hpp"

using namespace specmono;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::printf("criterion %2d: %s  %s\n", criterion, pass ? "PASS" : "FAIL",
                detail.c_str());
    if (!pass) ++failures;
    std::fflush(stdout);
}

std::string out_dir(const std::string& tag) {
    const auto dir = std::filesystem::temp_directory_path() / ("specmono_acc_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

RunConfig base_config(const std::string& tag) {
    RunConfig cfg;  // h = 1e-4, delta = 0.5, eps = h^delta, lambda = 1e-6,
                    // alpha = 1e-2, kappa = 0.01, power = 2, 8 loop rectangles
    cfg.out_dir = out_dir(tag);
    cfg.triple_clusters = 2;
    cfg.n_samples = 32;
    cfg.k_max = 100;
    return cfg;
}

struct PipelineOutcome {
    SynthStageResult synth;
    DetectStageResult detect;
    MonodromyStageResult mono;
    std::vector<GoodRectangle> rects;
    double seconds = 0.0;
};

PipelineOutcome full_run(const RunConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    PipelineOutcome out;
    out.synth = run_synth(cfg);
    for (const auto& job : out.synth.band.jobs) out.rects.push_back(job.rect);
    out.detect = run_detect(cfg, out.synth.band.merged, out.rects);
    out.mono = run_monodromy(cfg, out.detect.fits, out.rects);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

double max_rounding_error(const CechCocycle& cocycle) {
    double m = 0.0;
    for (const auto& [ij, t] : cocycle.transitions) m = std::max(m, t.rounding_error);
    return m;
}

std::string fp_str(const std::array<std::int64_t, 3>& fp) {
    return "(" + std::to_string(fp[0]) + "," + std::to_string(fp[1]) + "," +
           std::to_string(fp[2]) + ")";
}

// Maximum transition rounding error over a short 3-rectangle arc, at the
// given h. Isolates the integrality sharpening from loop topology.
double arc_max_rounding(double h, int degree) {
    RunConfig cfg = base_config("arc");
    cfg.h = h;
    cfg.degree = degree;
    const SemiclassicalRegime regime = cfg.regime();
    const auto atlas = atlas_from_config(cfg);
    const double rho = std::pow(h, cfg.delta) / cfg.C1;
    const double r = cfg.loop_radius;
    const double base = two_pi / 4.0;  // quiet arc away from the branch cut
    const double step = 1.2 * rho / r;
    std::vector<std::pair<double, double>> centers;
    for (int s = -1; s <= 1; ++s)
        centers.emplace_back(cfg.annulus.center.x + r * std::cos(base + s * step),
                             cfg.annulus.center.y + r * std::sin(base + s * step));
    const auto band =
        synthesize_band(atlas, centers, regime, cfg.C1, cfg.noise_kappa, cfg.noise_power, cfg.seed);

    std::vector<ChartFit> fits;
    for (const auto& job : band.jobs) {
        const auto cloud = rescale(band.merged, job.rect);
        const auto labeling = label_lattice(cloud, detect_basis(cloud));
        fits.push_back(fit_chart(cloud, labeling, cfg.degree, regime, 1e9));
    }
    double worst = 0.0;
    for (int i = 0; i + 1 < 3; ++i) {
        const Vec2 mid = (fits[std::size_t(i)].rect.center +
                          fits[std::size_t(i) + 1].rect.center) / 2.0;
        for (const auto& t : {transition(fits[std::size_t(i)], fits[std::size_t(i) + 1], mid, 0.49),
                              transition(fits[std::size_t(i) + 1], fits[std::size_t(i)], mid, 0.49)})
            worst = std::max(worst, t.rounding_error);
    }
    return worst;
}

Mat2i random_unimodular(std::uint64_t seed, std::uint64_t trial, int steps = 6) {
    Mat2i m = Mat2i::identity();
    for (int step = 0; step < steps; ++step) {
        const auto pick = rng::hash(seed, trial, std::uint64_t(step)) % 3;
        Mat2i g;
        if (pick == 0) g = {1, 1, 0, 1};
        else if (pick == 1) g = {1, 0, 1, 1};
        else g = {0, -1, 1, 0};
        const Mat2i next = m * g;
        const auto big = std::max(std::max(std::abs(next.a), std::abs(next.b)),
                                  std::max(std::abs(next.c), std::abs(next.d)));
        if (big <= 10) m = next;
    }
    return m;
}

CechCocycle transitions_between(const std::vector<ChartFit>& fits,
                                const std::vector<GoodRectangle>& rects, double eps,
                                double tolerance) {
    CechCocycle cocycle;
    for (std::size_t i = 0; i < fits.size(); ++i) cocycle.cover.push_back(int(i));
    for (std::size_t i = 0; i < fits.size(); ++i) {
        for (std::size_t j = 0; j < fits.size(); ++j) {
            if (i == j) continue;
            const Rect ri = rects[i].rescaled(eps), rj = rects[j].rescaled(eps);
            const Vec2 mid = (ri.center + rj.center) / 2.0;
            if (!ri.contains(mid) || !rj.contains(mid)) continue;
            cocycle.transitions[{int(i), int(j)}] = transition(fits[i], fits[j], mid, tolerance);
        }
    }
    return cocycle;
}

}  // namespace

int main() {
    const std::array<std::int64_t, 3> ff_fp{1, 2, 1};
    const std::array<std::int64_t, 3> triv_fp{1, 2, 0};

    // ---- criteria 1 and 2: end-to-end monodromy recovery -------------------
    PipelineOutcome ff, triv;
    try {
        ff = full_run(base_config("ff"));
        bool pass = ff.mono.holonomy_class && ff.mono.holonomy_class->fingerprint() == ff_fp &&
                    !ff.mono.trivial;
        const double rounding = max_rounding_error(ff.mono.cocycle);
        pass = pass && rounding <= 0.05;
        std::size_t min_pts = std::size_t(-1), max_pts = 0;
        for (int i = 0; i < 8; ++i) {
            min_pts = std::min(min_pts, ff.synth.band.jobs[std::size_t(i)].n_points);
            max_pts = std::max(max_pts, ff.synth.band.jobs[std::size_t(i)].n_points);
        }
        // density per rectangle is (2 rho / h)^2 times the local Jacobian
        // determinant, which varies by ~15% around the loop
        pass = pass && min_pts > 8000 && max_pts < 13000 && ff.seconds < 60.0;
        report(1, pass,
               "focus-focus fingerprint " +
                   (ff.mono.holonomy_class ? fp_str(ff.mono.holonomy_class->fingerprint())
                                           : std::string("(none)")) +
                   ", max rounding " + std::to_string(rounding) + ", " +
                   std::to_string(min_pts) + "-" + std::to_string(max_pts) +
                   " points/rectangle, " + std::to_string(ff.seconds) + " s");
    } catch (const std::exception& e) {
        report(1, false, e.what());
    }
    try {
        RunConfig cfg = base_config("trivial");
        cfg.atlas = "trivial";
        triv = full_run(cfg);
        const double rounding = max_rounding_error(triv.mono.cocycle);
        const bool pass = triv.mono.holonomy_class &&
                          triv.mono.holonomy_class->fingerprint() == triv_fp &&
                          triv.mono.trivial && rounding <= 0.05;
        report(2, pass,
               "trivial-atlas fingerprint " +
                   (triv.mono.holonomy_class ? fp_str(triv.mono.holonomy_class->fingerprint())
                                             : std::string("(none)")) +
                   ", max rounding " + std::to_string(rounding));
    } catch (const std::exception& e) {
        report(2, false, e.what());
    }

    // ---- criterion 3: integrality sharpening under h-halving ---------------
    try {
        std::vector<double> errs;
        for (double h : {1e-4, 5e-5, 2.5e-5, 1.25e-5}) errs.push_back(arc_max_rounding(h, 2));
        bool pass = true;
        std::string detail = "max rounding by halving:";
        for (std::size_t k = 0; k < errs.size(); ++k) {
            detail += " " + std::to_string(errs[k]);
            if (k > 0 && !(errs[k - 1] / errs[k] >= 1.3)) pass = false;
        }
        report(3, pass, detail);
    } catch (const std::exception& e) {
        report(3, false, e.what());
    }

    // ---- criterion 4: parameter independence -------------------------------
    try {
        RunConfig half = base_config("half_h");
        half.h /= 2.0;
        half.loop_count = 12;  // keep adjacent rectangles overlapping at the smaller window
        const auto at_half = full_run(half);

        RunConfig small_l = base_config("small_lambda");
        small_l.lambda /= 10.0;
        const auto at_small = full_run(small_l);

        const bool pass = at_half.mono.holonomy_class && at_small.mono.holonomy_class &&
                          ff.mono.holonomy_class &&
                          at_half.mono.holonomy_class->fingerprint() ==
                              ff.mono.holonomy_class->fingerprint() &&
                          at_small.mono.holonomy_class->fingerprint() ==
                              ff.mono.holonomy_class->fingerprint();
        report(4, pass,
               "h/2 fingerprint " +
                   (at_half.mono.holonomy_class
                        ? fp_str(at_half.mono.holonomy_class->fingerprint())
                        : std::string("(none)")) +
                   ", lambda/10 fingerprint " +
                   (at_small.mono.holonomy_class
                        ? fp_str(at_small.mono.holonomy_class->fingerprint())
                        : std::string("(none)")));
    } catch (const std::exception& e) {
        report(4, false, e.what());
    }

    // ---- criterion 5: adjoint correspondence -------------------------------
    try {
        const auto atlas = build_focus_focus_atlas(Annulus{}, RunConfig{}.regime());
        CechCocycle spectral, kam;
        for (const auto& [ij, m] : atlas.planted_transitions) {
            spectral.transitions[ij] = {m, m.to_real(), 0.0};
            kam.transitions[ij] = {kam_adjoint(m), kam_adjoint(m).to_real(), 0.0};
        }
        const auto fp_s = holonomy(spectral, {0, 1, 2, 3, 0}).fingerprint();
        const auto fp_k = holonomy(kam, {0, 1, 2, 3, 0}).fingerprint();
        bool involutive = true;
        for (std::uint64_t i = 0; i < 100; ++i) {
            const Mat2i r = random_unimodular(17, i);
            if (!(kam_adjoint(kam_adjoint(r)) == r)) involutive = false;
        }
        report(5, fp_s == fp_k && fp_s == ff_fp && involutive,
               "spectral " + fp_str(fp_s) + " vs KAM " + fp_str(fp_k) +
                   (involutive ? ", involution holds on 100 samples" : ", involution FAILED"));
    } catch (const std::exception& e) {
        report(5, false, e.what());
    }

    // ---- criterion 6: cocycle exactness on both atlases --------------------
    try {
        const bool pass = ff.mono.report.pass && triv.mono.report.pass &&
                          ff.mono.report.triple_checks > 0 && triv.mono.report.triple_checks > 0 &&
                          ff.mono.report.inverse_checks >= 8 && triv.mono.report.inverse_checks >= 8;
        report(6, pass,
               "focus-focus: " + std::to_string(ff.mono.report.inverse_checks) + " inverse / " +
                   std::to_string(ff.mono.report.triple_checks) + " triple, trivial: " +
                   std::to_string(triv.mono.report.inverse_checks) + " inverse / " +
                   std::to_string(triv.mono.report.triple_checks) + " triple, all exact");
    } catch (const std::exception& e) {
        report(6, false, e.what());
    }

    // ---- criterion 7: ergodic averaging ------------------------------------
    try {
        const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
        IntegrableModel m = make_linear_degenerate_model(1.0, phi);
        m.q = [](AnglePoint x, ActionPoint) { return std::cos(x.x1); };
        const double tavg = torus_average(m, {0.5, 0.5});
        bool pass = std::abs(tavg) < 1e-13;
        std::string detail = "errors vs closed form:";
        for (double T : {1e2, 1e3, 1e4}) {
            const double got = time_average(m, {0.5, 0.5}, {0.0, 0.0}, T);
            const double closed = 2.0 * std::sin(T / 2.0) / T;
            detail += " " + std::to_string(std::abs(got - closed));
            if (std::abs(got - closed) > 1e-12) pass = false;
            if (std::abs(got - tavg) > 2.0 / T) pass = false;
        }
        report(7, pass, detail);
    } catch (const std::exception& e) {
        report(7, false, e.what());
    }

    // ---- criterion 8: Diophantine complement measure scales like alpha -----
    try {
        const Rect box{{1.5, 1.5}, {0.5, 0.5}};
        std::vector<double> fracs;
        for (double alpha : {0.02, 0.04, 0.08})
            fracs.push_back(diophantine_complement_measure(box, alpha, 1.0, 300, 100000, 2024));
        const double r1 = fracs[1] / fracs[0], r2 = fracs[2] / fracs[1];
        const bool pass = fracs[0] > 0.0 && r1 >= 1.5 && r1 <= 2.5 && r2 >= 1.5 && r2 <= 2.5;
        report(8, pass,
               "fractions " + std::to_string(fracs[0]) + " / " + std::to_string(fracs[1]) +
                   " / " + std::to_string(fracs[2]) + ", ratios " + std::to_string(r1) + ", " +
                   std::to_string(r2));
    } catch (const std::exception& e) {
        report(8, false, e.what());
    }

    // ---- criterion 9: detection robustness ---------------------------------
    try {
        RunConfig cfg = base_config("robust");
        cfg.noise_kappa = 0.01;
        cfg.noise_power = 1.0;  // noise at 1% of a lattice cell
        const SemiclassicalRegime regime = cfg.regime();
        const auto atlas = atlas_from_config(cfg);
        const Vec2 c = cfg.annulus.center;
        const auto rect = good_rectangle(c.x, c.y + cfg.loop_radius, regime, cfg.C1);
        const auto ds = synthesize_rectangle(atlas, chart_for_center(atlas, {rect.E, rect.K}),
                                             rect, regime, cfg.noise_kappa, cfg.noise_power,
                                             cfg.seed);
        const auto cloud = rescale(ds, rect);
        const auto labeling = label_lattice(cloud, detect_basis(cloud));
        const bool full_coverage = labeling.coverage == 1.0;

        RescaledCloud random;
        random.rect = cloud.rect;
        random.regime = regime;
        for (std::size_t i = 0; i < cloud.points.size(); ++i) {
            random.points.push_back(
                {cloud.rect.center.x + cloud.rect.half.x * 2.0 * (rng::uniform(5, i, 0) - 0.5),
                 cloud.rect.center.y + cloud.rect.half.y * 2.0 * (rng::uniform(5, i, 1) - 0.5)});
        }
        bool rejected = false;
        double stray_coverage = -1.0;
        try {
            label_lattice(random, BasisPair{{regime.h, 0.0}, {0.0, regime.h}});
        } catch (const LabelingError& e) {
            rejected = true;
            stray_coverage = e.fraction_labeled;
        }
        report(9, full_coverage && rejected,
               "noisy coverage " + std::to_string(labeling.coverage) +
                   ", random cloud labeled fraction " + std::to_string(stray_coverage) +
                   " (rejected)");
    } catch (const std::exception& e) {
        report(9, false, e.what());
    }

    // ---- criterion 10: GL(2,Z) relabeling equivariance ---------------------
    try {
        std::vector<ChartFit> fits;
        for (const auto& f : ff.detect.fits) fits.push_back(*f);
        bool pass = true;
        for (std::uint64_t trial = 0; trial < 20 && pass; ++trial) {
            std::vector<ChartFit> moved;
            for (std::size_t j = 0; j < fits.size(); ++j) {
                const Mat2i B = random_unimodular(31, trial * 100 + j, 2);
                const std::array<std::int64_t, 2> t{
                    std::int64_t(rng::hash(32, trial, j) % 7) - 3,
                    std::int64_t(rng::hash(33, trial, j) % 7) - 3};
                moved.push_back(relabel_fit(fits[j], B, t));
            }
            const auto cocycle = transitions_between(moved, ff.rects, base_config("x").regime().eps, 0.49);
            std::vector<int> loop;
            for (int i = 0; i < 8; ++i) loop.push_back(i);
            loop.push_back(0);
            if (!cocycle_check(cocycle).pass) pass = false;
            if (holonomy(cocycle, loop).fingerprint() != ff_fp) pass = false;
        }
        report(10, pass, "20 random chart-wise relabelings leave the fingerprint at " +
                             fp_str(ff_fp));
    } catch (const std::exception& e) {
        report(10, false, e.what());
    }

    std::printf("%s\n", failures == 0 ? "ALL CRITERIA PASSED" : "CRITERIA FAILED");
    return failures;
}
