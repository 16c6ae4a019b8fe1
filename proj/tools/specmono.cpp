// Command-line front end: sieve | synth | detect | monodromy | run-all.
//
// Exit codes: 0 success, 2 config error, 3 I/O error, 4 numeric/detection
// failure.

#include <cstdio>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "specmono/specmono.hpp"

namespace {

using namespace specmono;

struct CommonOpts {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool blind = false;
};

RunConfig resolve_config(const CommonOpts& opt) {
    RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (opt.seed) cfg.seed = *opt.seed;
    if (opt.workers) cfg.workers = *opt.workers;
    if (opt.blind) cfg.blind = true;
    return cfg;
}

void add_common(CLI::App* sub, CommonOpts& opt) {
    sub->add_option("--config", opt.config_path, "run configuration file");
    sub->add_option("--out", opt.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opt.seed, "RNG seed (overrides config)");
    sub->add_option("--workers", opt.workers, "worker thread count (overrides config)");
    sub->add_flag("--blind", opt.blind, "strip ground-truth columns from CSV output");
}

// Reload the rectangles + merged dataset persisted by a previous synth run.
std::pair<SpectrumDataset, std::vector<GoodRectangle>> load_synth(const RunConfig& cfg) {
    const std::string manifest_path =
        (std::filesystem::path(cfg.out_dir) / "synth_manifest.json").string();
    const json manifest = json::parse(read_text_file(manifest_path));
    const SemiclassicalRegime regime = regime_from_json(manifest.at("regime"));
    SpectrumDataset ds = read_spectrum_csv(manifest.at("band_csv"), regime);
    std::vector<GoodRectangle> rects;
    for (const auto& jr : manifest.at("rectangles"))
        rects.push_back(rectangle_from_json(jr));
    return {std::move(ds), std::move(rects)};
}

int dispatch(const std::string& verb, const CommonOpts& opt) {
    const RunConfig cfg = resolve_config(opt);
    if (verb == "sieve") {
        const auto res = run_sieve(cfg);
        std::printf("sieve: %zu good values retained of %d sampled -> %s\n",
                    res.sieve.retained.size(), res.sieve.n_sampled,
                    res.csv_path.c_str());
        for (const auto& w : res.warnings) std::printf("warning: %s\n", w.c_str());
        return 0;
    }
    if (verb == "synth") {
        const auto res = run_synth(cfg);
        std::printf("synth: %zu points across %zu rectangles -> %s\n",
                    res.band.merged.points.size(), res.band.jobs.size(),
                    res.band_csv_path.c_str());
        return 0;
    }
    if (verb == "detect") {
        auto [dataset, rects] = load_synth(cfg);
        const auto res = run_detect(cfg, dataset, rects);
        std::size_t ok = 0;
        for (std::size_t i = 0; i < res.fits.size(); ++i) {
            if (res.fits[i]) {
                ++ok;
                std::printf("rect %2zu: degree %d, residual rms %.3e h, max %.3e h\n", i,
                            res.fits[i]->degree,
                            res.fits[i]->residual_rms / res.fits[i]->h,
                            res.fits[i]->residual_max / res.fits[i]->h);
            } else {
                std::printf("rect %2zu: FAILED (%s)\n", i, res.errors[i].c_str());
            }
        }
        std::printf("detect: %zu/%zu rectangles fitted -> %s\n", ok, res.fits.size(),
                    res.fits_path.c_str());
        return ok == res.fits.size() ? 0 : 4;
    }
    if (verb == "monodromy") {
        auto [dataset, rects] = load_synth(cfg);
        const auto detect = run_detect(cfg, dataset, rects);
        const auto res = run_monodromy(cfg, detect.fits, rects);
        std::printf("cocycle: %s (%d inverse, %d triple checks)\n",
                    res.report.pass ? "pass" : "FAIL", res.report.inverse_checks,
                    res.report.triple_checks);
        if (res.holonomy_class) {
            const auto fp = res.holonomy_class->fingerprint();
            std::printf("holonomy fingerprint: (%lld, %lld, %lld), trivial: %s\n",
                        (long long)fp[0], (long long)fp[1], (long long)fp[2],
                        res.trivial ? "true" : "false");
        }
        for (const auto& w : res.warnings) std::printf("warning: %s\n", w.c_str());
        return (res.report.pass && res.holonomy_class) ? 0 : 4;
    }
    if (verb == "run-all") {
        const RunManifest man = run_all(cfg);
        if (man.fingerprint) {
            std::printf("fingerprint: (%lld, %lld, %lld), trivial: %s\n",
                        (long long)(*man.fingerprint)[0], (long long)(*man.fingerprint)[1],
                        (long long)(*man.fingerprint)[2], man.trivial ? "true" : "false");
        }
        std::printf("manifest: %s\n", man.manifest_path.c_str());
        for (const auto& w : man.warnings) std::printf("warning: %s\n", w.c_str());
        return 0;
    }
    std::fprintf(stderr, "unknown verb: %s\n", verb.c_str());
    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"spectral monodromy laboratory"};
    app.require_subcommand(1);

    CommonOpts opt;
    std::string verb;
    for (const char* name : {"sieve", "synth", "detect", "monodromy", "run-all"}) {
        CLI::App* sub = app.add_subcommand(name);
        add_common(sub, opt);
        sub->callback([&verb, name] { verb = name; });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return dispatch(verb, opt);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return 3;
    } catch (const specmono::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
}
