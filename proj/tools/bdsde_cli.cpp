#include <cstdio>
#include <exception>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bdsde/experiments.hpp"
#include "bdsde/stats.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitTolerance = 4;

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    long long seed = -1;
    unsigned jobs = 2;
    std::vector<std::string> overrides;  // section.key=value
};

int execute(const std::string& kind, const CommonArgs& args) {
    try {
        bdsde::set_default_jobs(args.jobs);
        bdsde::Config cfg = args.config_path.empty() ? bdsde::Config{}
                                                     : bdsde::Config::load_file(args.config_path);
        cfg.set("experiment", "kind", kind);
        if (args.seed >= 0) cfg.set("experiment", "seed", std::to_string(args.seed));
        for (const auto& ov : args.overrides) {
            const auto dot = ov.find('.');
            const auto eq = ov.find('=', dot == std::string::npos ? 0 : dot);
            if (dot == std::string::npos || eq == std::string::npos || dot > eq)
                throw bdsde::ConfigError("override must look like section.key=value", {ov});
            cfg.set(ov.substr(0, dot), ov.substr(dot + 1, eq - dot - 1), ov.substr(eq + 1));
        }

        auto manifest = bdsde::run(cfg, args.out_dir);
        for (const auto& a : manifest.assertions)
            std::printf("[%s] %s: %.6g (threshold %.6g)\n", a.pass ? "PASS" : "FAIL",
                        a.name.c_str(), a.value, a.threshold);
        std::printf("%s: wrote %zu outputs to %s (%.0f ms)\n", kind.c_str(),
                    manifest.outputs.size(), args.out_dir.c_str(), manifest.wall_ms);
        return manifest.pass ? kExitPass : kExitTolerance;
    } catch (const bdsde::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        for (const auto& k : e.keys) std::fprintf(stderr, "  offending key: %s\n", k.c_str());
        return kExitConfig;
    } catch (const bdsde::NumericalError& e) {
        std::fprintf(stderr, "numerical error: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumerical;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Backward doubly stochastic solvers with an SPDE finite-difference dual"};
    app.require_subcommand(1);

    CommonArgs args;
    const char* kinds[] = {"qv-check",  "ito-residual",   "solve-bdsde", "solve-spde",
                           "cross-validate", "oracle",    "picard",      "horizon-cauchy",
                           "periodic",  "stationary"};
    std::string chosen;
    for (const char* kind : kinds) {
        auto* sub = app.add_subcommand(kind, std::string("run the ") + kind + " experiment");
        sub->add_option("--config", args.config_path, "experiment config file");
        sub->add_option("--seed", args.seed, "override the master seed");
        sub->add_option("--out-dir", args.out_dir, "output directory");
        sub->add_option("--jobs", args.jobs, "worker threads");
        sub->add_option("--set", args.overrides,
                        "override a config entry, e.g. --set grids.n_paths=4096");
        sub->callback([kind, &chosen] { chosen = kind; });
    }

    auto* plot = app.add_subcommand("plot", "re-emit SVG plots from a run's manifest");
    std::string manifest_dir = "out";
    plot->add_option("--out-dir", manifest_dir, "directory holding manifest.json");
    plot->callback([&chosen] { chosen = "plot"; });

    CLI11_PARSE(app, argc, argv);

    if (chosen == "plot") {
        try {
            std::ifstream is(manifest_dir + "/manifest.json");
            if (!is) throw bdsde::InvalidArgument("no manifest.json in " + manifest_dir);
            nlohmann::json j = nlohmann::json::parse(is);
            bdsde::RunManifest m;
            m.kind = j.at("kind").get<std::string>();
            m.outputs = j.at("outputs").get<std::vector<std::string>>();
            auto written = bdsde::emit_plots(m, manifest_dir);
            for (const auto& p : written) std::printf("wrote %s/%s\n", manifest_dir.c_str(), p.c_str());
            return kExitPass;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: %s\n", e.what());
            return kExitNumerical;
        }
    }
    return execute(chosen, args);
}
