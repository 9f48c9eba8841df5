#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/config.hpp"
#include "bdsde/kernels.hpp"

namespace bdsde {

inline constexpr const char* kVersion = "0.1.0";

/// One declared tolerance check: pass iff value <= threshold.
struct Assertion {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct RunManifest {
    std::string kind;
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
    std::string version = kVersion;
    double wall_ms = 0.0;
    std::vector<std::string> outputs;  // paths relative to out_dir
    std::vector<Assertion> assertions;
    bool pass = true;
    nlohmann::json to_json() const;
    void write(const std::string& out_dir) const;
};

/// Executes the experiment named by [experiment] kind, writes its outputs
/// and manifest under out_dir, and evaluates the declared tolerances.
/// Throws ConfigError for unresolved names, NumericalError for numerical
/// failures; tolerance failures are reported in the manifest (pass =
/// false), the CLI maps them to its own exit code.
RunManifest run(const Config& cfg, const std::string& out_dir);

/// Re-emits the SVG plots for a completed run from its CSV outputs.
std::vector<std::string> emit_plots(const RunManifest& manifest, const std::string& out_dir);

/// Closed-form references shared by runners and the acceptance suite.
namespace closed_form {

/// Heat-smoothed Gaussian bump: amp w / sqrt(w^2 + v) exp(-(x-c)^2 / 2(w^2+v)).
double heat_bump(double amp, double center, double width, double variance, double x);

/// The bounded periodic solution of y' = mu y - sin(2 pi t / tau):
/// amplitude 1/sqrt(mu^2 + omega^2), phase atan2(omega, mu).
double periodic_ode_bounded(double mu, double tau, double t);

/// The zero-terminal truncation of the same equation on [0, horizon].
double periodic_ode_truncated(double mu, double tau, double horizon, double t);

} // namespace closed_form

/// Registry builder shared by the runners and tests.
CovarianceKernel kernel_from_config(const Config& cfg);

} // namespace bdsde
