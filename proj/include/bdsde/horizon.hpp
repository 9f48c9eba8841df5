#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/driver.hpp"
#include "bdsde/field.hpp"
#include "bdsde/sde.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

struct HorizonParams {
    /// Discount K' > 0; 0 means "use mu/2 and re-check the margin".
    double k_prime = 0.0;
    std::vector<double> ladder;       // increasing horizons n_1 < ... < n_J
    std::size_t steps_per_unit = 64;  // shared grid density across the ladder
    std::size_t paths = 2048;
    double spread_lo = -1.0, spread_hi = 1.0;
    BasisSpec basis;
    std::size_t n_inner = 0;
    /// Independent Brownian ensembles per logical run; the identity checks
    /// report the replica mean and the stderr of that mean.
    std::size_t replicas = 4;
};

/// 2 mu - K' - K/(1-alpha) - K M from the driver and kernel metadata.
double dissipativity_margin(const Driver& driver, const CovarianceKernel& kernel, double k_prime);

struct HorizonReport {
    double k_prime = 0.0;
    double margin = 0.0;
    std::vector<double> horizons;
    /// mean over paths of sup_{t <= n_j} e^{-K' t} |Y^(j+1)_t - Y^(j)_t|^2.
    std::vector<double> sup_differences;
    /// e^{-K' n_j} E|Y_{n_j}|^2 read from the longest-horizon run.
    std::vector<double> discounted_tail;
    std::vector<double> probe_x;
    std::vector<double> u0;  // final-horizon u(0, x) at the probes
    nlohmann::json to_json() const;
};

/// Increasing-horizon truncation of the infinite-horizon equation: solves
/// the finite BDSDE with zero terminal on [0, n_j] for each rung,
/// realizations and Brownian draws shared across rungs (extend, never
/// resample), and reports the discounted Cauchy differences. Refuses to
/// run when the dissipativity margin is not positive.
HorizonReport solve_horizon(const Driver& driver, const SdeCoefficients& coeffs,
                            const CovarianceKernel& kernel, const HorizonParams& params,
                            const std::vector<double>& probe_x, std::uint64_t seed);

struct PeriodicityReport {
    double tau = 0.0;
    double horizon = 0.0;
    double max_discrepancy = 0.0;
    double max_combined_se = 0.0;
    double truncation_estimate = 0.0;
    std::vector<double> probe_t, probe_x;
    std::vector<double> discrepancy;  // probe-major (t outer, x inner)
    std::vector<double> combined_se;
    nlohmann::json to_json() const;
};

/// Random-periodicity check: u' built from the tau-shifted realization
/// (fresh Brownian ensemble) against u(t+tau, .) from the original run.
/// The driver must be tau-periodic and tau must lie on the grid.
PeriodicityReport verify_periodicity(const Driver& driver, const SdeCoefficients& coeffs,
                                     const CovarianceKernel& kernel, const HorizonParams& params,
                                     const std::vector<double>& probe_t,
                                     const std::vector<double>& probe_x, std::uint64_t seed);

struct StationaryReport {
    double anchor_T = 0.0;
    double probe_t = 0.0;
    std::vector<double> shifts;
    std::vector<double> shift_discrepancy;   // max over probe x per shift
    std::vector<double> shift_combined_se;
    double t_vs_2t_discrepancy = 0.0;
    double t_vs_2t_se = 0.0;
    double truncation_scale = 0.0;           // e^{-mu T}
    bool measurability_ok = false;           // future resampling left v(t,.) unchanged
    nlohmann::json to_json() const;
};

/// Stationary solution via time reversal: v(t,x) = Y_{T-t}^{T-t,x} under
/// B(s,.) = B~(T-s,.) - B~(T,.). Verifies the shift identity for a ladder
/// of r values, T-independence against the 2T anchor, and that resampling
/// the pre-reversal future leaves v(t,.) bitwise unchanged. Requires a
/// time-independent driver.
StationaryReport stationary_solution(const Driver& driver, const SdeCoefficients& coeffs,
                                     const CovarianceKernel& kernel, const HorizonParams& params,
                                     double anchor_T, double probe_t,
                                     const std::vector<double>& shifts,
                                     const std::vector<double>& probe_x, std::uint64_t seed);

} // namespace bdsde
