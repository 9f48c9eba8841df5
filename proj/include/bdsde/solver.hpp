#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/basis.hpp"
#include "bdsde/driver.hpp"
#include "bdsde/field.hpp"
#include "bdsde/sde.hpp"

namespace bdsde {

struct SchemeConfig {
    BasisSpec basis;
    /// Fixed-point refinements of each step, replacing the (Y_{k+1}, Z_k)
    /// arguments of (f,g) by the step-k regressands (implicit variant).
    std::size_t n_inner = 0;
    /// Subtract the F_k-measurable control Yhat_{k+1}(X_k) from the Z
    /// regressand; same conditional expectation, far lower variance.
    bool z_control_variate = true;
};

/// Discrete-time backward solution on a fixed field realization: per-path
/// (Y, Z) plus the per-step regression surfaces, so u(t_k, x) is
/// queryable at arbitrary x.
class BackwardSolution {
public:
    const TimeGrid& grid() const { return grid_; }
    std::size_t paths() const { return paths_; }
    std::size_t dim() const { return dim_; }
    std::uint64_t realization_id() const { return realization_id_; }

    double y(std::size_t m, std::size_t k) const { return y_[m * (grid_.steps() + 1) + k]; }
    std::span<const double> z(std::size_t m, std::size_t k) const {
        return {z_.data() + (m * grid_.steps() + k) * dim_, dim_};
    }

    /// The regression surface u(t_k, .); at k = N this is the terminal
    /// condition itself.
    double surface(std::size_t k, std::span<const double> x) const;
    double surface1(std::size_t k, double x) const {
        return surface(k, std::span<const double>(&x, 1));
    }
    double surface_stderr(std::size_t k, std::span<const double> x) const;
    double surface_stderr1(std::size_t k, double x) const {
        return surface_stderr(k, std::span<const double>(&x, 1));
    }
    /// Spatial gradient of the step-k surface.
    void surface_gradient(std::size_t k, std::span<const double> x, std::span<double> out) const;
    /// Z-component surface at step k.
    double z_surface(std::size_t k, std::size_t comp, std::span<const double> x) const;

    const RegressionTable& y_table(std::size_t k) const { return y_tables_.at(k); }

    /// Common container convention for the discrete (Y, Z) fields; the
    /// regression tables are derived artifacts and are not stored.
    void serialize(std::ostream& os) const;
    static BackwardSolution deserialize(std::istream& is);

    friend BackwardSolution solve(const Driver&, const TerminalCondition&, const PathBundle&,
                                  const FieldRealization&, const SchemeConfig&);
    friend struct SolverAccess;

private:
    TimeGrid grid_;
    std::size_t paths_ = 0, dim_ = 1;
    std::uint64_t realization_id_ = 0;
    TerminalCondition terminal_ = TerminalCondition::zero();
    std::vector<double> y_;                          // paths * (steps+1)
    std::vector<double> z_;                          // paths * steps * dim
    std::vector<RegressionTable> y_tables_;          // steps entries
    std::vector<std::vector<RegressionTable>> z_tables_;
};

/// Least-squares Monte Carlo backward recursion conditioned on one field
/// realization:
///   Y_N = phi(X_N)
///   Z_k = dt^-1 Regress[(Y_{k+1} - cv) dW_k | X_k]
///   Y_k = Regress[Y_{k+1} + f(t_{k+1},X_{k+1},Y_{k+1},Z_k) dt
///                 + g(t_{k+1},X_{k+1},Y_{k+1},Z_k) dB_k(X_{k+1}) | X_k]
/// with the right-endpoint field evaluation of the backward integral. The
/// recursion only reads field increments on [t_k, T], so Y_k depends on
/// X_k and future noise only.
BackwardSolution solve(const Driver& driver, const TerminalCondition& terminal,
                       const PathBundle& bundle, const FieldRealization& field,
                       const SchemeConfig& config);

struct WeightedNormConfig {
    /// beta = 0 and a = 0 mean "use the contraction recipe":
    /// a with K a + alpha < 1, then beta = 2/a + K(a+1)/(K a + alpha).
    double beta = 0.0;
    double a = 0.0;
};

struct ContractionReport {
    double beta = 0.0;
    double a = 0.0;
    double rho_bound = 0.0;     // K a + alpha from the driver metadata
    std::vector<double> distances;  // ||(Y^n - Y^{n-1}, Z^n - Z^{n-1})||_{2,beta}
    std::vector<double> ratios;     // successive distance ratios (from n=2)
    nlohmann::json to_json() const;
};

/// Outer Picard iteration (Y^0,Z^0) = (0,0), one full backward regression
/// pass per application with frozen (y,z) driver arguments; reports the
/// empirical weighted distances between successive iterates.
ContractionReport picard_monitor(const Driver& driver, const TerminalCondition& terminal,
                                 const PathBundle& bundle, const FieldRealization& field,
                                 const SchemeConfig& config, std::size_t n_iter,
                                 const WeightedNormConfig& norm);

/// Z through the variational flow: grad of the step-k surface times
/// grad X_k (grad X_k)^{-1} sigma(X_k), per path and step. Requires the
/// bundle to carry flow matrices; throws NumericalError when a flow
/// matrix is singular.
std::vector<double> variational_z(const BackwardSolution& solution, const PathBundle& bundle,
                                  const SdeCoefficients& coeffs);

struct MomentReport {
    double p = 2.0;
    double sup_y_moment = 0.0;   // mean over paths of sup_k |Y_k|^{2p}
    double z_energy_moment = 0.0; // mean over paths of (sum |Z|^2 dt)^p
    nlohmann::json to_json() const;
};

MomentReport moment_report(const BackwardSolution& solution, double p);

} // namespace bdsde
