#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/driver.hpp"
#include "bdsde/field.hpp"
#include "bdsde/sde.hpp"
#include "bdsde/solver.hpp"

namespace bdsde {

struct SpdeGridSpec {
    double lo = -8.0;
    double hi = 8.0;
    std::size_t nodes = 400;
};

struct SpdeOptions {
    /// Explicit diffusion stencil (theta = 0); default is fully implicit.
    /// The explicit variant warns on the parabolic stability number.
    bool explicit_diffusion = false;
};

/// Backward semi-implicit finite-difference solution on a 1D grid, driven
/// by the same field realization as the regression solver: the noise term
/// is applied explicitly at the right endpoint, the generator implicitly
/// (stochastic IMEX), Neumann zero-slope boundaries.
class FieldSolution {
public:
    const TimeGrid& grid() const { return grid_; }
    const std::vector<double>& nodes() const { return xs_; }
    std::uint64_t realization_id() const { return realization_id_; }
    bool cfl_warning() const { return cfl_warning_; }
    const std::string& boundary() const { return boundary_; }

    double value(std::size_t k, std::size_t j) const { return u_[k * xs_.size() + j]; }
    std::span<const double> level(std::size_t k) const {
        return {u_.data() + k * xs_.size(), xs_.size()};
    }
    /// Total applied noise per node: sum over steps of g(...) dB_k(x_j).
    const std::vector<double>& noise_applied() const { return noise_applied_; }
    /// Linear interpolation of the level-k profile at x.
    double interpolate(std::size_t k, double x) const;

    void dump_csv(const std::string& path) const;
    nlohmann::json manifest() const;

    friend FieldSolution solve_spde(const Driver&, const TerminalCondition&,
                                    const SdeCoefficients&, const CovarianceKernel&,
                                    const FieldRealization&, const SpdeGridSpec&,
                                    const SpdeOptions&);

private:
    TimeGrid grid_;
    std::vector<double> xs_;
    std::vector<double> u_;  // (steps+1) * nodes, time-major
    std::vector<double> noise_applied_;
    std::uint64_t realization_id_ = 0;
    bool cfl_warning_ = false;
    std::string boundary_ = "neumann-zero-slope";
    std::string kernel_name_;
    std::uint64_t seed_ = 0;
};

/// Backward stepping from u_N = phi:
///   (I - dt L_h) u_k = u_{k+1} + dt f(t_{k+1}, x, u_{k+1}, sigma d_h u_{k+1})
///                      + g(t_{k+1}, x, u_{k+1}, sigma d_h u_{k+1}) dB_k(x_j)
/// with L_h the centered second/first difference generator. d = 1 only.
/// The realization must declare every grid node at every step (spatially
/// constant kernels declare implicitly).
FieldSolution solve_spde(const Driver& driver, const TerminalCondition& terminal,
                         const SdeCoefficients& coeffs, const CovarianceKernel& kernel,
                         const FieldRealization& field, const SpdeGridSpec& gspec,
                         const SpdeOptions& opts = {});

/// The per-step point sets an FD run needs (every node at every step).
std::vector<std::vector<double>> spde_node_point_sets(const SpdeGridSpec& gspec,
                                                      std::size_t steps);
std::vector<double> spde_nodes(const SpdeGridSpec& gspec);

struct CrossValidationReport {
    std::vector<double> times;
    std::vector<double> l2;        // grid L2 distance per shared time level
    std::vector<double> linf;
    std::vector<double> rel_l2;    // l2 / ||fd level||_2
    double rel_l2_at_start = 0.0;
    nlohmann::json to_json() const;
};

/// Evaluates the regression surface at probe nodes and reports distances
/// to the FD solution per shared time level. Both inputs must come from
/// the same field realization.
CrossValidationReport cross_validate(const BackwardSolution& bdsde, const FieldSolution& fd,
                                     const std::vector<double>& probe_nodes);

} // namespace bdsde
