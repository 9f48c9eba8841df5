#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json_fwd.hpp>

#include "bdsde/grid.hpp"

namespace bdsde {

enum class CoefficientFamily { Constant, Linear, Tanh };

/// Closed registry of forward-SDE coefficients with analytic Jacobians.
///   constant : b(x) = b0, sigma(x) = s0 * I
///   linear   : b(x) = A x + b0, sigma(x) = s0 * I   (OU for A = -theta I)
///   tanh     : b_i(x) = b0_i + b1_i tanh(x_i), sigma = diag(s0_i + s1_i tanh(x_i))
/// The tanh family is the bounded-smooth choice with bounded derivatives.
class SdeCoefficients {
public:
    static SdeCoefficients constant(Eigen::VectorXd b0, double s0, std::size_t dim);
    static SdeCoefficients linear(Eigen::MatrixXd a, Eigen::VectorXd b0, double s0);
    static SdeCoefficients ou(double theta, double s0, std::size_t dim);
    static SdeCoefficients tanh_family(Eigen::VectorXd b0, Eigen::VectorXd b1,
                                       Eigen::VectorXd s0, Eigen::VectorXd s1);

    std::size_t dim() const { return dim_; }
    CoefficientFamily family() const { return family_; }
    bool bounded() const;
    double lipschitz_K() const;

    void drift(std::span<const double> x, std::span<double> out) const;
    /// sigma(x), row-major d*d.
    void diffusion(std::span<const double> x, std::span<double> out) const;
    /// Jacobian of the drift, row-major d*d.
    void drift_jacobian(std::span<const double> x, std::span<double> out) const;
    /// Jacobian of the k-th column of sigma, row-major d*d.
    void diffusion_col_jacobian(std::span<const double> x, std::size_t k, std::span<double> out) const;

    nlohmann::json to_json() const;
    static SdeCoefficients from_json(const nlohmann::json& j);
    std::string name() const;

private:
    SdeCoefficients() = default;
    CoefficientFamily family_ = CoefficientFamily::Constant;
    std::size_t dim_ = 1;
    Eigen::MatrixXd a_;
    Eigen::VectorXd b0_, b1_, s0v_, s1v_;
    double s0_ = 1.0;
};

enum class StartKind { Point, Spread };

/// Either every path starts at x, or (d=1) starts are stratified
/// deterministically over [spread_lo, spread_hi] so the backward
/// regression surface is queryable on an interval.
struct StartSpec {
    StartKind kind = StartKind::Point;
    double t0 = 0.0;
    Eigen::VectorXd x;
    double spread_lo = -1.0;
    double spread_hi = 1.0;

    static StartSpec point(double t0, Eigen::VectorXd x0);
    static StartSpec point1(double t0, double x0);
    static StartSpec spread(double t0, double lo, double hi);
};

/// An ensemble of Euler-Maruyama paths with their Brownian increments and
/// (optionally) the variational flow dX/dx0. Immutable after simulate().
/// Path m draws from a counter-based stream keyed by (seed, m), so the
/// ensemble is reproducible under any parallel schedule.
class PathBundle {
public:
    const TimeGrid& grid() const { return grid_; }
    std::size_t dim() const { return dim_; }
    std::size_t paths() const { return paths_; }
    bool has_flow() const { return !flow_.empty(); }
    std::uint64_t seed() const { return seed_; }
    const StartSpec& start() const { return start_; }

    std::span<const double> state(std::size_t m, std::size_t k) const {
        return {states_.data() + (m * (grid_.steps() + 1) + k) * dim_, dim_};
    }
    std::span<const double> dw(std::size_t m, std::size_t k) const {
        return {dw_.data() + (m * grid_.steps() + k) * dim_, dim_};
    }
    /// Row-major d*d flow matrix at (m, k).
    std::span<const double> flow(std::size_t m, std::size_t k) const {
        return {flow_.data() + (m * (grid_.steps() + 1) + k) * dim_ * dim_, dim_ * dim_};
    }
    double state1(std::size_t m, std::size_t k) const { return state(m, k)[0]; }

    /// Union of path positions X_{k+1} per step k, flattened — exactly the
    /// evaluation sites the backward integral against B needs.
    std::vector<std::vector<double>> right_endpoint_points() const;

    void dump_csv(const std::string& path, std::size_t max_paths = 16) const;
    /// Common container convention (JSON header + LE doubles), matching
    /// the field realization format.
    void serialize(std::ostream& os) const;
    static PathBundle deserialize(std::istream& is);

    friend PathBundle simulate(const SdeCoefficients&, const StartSpec&, const TimeGrid&,
                               std::size_t, std::uint64_t, bool);
    friend PathBundle subsample_bundle(const PathBundle&, std::size_t);
    friend PathBundle permute_paths(const PathBundle&, std::span<const std::size_t>);

private:
    TimeGrid grid_;
    std::size_t dim_ = 1;
    std::size_t paths_ = 0;
    std::uint64_t seed_ = 0;
    StartSpec start_;
    std::vector<double> states_;  // paths * (steps+1) * dim
    std::vector<double> dw_;      // paths * steps * dim
    std::vector<double> flow_;    // paths * (steps+1) * dim * dim, optional
};

/// Euler-Maruyama, flow advanced with the same increments:
///   dX = b dt + sigma dW,   dG = b'(X) G dt + sum_j sigma_j'(X) G dW^j.
/// Throws NumericalError naming (step, path) if a state leaves the finite
/// range.
PathBundle simulate(const SdeCoefficients& coeffs, const StartSpec& start, const TimeGrid& grid,
                    std::size_t n_paths, std::uint64_t seed, bool with_flow = false);

/// Empirical discounted moment: mean over paths of
/// int e^{-discount r} |X_r|^{2p} dr (left-endpoint quadrature).
double moment_probe(const PathBundle& bundle, double p, double discount);

/// The same paths viewed on every stride-th grid instant: states
/// subsampled, Brownian increments aggregated. Coupled-refinement tests
/// evaluate integrands on a consistent path across grid resolutions.
PathBundle subsample_bundle(const PathBundle& bundle, std::size_t stride);

/// Paths relabeled by a permutation; regression is symmetric in samples,
/// so downstream solutions must not depend on the labeling.
PathBundle permute_paths(const PathBundle& bundle, std::span<const std::size_t> perm);

} // namespace bdsde
