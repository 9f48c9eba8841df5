#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/errors.hpp"

namespace bdsde {

enum class KernelFamily { Constant, Exponential, SquaredExponential, TimeModulated };

/// Bounded multiplicative time factor m(s) = offset + amp*cos(omega*s),
/// with offset >= |amp| so the modulated kernel stays positive
/// semidefinite at every instant.
struct TimeFactor {
    double offset = 1.0;
    double amp = 0.0;
    double omega = 0.0;
    double operator()(double s) const;
};

/// Spatial covariance q(s,x,y) of the martingale field, from a closed
/// registry of named families. Carries the growth/boundedness metadata
/// used by the driver and horizon validity checks:
///   kappa, bound_K : |q(s,x,y)| <= K(1+|x|^kappa+|y|^kappa), kappa < 2
///   bound_M       : uniform bound, when the family admits one
///   holder_gamma  : exponent of x -> q(x,x)-q(x,y) near the diagonal
class CovarianceKernel {
public:
    static CovarianceKernel constant(double q0);
    static CovarianceKernel exponential(double scale, double amplitude = 1.0);
    static CovarianceKernel squared_exponential(double scale, double amplitude = 1.0);
    static CovarianceKernel time_modulated(CovarianceKernel base, TimeFactor factor);

    KernelFamily family() const { return family_; }
    double eval(double s, std::span<const double> x, std::span<const double> y) const;
    /// Convenience for d=1.
    double eval1(double s, double x, double y) const {
        return eval(s, std::span<const double>(&x, 1), std::span<const double>(&y, 1));
    }

    /// True when q(s,x,y) does not depend on (x,y); the field is then a
    /// single Brownian-type path broadcast to every spatial point and the
    /// sampler uses the exact rank-one route.
    bool spatially_constant() const;
    /// True when q does not depend on s.
    bool time_homogeneous() const;

    double kappa() const { return kappa_; }
    double bound_K() const { return bound_K_; }
    bool has_uniform_bound() const { return has_bound_M_; }
    double bound_M() const { return bound_M_; }
    double holder_gamma() const { return holder_gamma_; }

    nlohmann::json to_json() const;
    static CovarianceKernel from_json(const nlohmann::json& j);
    std::string name() const;

private:
    CovarianceKernel() = default;
    KernelFamily family_ = KernelFamily::Constant;
    double q0_ = 1.0;          // constant
    double scale_ = 1.0;       // exponential / squared-exponential
    double amplitude_ = 1.0;
    TimeFactor factor_;        // time-modulated
    KernelFamily base_family_ = KernelFamily::Constant;

    double kappa_ = 1.0;
    double bound_K_ = 1.0;
    bool has_bound_M_ = true;
    double bound_M_ = 1.0;
    double holder_gamma_ = 1.0;

    double eval_spatial(std::span<const double> x, std::span<const double> y) const;
};

struct ProbeSpec {
    double lo = -5.0;
    double hi = 5.0;
    std::size_t dim = 1;
    std::size_t n_points = 256;       // random probe pairs
    std::size_t gram_size = 16;       // random point sets for PSD checks
    std::size_t n_gram = 32;
    std::uint64_t seed = 1;
    double eps_psd = 1e-8;
};

struct KernelValidationReport {
    double min_gram_eigenvalue = 0.0;
    double max_growth_ratio = 0.0;    // |q| / (1+|x|^kappa+|y|^kappa)
    double max_abs_q = 0.0;
    double max_holder_ratio = 0.0;    // |q(x,x)-q(x,y)| / |x-y|^gamma
    bool psd_ok = false;
    bool growth_ok = false;           // max_growth_ratio <= K
    bool uniform_bound_ok = false;    // max_abs_q <= M (when M declared)
    bool holder_ok = false;
    nlohmann::json to_json() const;
};

/// Samples the declared invariants of a kernel over a probe region and
/// reports the worst observed ratios. Report-only except for degenerate
/// probe specs.
KernelValidationReport validate_kernel(const CovarianceKernel& kernel, const ProbeSpec& probe);

/// PSD check of an explicit Gram matrix (used by tests to confirm that an
/// indefinite hand-built table is flagged).
double min_eigenvalue_sym(std::span<const double> gram_rowmajor, std::size_t n);

} // namespace bdsde
