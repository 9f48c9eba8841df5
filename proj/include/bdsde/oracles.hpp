#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bdsde/driver.hpp"
#include "bdsde/field.hpp"
#include "bdsde/sde.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

/// Coefficient of the linear driver registry: c * [cos(omega r)] * [tanh(x_1)],
/// each factor optional (constants and separable products only).
struct LinearCoef {
    double c = 0.0;
    bool time_cos = false;
    double omega = 1.0;
    bool space_tanh = false;

    static LinearCoef constant(double v) { return LinearCoef{v, false, 1.0, false}; }
    double operator()(double r, std::span<const double> x) const {
        double v = c;
        if (time_cos) v *= std::cos(omega * r);
        if (space_tanh) v *= std::tanh(x[0]);
        return v;
    }
};

/// The linear BDSDE f = h + alpha y, g = beta y whose solution is the
/// weight functional Gamma.
struct LinearDriverSpec {
    LinearCoef h;
    LinearCoef alpha;
    LinearCoef beta;
};

/// Two discretizations of the Gamma weight:
///   Exponent: exp(int alpha dt + backward-sum beta dB - 1/2 int beta^2 q dt)
///   Product : exp(int alpha dt) * prod_k (1 + beta_{k+1} dB_k)
/// Both are exact cocycles on the grid and agree as dt -> 0. The product
/// form is the discrete solution of the backward recursion itself, so it
/// shares the per-step propagator with the regression solver and the
/// finite-difference dual; cross-solver checks use it. The exponent form
/// is the literal closed-form discretization.
enum class GammaForm { Exponent, Product };

class GammaResult {
public:
    /// Gamma_{t_i}^{t_j} on path m (i <= j).
    double gamma(std::size_t m, std::size_t i, std::size_t j) const;
    bool clamped() const { return clamped_; }
    std::size_t paths() const { return paths_; }

    friend GammaResult gamma_functional(const LinearDriverSpec&, const PathBundle&,
                                        const FieldRealization&, GammaForm);

private:
    std::size_t paths_ = 0, levels_ = 0;
    std::vector<double> exponent_prefix_;  // paths * (steps+1)
    bool clamped_ = false;
};

/// Per-path discrete Gamma with the forward-point Riemann convention for
/// the B-term and left-endpoint quadrature for the time integrals.
/// Gamma_s^s = 1 exactly and Gamma_s^u Gamma_u^r = Gamma_s^r exactly
/// (prefix exponents add). Overflowing exponents are clamped and flagged.
GammaResult gamma_functional(const LinearDriverSpec& spec, const PathBundle& bundle,
                             const FieldRealization& field, GammaForm form = GammaForm::Exponent);

/// The explicit linear estimator for u(t,x) with h = alpha = 0, beta = 1,
/// b = 0, sigma = I: Monte Carlo over fresh Brownian paths with the field
/// realization held fixed. This is the independent oracle for the linear
/// cross-checks; `start_index` is the grid index of t.
MeanStderr explicit_linear_fk(const TerminalCondition& phi, const CovarianceKernel& kernel,
                              const FieldRealization& field, std::size_t start_index, double x,
                              std::size_t n_paths, std::uint64_t seed,
                              GammaForm form = GammaForm::Product);

/// g == 0 reduction: u(t,x) = e^{lambda (T-t)} E[phi(X_T^{t,x})], via
/// Gauss-Hermite quadrature when b = 0, sigma = I, and Monte Carlo
/// otherwise.
double deterministic_fk(const TerminalCondition& phi, double lambda, const SdeCoefficients& coeffs,
                        double t, double x, double horizon, std::size_t mc_paths = 0,
                        std::uint64_t seed = 1);

/// Gauss-Hermite value of E[phi(x + sqrt(variance) Z)], Z standard normal.
double gauss_hermite_expectation(const TerminalCondition& phi, double x, double variance,
                                 std::size_t nodes = 64);

} // namespace bdsde
