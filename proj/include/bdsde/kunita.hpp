#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/field.hpp"
#include "bdsde/sde.hpp"

namespace bdsde {

/// Integrand samples for the discrete stochastic calculus checkers, from a
/// closed registry so derivatives and bounds are known:
///   constant c, coordinate (first state component), linear time a + b t.
struct IntegrandSpec {
    enum class Kind { Constant, Coordinate, LinearTime } kind = Kind::Constant;
    double c0 = 0.0;
    double c1 = 0.0;

    static IntegrandSpec constant(double c) { return {Kind::Constant, c, 0.0}; }
    static IntegrandSpec coordinate() { return {Kind::Coordinate, 0.0, 0.0}; }
    static IntegrandSpec linear_time(double a, double b) { return {Kind::LinearTime, a, b}; }

    double operator()(double t, std::span<const double> x) const {
        switch (kind) {
            case Kind::Constant: return c0;
            case Kind::Coordinate: return x[0];
            case Kind::LinearTime: return c0 + c1 * t;
        }
        return 0.0;
    }
};

/// Twice-differentiable test functions for the Ito-formula checker.
/// exp_clamped is exp(c tanh(x/c)): smooth, bounded, monotone.
struct PhiSpec {
    enum class Kind { Square, Quartic, ExpClamped } kind = Kind::Square;
    double clamp = 4.0;

    static PhiSpec square() { return {Kind::Square, 0.0}; }
    static PhiSpec quartic() { return {Kind::Quartic, 0.0}; }
    static PhiSpec exp_clamped(double c) { return {Kind::ExpClamped, c}; }
    static PhiSpec parse(const std::string& name);

    double value(double x) const;
    double d1(double x) const;
    double d2(double x) const;
};

struct BackwardIntegralResult {
    std::vector<double> integral;            // per path
    std::vector<double> quadratic_variation; // per path, sum of squared terms
    std::size_t step_count = 0;
};

/// Forward-point Riemann sum of the backward integral: per path,
///   sum_k f(t_{k+1}, X_{k+1}) * dB_k(X_{k+1}).
/// The realization must declare every right-endpoint path position.
BackwardIntegralResult backward_integral(const IntegrandSpec& f, const FieldRealization& field,
                                         const PathBundle& bundle);

/// Realized quadratic variation sum_k (f_{k+1} dB_k(X_{k+1}))^2 per path.
std::vector<double> quadratic_variation(const IntegrandSpec& f, const FieldRealization& field,
                                        const PathBundle& bundle);

/// Time-quadrature of f(s,X_s)^2 q(s,X_s,X_s) ds along each path — the
/// pathwise limit the realized quadratic variation converges to.
std::vector<double> qv_time_quadrature(const IntegrandSpec& f, const CovarianceKernel& kernel,
                                       const PathBundle& bundle);

struct ResidualStats {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t n = 0;
    double dt = 0.0;
    nlohmann::json to_json() const;
};

struct ItoCheckSpec {
    double s0 = 0.0;
    IntegrandSpec f = IntegrandSpec::constant(0.0);
    IntegrandSpec g = IntegrandSpec::constant(0.0);
    IntegrandSpec h = IntegrandSpec::constant(0.0);
    PhiSpec phi = PhiSpec::square();
    bool include_g_correction = true;  // the -1/2 int phi'' g^2 q ds term
    bool include_h_correction = true;  // the +1/2 int phi'' h^2 ds term
};

/// Builds S by direct summation (dS = f dt + g dB(.,X) + h dW), evaluates
/// both sides of the generalized chain rule and returns the per-path
/// terminal residual phi(S_T) - RHS. The g-correction enters with a minus
/// sign and the h-correction with a plus sign; the flags let tests verify
/// that dropping either leaves the predicted bias.
ResidualStats ito_residual(const ItoCheckSpec& spec, const FieldRealization& field,
                           const PathBundle& bundle, std::vector<double>* per_path = nullptr);

struct QSpec {
    enum class Kind { One, ExpBetaT, ExpBetaIntQTilde } kind = Kind::One;
    double beta = 0.0;

    static QSpec one() { return {Kind::One, 0.0}; }
    static QSpec exp_beta_t(double beta) { return {Kind::ExpBetaT, beta}; }
    static QSpec exp_beta_int_qtilde(double beta) { return {Kind::ExpBetaIntQTilde, beta}; }
};

/// Discrete check of d(SQ) = S dQ + Q dS for a bounded-variation Q; the
/// kernel is needed only for the exp(beta int q~) weight family.
ResidualStats product_rule_residual(const ItoCheckSpec& s_spec, const QSpec& q_spec,
                                    const CovarianceKernel& kernel, const FieldRealization& field,
                                    const PathBundle& bundle, std::vector<double>* per_path = nullptr);

} // namespace bdsde
