#pragma once

#include <cstddef>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "bdsde/kernels.hpp"

namespace bdsde {

/// Closed registries for the generator pair (f, g). Every family carries
/// its Lipschitz/growth metadata in the squared form of the structural
/// conditions:
///   |f(t,y1,z1)-f(t,y2,z2)|^2 <= K (|y1-y2|^2 + |z1-z2|^2)
///   |g(...)|^2 difference     <= K |dy|^2 + alpha_z |dz|^2,
/// with the z-sensitivity contract alpha_z * q(t,x,x) <= alpha < 1.
enum class FFamily {
    Zero,              // 0
    LinearY,           // lambda * y
    LinearZ,           // lambda * z_1
    DissipativeAffine, // -mu * (y - c)
    DissipativeTanh,   // -mu * (y - c tanh(x_1)): dissipative toward an x-dependent target
    PeriodicForcing,   // -mu * y + amp * sin(2 pi t / tau)
    CosBounded         // -y + cos(y)
};

enum class GFamily {
    Zero,    // 0
    LinearY, // beta * y            (the "g = u" case)
    AffineY, // c0 + beta * y
    LinearZ, // beta * z_1
    SinY,    // eps * sin(y)
    CosY     // eps * cos(y)
};

class Driver {
public:
    static Driver make(FFamily f, GFamily g);

    Driver& with_lambda(double v) { lambda_ = v; return *this; }
    Driver& with_mu(double v) { mu_ = v; return *this; }
    Driver& with_center(double v) { center_ = v; return *this; }
    Driver& with_tau(double v) { tau_ = v; return *this; }
    Driver& with_forcing_amp(double v) { forcing_amp_ = v; return *this; }
    Driver& with_beta(double v) { beta_ = v; return *this; }
    Driver& with_g_offset(double v) { g_offset_ = v; return *this; }
    Driver& with_eps(double v) { eps_ = v; return *this; }
    /// Declared cap alpha in (0,1) for the z-sensitivity contract.
    Driver& with_alpha(double v) { alpha_ = v; return *this; }
    Driver& with_growth_gamma(double v) { growth_gamma_ = v; return *this; }

    double f(double t, std::span<const double> x, double y, std::span<const double> z) const;
    double g(double t, std::span<const double> x, double y, std::span<const double> z) const;

    FFamily f_family() const { return f_; }
    GFamily g_family() const { return g_; }
    bool g_is_zero() const { return g_ == GFamily::Zero; }

    /// Squared Lipschitz constant of f in (y,z).
    double lipschitz_K() const;
    /// Squared y-Lipschitz constant of g.
    double g_lipschitz_Ky() const;
    /// Squared z-sensitivity alpha_z of g: |dg|^2 <= Ky|dy|^2 + alpha_z|dz|^2.
    double g_alpha_z() const;
    double alpha() const { return alpha_; }
    double growth_gamma() const { return growth_gamma_; }
    /// Strict monotonicity constant of f in y (0 when none is declared).
    double monotonicity_mu() const;
    /// Period of (f,g) in t; 0 when time-independent (then any tau works).
    double periodic_tau() const { return tau_used_in_f() ? tau_ : 0.0; }
    bool time_independent() const;
    /// True when f or g reads the spatial argument; the Lipschitz bound
    /// then includes the |dx|^2 term of the x-dependent structural form.
    bool x_sensitive() const { return f_ == FFamily::DissipativeTanh; }

    nlohmann::json to_json() const;
    static Driver from_json(const nlohmann::json& j);

private:
    Driver() = default;
    FFamily f_ = FFamily::Zero;
    GFamily g_ = GFamily::Zero;
    double lambda_ = 0.0;
    double mu_ = 1.0;
    double center_ = 0.0;
    double tau_ = 1.0;
    double forcing_amp_ = 1.0;
    double beta_ = 1.0;
    double g_offset_ = 0.0;
    double eps_ = 0.1;
    double alpha_ = 0.5;
    double growth_gamma_ = 0.5;
    bool tau_used_in_f() const { return f_ == FFamily::PeriodicForcing; }
};

/// Terminal conditions phi from a closed C^2 registry.
class TerminalCondition {
public:
    enum class Kind { Zero, PolyClamped, GaussianBump, Cosine };

    static TerminalCondition zero();
    /// c * tanh((a0 + a1 x_1)/c): a smooth clamp of an affine function.
    static TerminalCondition poly_clamped(double a0, double a1, double clamp);
    static TerminalCondition gaussian_bump(double amp, double center, double width);
    static TerminalCondition cosine(double amp, double wavenumber, double phase);

    double value(std::span<const double> x) const;
    double value1(double x) const { return value(std::span<const double>(&x, 1)); }
    /// d/dx_1, for the d=1 oracles.
    double d1(double x) const;
    Kind kind() const { return kind_; }

    nlohmann::json to_json() const;
    static TerminalCondition from_json(const nlohmann::json& j);

private:
    Kind kind_ = Kind::Zero;
    double a0_ = 0.0, a1_ = 1.0, clamp_ = 4.0;
    double amp_ = 1.0, center_ = 0.0, width_ = 1.0, phase_ = 0.0;
};

struct DriverProbeSpec {
    double y_lo = -3.0, y_hi = 3.0;
    double z_lo = -3.0, z_hi = 3.0;
    double x_lo = -3.0, x_hi = 3.0;
    double t_lo = 0.0, t_hi = 1.0;
    std::size_t dim = 1;
    std::size_t n_tuples = 4096;
    std::uint64_t seed = 7;
};

struct DriverValidationReport {
    double worst_f_ratio = 0.0;      // |df|^2 / (|dy|^2+|dz|^2) vs K
    double worst_g_ratio = 0.0;      // |dg|^2 / (Ky|dy|^2 + alpha_z|dz|^2 + tiny)
    double alpha_q_max = 0.0;        // alpha_z * max q(t,x,x) over probes
    double monotone_worst = 0.0;     // max of (y1-y2)(f1-f2)/|y1-y2|^2  (want <= -mu)
    double periodic_max_diff = 0.0;  // max |f(t+tau)-f(t)| + |g(t+tau)-g(t)|
    double margin = 0.0;             // 2 mu - K' - K/(1-alpha) - K M
    bool lipschitz_ok = false;
    bool alpha_ok = false;           // alpha_q_max <= alpha < 1
    bool monotone_ok = false;
    bool periodic_ok = false;
    bool margin_ok = false;
    nlohmann::json to_json() const;
};

/// Empirical verification of the declared driver inequalities over random
/// probe tuples, plus the dissipativity margin for discount `k_prime`.
/// Report-only: callers decide what to do with failures.
DriverValidationReport validate_driver(const Driver& driver, const CovarianceKernel& kernel,
                                       const DriverProbeSpec& probe, double k_prime = 0.0);

} // namespace bdsde
