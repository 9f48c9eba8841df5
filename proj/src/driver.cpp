#include "bdsde/driver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdsde/rng.hpp"

namespace bdsde {

Driver Driver::make(FFamily f, GFamily g) {
    Driver d;
    d.f_ = f;
    d.g_ = g;
    return d;
}

double Driver::f(double t, std::span<const double> x, double y, std::span<const double> z) const {
    switch (f_) {
        case FFamily::Zero: return 0.0;
        case FFamily::LinearY: return lambda_ * y;
        case FFamily::LinearZ: return lambda_ * z[0];
        case FFamily::DissipativeAffine: return -mu_ * (y - center_);
        case FFamily::DissipativeTanh: return -mu_ * (y - center_ * std::tanh(x[0]));
        case FFamily::PeriodicForcing:
            // phase reduction keeps the forcing periodic to rounding even
            // for the long horizons of the infinite-horizon runs
            return -mu_ * y +
                   forcing_amp_ * std::sin(2.0 * std::numbers::pi * std::fmod(t, tau_) / tau_);
        case FFamily::CosBounded: return -y + std::cos(y);
    }
    return 0.0;
}

double Driver::g(double t, std::span<const double> x, double y, std::span<const double> z) const {
    (void)t;
    (void)x;
    switch (g_) {
        case GFamily::Zero: return 0.0;
        case GFamily::LinearY: return beta_ * y;
        case GFamily::AffineY: return g_offset_ + beta_ * y;
        case GFamily::LinearZ: return beta_ * z[0];
        case GFamily::SinY: return eps_ * std::sin(y);
        case GFamily::CosY: return eps_ * std::cos(y);
    }
    return 0.0;
}

double Driver::lipschitz_K() const {
    switch (f_) {
        case FFamily::Zero: return 0.0;
        case FFamily::LinearY:
        case FFamily::LinearZ: return lambda_ * lambda_;
        case FFamily::DissipativeAffine:
        case FFamily::PeriodicForcing: return mu_ * mu_;
        case FFamily::DissipativeTanh:
            // |df|^2 <= mu^2 (|dy| + |c| |dx|)^2 <= mu^2 (1+|c|)(|dx|^2+|dy|^2) for |c| <= 1
            return mu_ * mu_ * (1.0 + std::abs(center_)) * std::max(1.0, std::abs(center_));
        case FFamily::CosBounded: return 4.0;
    }
    return 0.0;
}

double Driver::g_lipschitz_Ky() const {
    switch (g_) {
        case GFamily::Zero:
        case GFamily::LinearZ: return 0.0;
        case GFamily::LinearY:
        case GFamily::AffineY: return beta_ * beta_;
        case GFamily::SinY:
        case GFamily::CosY: return eps_ * eps_;
    }
    return 0.0;
}

double Driver::g_alpha_z() const {
    return g_ == GFamily::LinearZ ? beta_ * beta_ : 0.0;
}

double Driver::monotonicity_mu() const {
    switch (f_) {
        case FFamily::DissipativeAffine:
        case FFamily::DissipativeTanh:
        case FFamily::PeriodicForcing: return mu_;
        case FFamily::LinearY: return lambda_ < 0.0 ? -lambda_ : 0.0;
        default: return 0.0;
    }
}

bool Driver::time_independent() const { return f_ != FFamily::PeriodicForcing; }

static const char* f_name(FFamily f) {
    switch (f) {
        case FFamily::Zero: return "zero";
        case FFamily::LinearY: return "linear_y";
        case FFamily::LinearZ: return "linear_z";
        case FFamily::DissipativeAffine: return "dissipative_affine";
        case FFamily::DissipativeTanh: return "dissipative_tanh";
        case FFamily::PeriodicForcing: return "periodic_forcing";
        case FFamily::CosBounded: return "cos_bounded";
    }
    return "?";
}

static const char* g_name(GFamily g) {
    switch (g) {
        case GFamily::Zero: return "zero";
        case GFamily::LinearY: return "linear_y";
        case GFamily::AffineY: return "affine_y";
        case GFamily::LinearZ: return "linear_z";
        case GFamily::SinY: return "sin_y";
        case GFamily::CosY: return "cos_y";
    }
    return "?";
}

nlohmann::json Driver::to_json() const {
    return nlohmann::json{{"f", f_name(f_)},       {"g", g_name(g_)},
                          {"lambda", lambda_},     {"mu", mu_},
                          {"center", center_},     {"tau", tau_},
                          {"forcing_amp", forcing_amp_}, {"beta", beta_},
                          {"g_offset", g_offset_}, {"eps", eps_},
                          {"alpha", alpha_},       {"growth_gamma", growth_gamma_}};
}

Driver Driver::from_json(const nlohmann::json& j) {
    auto parse_f = [](const std::string& s) {
        if (s == "zero") return FFamily::Zero;
        if (s == "linear_y") return FFamily::LinearY;
        if (s == "linear_z") return FFamily::LinearZ;
        if (s == "dissipative_affine") return FFamily::DissipativeAffine;
        if (s == "dissipative_tanh") return FFamily::DissipativeTanh;
        if (s == "periodic_forcing") return FFamily::PeriodicForcing;
        if (s == "cos_bounded") return FFamily::CosBounded;
        throw InvalidArgument("unknown f family: " + s);
    };
    auto parse_g = [](const std::string& s) {
        if (s == "zero") return GFamily::Zero;
        if (s == "linear_y") return GFamily::LinearY;
        if (s == "affine_y") return GFamily::AffineY;
        if (s == "linear_z") return GFamily::LinearZ;
        if (s == "sin_y") return GFamily::SinY;
        if (s == "cos_y") return GFamily::CosY;
        throw InvalidArgument("unknown g family: " + s);
    };
    Driver d = make(parse_f(j.at("f").get<std::string>()), parse_g(j.at("g").get<std::string>()));
    if (j.contains("lambda")) d.lambda_ = j["lambda"].get<double>();
    if (j.contains("mu")) d.mu_ = j["mu"].get<double>();
    if (j.contains("center")) d.center_ = j["center"].get<double>();
    if (j.contains("tau")) d.tau_ = j["tau"].get<double>();
    if (j.contains("forcing_amp")) d.forcing_amp_ = j["forcing_amp"].get<double>();
    if (j.contains("beta")) d.beta_ = j["beta"].get<double>();
    if (j.contains("g_offset")) d.g_offset_ = j["g_offset"].get<double>();
    if (j.contains("eps")) d.eps_ = j["eps"].get<double>();
    if (j.contains("alpha")) d.alpha_ = j["alpha"].get<double>();
    if (j.contains("growth_gamma")) d.growth_gamma_ = j["growth_gamma"].get<double>();
    return d;
}

TerminalCondition TerminalCondition::zero() {
    TerminalCondition t;
    t.kind_ = Kind::Zero;
    return t;
}

TerminalCondition TerminalCondition::poly_clamped(double a0, double a1, double clamp) {
    if (!(clamp > 0.0)) throw InvalidArgument("clamp level must be positive");
    TerminalCondition t;
    t.kind_ = Kind::PolyClamped;
    t.a0_ = a0;
    t.a1_ = a1;
    t.clamp_ = clamp;
    return t;
}

TerminalCondition TerminalCondition::gaussian_bump(double amp, double center, double width) {
    if (!(width > 0.0)) throw InvalidArgument("bump width must be positive");
    TerminalCondition t;
    t.kind_ = Kind::GaussianBump;
    t.amp_ = amp;
    t.center_ = center;
    t.width_ = width;
    return t;
}

TerminalCondition TerminalCondition::cosine(double amp, double wavenumber, double phase) {
    TerminalCondition t;
    t.kind_ = Kind::Cosine;
    t.amp_ = amp;
    t.a1_ = wavenumber;
    t.phase_ = phase;
    return t;
}

double TerminalCondition::value(std::span<const double> x) const {
    switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::PolyClamped: return clamp_ * std::tanh((a0_ + a1_ * x[0]) / clamp_);
        case Kind::GaussianBump: {
            double r2 = 0.0;
            for (double c : x) r2 += (c - center_) * (c - center_);
            return amp_ * std::exp(-r2 / (2.0 * width_ * width_));
        }
        case Kind::Cosine: return amp_ * std::cos(a1_ * x[0] + phase_);
    }
    return 0.0;
}

double TerminalCondition::d1(double x) const {
    switch (kind_) {
        case Kind::Zero: return 0.0;
        case Kind::PolyClamped: {
            const double th = std::tanh((a0_ + a1_ * x) / clamp_);
            return a1_ * (1.0 - th * th);
        }
        case Kind::GaussianBump: {
            const double v = value(std::span<const double>(&x, 1));
            return -v * (x - center_) / (width_ * width_);
        }
        case Kind::Cosine: return -amp_ * a1_ * std::sin(a1_ * x + phase_);
    }
    return 0.0;
}

static const char* terminal_name(TerminalCondition::Kind k) {
    switch (k) {
        case TerminalCondition::Kind::Zero: return "zero";
        case TerminalCondition::Kind::PolyClamped: return "poly_clamped";
        case TerminalCondition::Kind::GaussianBump: return "gaussian_bump";
        case TerminalCondition::Kind::Cosine: return "cosine";
    }
    return "?";
}

nlohmann::json TerminalCondition::to_json() const {
    return nlohmann::json{{"kind", terminal_name(kind_)}, {"a0", a0_},       {"a1", a1_},
                          {"clamp", clamp_},              {"amp", amp_},     {"center", center_},
                          {"width", width_},              {"phase", phase_}};
}

TerminalCondition TerminalCondition::from_json(const nlohmann::json& j) {
    const std::string k = j.at("kind").get<std::string>();
    if (k == "zero") return zero();
    if (k == "poly_clamped")
        return poly_clamped(j.value("a0", 0.0), j.value("a1", 1.0), j.value("clamp", 4.0));
    if (k == "gaussian_bump")
        return gaussian_bump(j.value("amp", 1.0), j.value("center", 0.0), j.value("width", 1.0));
    if (k == "cosine") return cosine(j.value("amp", 1.0), j.value("a1", 1.0), j.value("phase", 0.0));
    throw InvalidArgument("unknown terminal kind: " + k);
}

nlohmann::json DriverValidationReport::to_json() const {
    return nlohmann::json{{"worst_f_ratio", worst_f_ratio},
                          {"worst_g_ratio", worst_g_ratio},
                          {"alpha_q_max", alpha_q_max},
                          {"monotone_worst", monotone_worst},
                          {"periodic_max_diff", periodic_max_diff},
                          {"margin", margin},
                          {"lipschitz_ok", lipschitz_ok},
                          {"alpha_ok", alpha_ok},
                          {"monotone_ok", monotone_ok},
                          {"periodic_ok", periodic_ok},
                          {"margin_ok", margin_ok}};
}

DriverValidationReport validate_driver(const Driver& driver, const CovarianceKernel& kernel,
                                       const DriverProbeSpec& probe, double k_prime) {
    if (!(probe.y_hi > probe.y_lo) || probe.n_tuples == 0)
        throw InvalidArgument("degenerate driver probe spec");
    Rng rng(probe.seed, "driver-validate", 0);
    auto u = [&](double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); };

    DriverValidationReport rep;
    rep.monotone_worst = -std::numeric_limits<double>::infinity();
    const double K = driver.lipschitz_K();
    const double Ky = driver.g_lipschitz_Ky();
    const double az = driver.g_alpha_z();
    const double mu = driver.monotonicity_mu();
    const double tau = driver.periodic_tau() > 0.0 ? driver.periodic_tau() : 1.0;

    std::vector<double> x(probe.dim), z1(probe.dim), z2(probe.dim);
    double max_q = 0.0;
    for (std::size_t i = 0; i < probe.n_tuples; ++i) {
        for (auto& c : x) c = u(probe.x_lo, probe.x_hi);
        for (auto& c : z1) c = u(probe.z_lo, probe.z_hi);
        for (auto& c : z2) c = u(probe.z_lo, probe.z_hi);
        const double t = u(probe.t_lo, probe.t_hi);
        const double y1 = u(probe.y_lo, probe.y_hi);
        const double y2 = u(probe.y_lo, probe.y_hi);

        double dz2 = 0.0;
        for (std::size_t c = 0; c < probe.dim; ++c) dz2 += (z1[c] - z2[c]) * (z1[c] - z2[c]);
        const double dy2 = (y1 - y2) * (y1 - y2);

        std::vector<double> x2 = x;
        if (driver.x_sensitive())
            for (auto& c : x2) c = u(probe.x_lo, probe.x_hi);
        const double df = driver.f(t, x, y1, z1) - driver.f(t, x2, y2, z2);
        double dx2 = 0.0;
        for (std::size_t c = 0; c < probe.dim; ++c) dx2 += (x[c] - x2[c]) * (x[c] - x2[c]);
        if (dy2 + dz2 + dx2 > 1e-14)
            rep.worst_f_ratio = std::max(rep.worst_f_ratio, df * df / (dy2 + dz2 + dx2));

        const double dg = driver.g(t, x, y1, z1) - driver.g(t, x, y2, z2);
        const double bound = Ky * dy2 + az * dz2;
        if (bound > 1e-14) rep.worst_g_ratio = std::max(rep.worst_g_ratio, dg * dg / bound);

        max_q = std::max(max_q, kernel.eval(t, x, x));

        if (dy2 > 1e-14) {
            const double same_z = driver.f(t, x, y1, z1) - driver.f(t, x, y2, z1);
            rep.monotone_worst = std::max(rep.monotone_worst, (y1 - y2) * same_z / dy2);
        }

        const double pf = std::abs(driver.f(t + tau, x, y1, z1) - driver.f(t, x, y1, z1));
        const double pg = std::abs(driver.g(t + tau, x, y1, z1) - driver.g(t, x, y1, z1));
        rep.periodic_max_diff = std::max(rep.periodic_max_diff, pf + pg);
    }

    rep.alpha_q_max = az * max_q;
    const double alpha = driver.alpha();
    const double M = kernel.has_uniform_bound() ? kernel.bound_M() : max_q;
    rep.margin = 2.0 * mu - k_prime - K / (1.0 - alpha) - K * M;

    rep.lipschitz_ok = rep.worst_f_ratio <= K * (1.0 + 1e-9) + 1e-12 &&
                       rep.worst_g_ratio <= 1.0 + 1e-9;
    rep.alpha_ok = rep.alpha_q_max <= alpha && alpha < 1.0;
    rep.monotone_ok = mu == 0.0 || rep.monotone_worst <= -mu * (1.0 - 1e-9) + 1e-12;
    rep.periodic_ok = rep.periodic_max_diff <= 1e-12;
    rep.margin_ok = rep.margin > 0.0;
    return rep;
}

} // namespace bdsde
