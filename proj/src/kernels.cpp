#include "bdsde/kernels.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bdsde/rng.hpp"

namespace bdsde {

double TimeFactor::operator()(double s) const {
    return offset + amp * std::cos(omega * s);
}

static void check_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw InvalidArgument(std::string("non-finite ") + what);
}

CovarianceKernel CovarianceKernel::constant(double q0) {
    if (!(q0 >= 0.0) || !std::isfinite(q0)) throw InvalidArgument("constant kernel needs q0 >= 0");
    CovarianceKernel k;
    k.family_ = KernelFamily::Constant;
    k.q0_ = q0;
    k.kappa_ = 1.0;
    k.bound_K_ = std::max(q0, 1e-300);
    k.has_bound_M_ = true;
    k.bound_M_ = q0;
    k.holder_gamma_ = 1.0;
    return k;
}

CovarianceKernel CovarianceKernel::exponential(double scale, double amplitude) {
    if (!(scale > 0.0) || !(amplitude >= 0.0)) throw InvalidArgument("exponential kernel needs scale > 0, amplitude >= 0");
    CovarianceKernel k;
    k.family_ = KernelFamily::Exponential;
    k.scale_ = scale;
    k.amplitude_ = amplitude;
    k.kappa_ = 1.0;
    k.bound_K_ = std::max(amplitude, 1e-300);
    k.has_bound_M_ = true;
    k.bound_M_ = amplitude;
    k.holder_gamma_ = 1.0; // 1 - exp(-r/l) <= r/l
    return k;
}

CovarianceKernel CovarianceKernel::squared_exponential(double scale, double amplitude) {
    if (!(scale > 0.0) || !(amplitude >= 0.0)) throw InvalidArgument("squared-exponential kernel needs scale > 0, amplitude >= 0");
    CovarianceKernel k;
    k.family_ = KernelFamily::SquaredExponential;
    k.scale_ = scale;
    k.amplitude_ = amplitude;
    k.kappa_ = 1.0;
    k.bound_K_ = std::max(amplitude, 1e-300);
    k.has_bound_M_ = true;
    k.bound_M_ = amplitude;
    k.holder_gamma_ = 1.0;
    return k;
}

CovarianceKernel CovarianceKernel::time_modulated(CovarianceKernel base, TimeFactor factor) {
    if (base.family_ == KernelFamily::TimeModulated)
        throw InvalidArgument("time-modulated base must be a plain spatial family");
    if (!(factor.offset >= std::abs(factor.amp)))
        throw InvalidArgument("time factor must stay nonnegative (offset >= |amp|)");
    CovarianceKernel k = base;
    k.base_family_ = base.family_;
    k.family_ = KernelFamily::TimeModulated;
    k.factor_ = factor;
    const double fmax = factor.offset + std::abs(factor.amp);
    k.bound_K_ = base.bound_K_ * fmax;
    k.bound_M_ = base.bound_M_ * fmax;
    return k;
}

double CovarianceKernel::eval_spatial(std::span<const double> x, std::span<const double> y) const {
    const KernelFamily fam = family_ == KernelFamily::TimeModulated ? base_family_ : family_;
    switch (fam) {
        case KernelFamily::Constant:
            return q0_;
        case KernelFamily::Exponential: {
            double r2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - y[i]) * (x[i] - y[i]);
            return amplitude_ * std::exp(-std::sqrt(r2) / scale_);
        }
        case KernelFamily::SquaredExponential: {
            double r2 = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) r2 += (x[i] - y[i]) * (x[i] - y[i]);
            return amplitude_ * std::exp(-r2 / (2.0 * scale_ * scale_));
        }
        default:
            throw InvalidArgument("unknown kernel family");
    }
}

double CovarianceKernel::eval(double s, std::span<const double> x, std::span<const double> y) const {
    if (!std::isfinite(s)) throw InvalidArgument("non-finite time");
    if (x.size() != y.size()) throw InvalidArgument("point dimension mismatch");
    check_finite(x, "point");
    check_finite(y, "point");
    double q = eval_spatial(x, y);
    if (family_ == KernelFamily::TimeModulated) q *= factor_(s);
    return q;
}

bool CovarianceKernel::spatially_constant() const {
    const KernelFamily fam = family_ == KernelFamily::TimeModulated ? base_family_ : family_;
    return fam == KernelFamily::Constant;
}

bool CovarianceKernel::time_homogeneous() const {
    return family_ != KernelFamily::TimeModulated || factor_.amp == 0.0;
}

std::string CovarianceKernel::name() const {
    switch (family_) {
        case KernelFamily::Constant: return "constant";
        case KernelFamily::Exponential: return "exponential";
        case KernelFamily::SquaredExponential: return "squared_exponential";
        case KernelFamily::TimeModulated: return "time_modulated";
    }
    return "?";
}

nlohmann::json CovarianceKernel::to_json() const {
    nlohmann::json j;
    j["family"] = name();
    switch (family_) {
        case KernelFamily::Constant:
            j["q0"] = q0_;
            break;
        case KernelFamily::Exponential:
        case KernelFamily::SquaredExponential:
            j["scale"] = scale_;
            j["amplitude"] = amplitude_;
            break;
        case KernelFamily::TimeModulated: {
            CovarianceKernel base = *this;
            base.family_ = base_family_;
            j["base"] = base.to_json();
            j["offset"] = factor_.offset;
            j["amp"] = factor_.amp;
            j["omega"] = factor_.omega;
            break;
        }
    }
    return j;
}

CovarianceKernel CovarianceKernel::from_json(const nlohmann::json& j) {
    const std::string fam = j.at("family").get<std::string>();
    if (fam == "constant") return constant(j.at("q0").get<double>());
    if (fam == "exponential") return exponential(j.at("scale").get<double>(), j.at("amplitude").get<double>());
    if (fam == "squared_exponential")
        return squared_exponential(j.at("scale").get<double>(), j.at("amplitude").get<double>());
    if (fam == "time_modulated") {
        TimeFactor f;
        f.offset = j.at("offset").get<double>();
        f.amp = j.at("amp").get<double>();
        f.omega = j.at("omega").get<double>();
        return time_modulated(from_json(j.at("base")), f);
    }
    throw InvalidArgument("unknown kernel family: " + fam);
}

double min_eigenvalue_sym(std::span<const double> gram_rowmajor, std::size_t n) {
    Eigen::MatrixXd g(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) = gram_rowmajor[i * n + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

KernelValidationReport validate_kernel(const CovarianceKernel& kernel, const ProbeSpec& probe) {
    if (!(probe.hi > probe.lo) || probe.dim == 0 || probe.n_points == 0)
        throw InvalidArgument("degenerate probe region");

    Rng rng(probe.seed, "kernel-validate", 0);
    auto draw_point = [&](std::vector<double>& p) {
        for (auto& c : p) c = probe.lo + (probe.hi - probe.lo) * rng.uniform01();
    };

    KernelValidationReport rep;
    rep.min_gram_eigenvalue = std::numeric_limits<double>::infinity();

    std::vector<double> x(probe.dim), y(probe.dim);
    for (std::size_t i = 0; i < probe.n_points; ++i) {
        draw_point(x);
        draw_point(y);
        const double s = rng.uniform01();
        const double q = kernel.eval(s, x, y);
        double nx = 0.0, ny = 0.0;
        for (double c : x) nx += c * c;
        for (double c : y) ny += c * c;
        nx = std::sqrt(nx);
        ny = std::sqrt(ny);
        const double growth = std::abs(q) / (1.0 + std::pow(nx, kernel.kappa()) + std::pow(ny, kernel.kappa()));
        rep.max_growth_ratio = std::max(rep.max_growth_ratio, growth);
        rep.max_abs_q = std::max(rep.max_abs_q, std::abs(q));

        const double qxx = kernel.eval(s, x, x);
        double dist = 0.0;
        for (std::size_t c = 0; c < probe.dim; ++c) dist += (x[c] - y[c]) * (x[c] - y[c]);
        dist = std::sqrt(dist);
        if (dist > 1e-12) {
            const double ratio = std::abs(qxx - q) / std::pow(dist, kernel.holder_gamma());
            rep.max_holder_ratio = std::max(rep.max_holder_ratio, ratio);
        }
    }

    std::vector<double> gram(probe.gram_size * probe.gram_size);
    std::vector<std::vector<double>> pts(probe.gram_size, std::vector<double>(probe.dim));
    for (std::size_t g = 0; g < probe.n_gram; ++g) {
        for (auto& p : pts) draw_point(p);
        const double s = rng.uniform01();
        for (std::size_t i = 0; i < probe.gram_size; ++i)
            for (std::size_t j = 0; j < probe.gram_size; ++j)
                gram[i * probe.gram_size + j] = kernel.eval(s, pts[i], pts[j]);
        rep.min_gram_eigenvalue = std::min(rep.min_gram_eigenvalue, min_eigenvalue_sym(gram, probe.gram_size));
    }

    rep.psd_ok = rep.min_gram_eigenvalue >= -probe.eps_psd;
    rep.growth_ok = rep.max_growth_ratio <= kernel.bound_K() * (1.0 + 1e-12);
    rep.uniform_bound_ok =
        !kernel.has_uniform_bound() || rep.max_abs_q <= kernel.bound_M() * (1.0 + 1e-12);
    // Holder check is informational against a generous multiple of K; the
    // registry families are all 1-Holder with constant K/scale.
    rep.holder_ok = rep.max_holder_ratio <= 100.0 * kernel.bound_K() + 1e-12;
    return rep;
}

nlohmann::json KernelValidationReport::to_json() const {
    return nlohmann::json{{"min_gram_eigenvalue", min_gram_eigenvalue},
                          {"max_growth_ratio", max_growth_ratio},
                          {"max_abs_q", max_abs_q},
                          {"max_holder_ratio", max_holder_ratio},
                          {"psd_ok", psd_ok},
                          {"growth_ok", growth_ok},
                          {"uniform_bound_ok", uniform_bound_ok},
                          {"holder_ok", holder_ok}};
}

} // namespace bdsde
