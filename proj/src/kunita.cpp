#include "bdsde/kunita.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/stats.hpp"

namespace bdsde {

PhiSpec PhiSpec::parse(const std::string& name) {
    if (name == "square") return square();
    if (name == "quartic") return quartic();
    if (name == "exp_clamped") return exp_clamped(4.0);
    throw InvalidArgument("unknown test function: " + name);
}

double PhiSpec::value(double x) const {
    switch (kind) {
        case Kind::Square: return x * x;
        case Kind::Quartic: return x * x * x * x;
        case Kind::ExpClamped: return std::exp(clamp * std::tanh(x / clamp));
    }
    return 0.0;
}

double PhiSpec::d1(double x) const {
    switch (kind) {
        case Kind::Square: return 2.0 * x;
        case Kind::Quartic: return 4.0 * x * x * x;
        case Kind::ExpClamped: {
            const double th = std::tanh(x / clamp);
            return value(x) * (1.0 - th * th);
        }
    }
    return 0.0;
}

double PhiSpec::d2(double x) const {
    switch (kind) {
        case Kind::Square: return 2.0;
        case Kind::Quartic: return 12.0 * x * x;
        case Kind::ExpClamped: {
            const double th = std::tanh(x / clamp);
            const double w1 = 1.0 - th * th;                 // (c tanh(x/c))'
            const double w2 = -2.0 * th * w1 / clamp;        // (c tanh(x/c))''
            return value(x) * (w1 * w1 + w2);
        }
    }
    return 0.0;
}

static void check_compatible(const FieldRealization& field, const PathBundle& bundle) {
    if (!(field.grid() == bundle.grid()))
        throw ContractError("field realization and path bundle live on different grids");
}

BackwardIntegralResult backward_integral(const IntegrandSpec& f, const FieldRealization& field,
                                         const PathBundle& bundle) {
    check_compatible(field, bundle);
    const std::size_t n = bundle.grid().steps();
    BackwardIntegralResult out;
    out.step_count = n;
    out.integral.assign(bundle.paths(), 0.0);
    out.quadratic_variation.assign(bundle.paths(), 0.0);
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        double acc = 0.0, qv = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto xr = bundle.state(m, k + 1);
            const double term = f(bundle.grid()[k + 1], xr) * field.increment(k, xr);
            acc += term;
            qv += term * term;
        }
        out.integral[m] = acc;
        out.quadratic_variation[m] = qv;
    }
    return out;
}

std::vector<double> quadratic_variation(const IntegrandSpec& f, const FieldRealization& field,
                                        const PathBundle& bundle) {
    return backward_integral(f, field, bundle).quadratic_variation;
}

std::vector<double> qv_time_quadrature(const IntegrandSpec& f, const CovarianceKernel& kernel,
                                       const PathBundle& bundle) {
    const std::size_t n = bundle.grid().steps();
    std::vector<double> out(bundle.paths(), 0.0);
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto x = bundle.state(m, k);
            const double fs = f(bundle.grid()[k], x);
            acc += fs * fs * kernel.eval(bundle.grid()[k], x, x) * bundle.grid().dt(k);
        }
        out[m] = acc;
    }
    return out;
}

nlohmann::json ResidualStats::to_json() const {
    return nlohmann::json{{"mean", mean}, {"stderr", stderr_}, {"n", n}, {"dt", dt}};
}

static ResidualStats summarize(const std::vector<double>& residuals, double dt) {
    const auto ms = mean_stderr(residuals);
    return ResidualStats{ms.mean, ms.stderr_, ms.n, dt};
}

ResidualStats ito_residual(const ItoCheckSpec& spec, const FieldRealization& field,
                           const PathBundle& bundle, std::vector<double>* per_path) {
    check_compatible(field, bundle);
    const auto& grid = bundle.grid();
    const std::size_t n = grid.steps();
    CovarianceKernel kernel = CovarianceKernel::from_json(field.kernel_spec());

    std::vector<double> residuals(bundle.paths());
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        double s = spec.s0;
        double rhs = spec.phi.value(s);
        for (std::size_t k = 0; k < n; ++k) {
            const double t = grid[k];
            const double dt = grid.dt(k);
            const auto xl = bundle.state(m, k);
            const auto xr = bundle.state(m, k + 1);
            const double fv = spec.f(t, xl);
            const double gv = spec.g(grid[k + 1], xr);
            const double hv = spec.h(t, xl);
            const double db = field.increment(k, xr);
            const double dw = bundle.dw(m, k)[0];

            const double ds_fw = fv * dt + hv * dw;  // forward parts, left endpoint
            const double ds_bw = gv * db;            // backward part, right endpoint
            const double s_next = s + ds_fw + ds_bw;

            rhs += spec.phi.d1(s) * ds_fw + spec.phi.d1(s_next) * ds_bw;
            const double gl = spec.g(t, xl);
            if (spec.include_g_correction)
                rhs -= 0.5 * spec.phi.d2(s) * gl * gl * kernel.eval(t, xl, xl) * dt;
            if (spec.include_h_correction) rhs += 0.5 * spec.phi.d2(s) * hv * hv * dt;
            s = s_next;
        }
        residuals[m] = spec.phi.value(s) - rhs;
    }
    if (per_path) *per_path = residuals;
    return summarize(residuals, grid.dt(0));
}

ResidualStats product_rule_residual(const ItoCheckSpec& s_spec, const QSpec& q_spec,
                                    const CovarianceKernel& kernel, const FieldRealization& field,
                                    const PathBundle& bundle, std::vector<double>* per_path) {
    check_compatible(field, bundle);
    const auto& grid = bundle.grid();
    const std::size_t n = grid.steps();

    std::vector<double> residuals(bundle.paths());
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        // Q along the path (bounded variation).
        std::vector<double> qv(n + 1, 1.0);
        switch (q_spec.kind) {
            case QSpec::Kind::One:
                break;
            case QSpec::Kind::ExpBetaT:
                for (std::size_t k = 0; k <= n; ++k) qv[k] = std::exp(q_spec.beta * grid[k]);
                break;
            case QSpec::Kind::ExpBetaIntQTilde: {
                double acc = 0.0;
                qv[0] = 1.0;
                for (std::size_t k = 0; k < n; ++k) {
                    const auto x = bundle.state(m, k);
                    acc += std::max(kernel.eval(grid[k], x, x), 1.0) * grid.dt(k);
                    qv[k + 1] = std::exp(q_spec.beta * acc);
                }
                break;
            }
        }

        double s = s_spec.s0;
        double sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double t = grid[k];
            const double dt = grid.dt(k);
            const auto xl = bundle.state(m, k);
            const auto xr = bundle.state(m, k + 1);
            const double ds_fw = s_spec.f(t, xl) * dt + s_spec.h(t, xl) * bundle.dw(m, k)[0];
            const double ds_bw = s_spec.g(grid[k + 1], xr) * field.increment(k, xr);
            const double s_next = s + ds_fw + ds_bw;
            // S dQ at the right endpoint, Q dS with the integral's own
            // endpoint conventions.
            sum += s_next * (qv[k + 1] - qv[k]) + qv[k] * ds_fw + qv[k + 1] * ds_bw;
            s = s_next;
        }
        residuals[m] = s * qv[n] - s_spec.s0 * qv[0] - sum;
    }
    if (per_path) *per_path = residuals;
    return summarize(residuals, grid.dt(0));
}

} // namespace bdsde
