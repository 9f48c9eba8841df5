#include "bdsde/oracles.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "bdsde/rng.hpp"

namespace bdsde {

double GammaResult::gamma(std::size_t m, std::size_t i, std::size_t j) const {
    if (m >= paths_ || i > j || j >= levels_) throw InvalidArgument("gamma index out of range");
    const double e = exponent_prefix_[m * levels_ + j] - exponent_prefix_[m * levels_ + i];
    return std::exp(std::min(e, 700.0));
}

GammaResult gamma_functional(const LinearDriverSpec& spec, const PathBundle& bundle,
                             const FieldRealization& field, GammaForm form) {
    if (!(field.grid() == bundle.grid()))
        throw ContractError("field realization and path bundle live on different grids");
    const auto& grid = bundle.grid();
    const std::size_t n = grid.steps();
    CovarianceKernel kernel = CovarianceKernel::from_json(field.kernel_spec());

    GammaResult out;
    out.paths_ = bundle.paths();
    out.levels_ = n + 1;
    out.exponent_prefix_.assign(bundle.paths() * (n + 1), 0.0);

    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        double acc = 0.0;
        out.exponent_prefix_[m * (n + 1)] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double dt = grid.dt(k);
            const auto xl = bundle.state(m, k);
            const auto xr = bundle.state(m, k + 1);
            const double db = field.increment(k, xr);
            const double beta_r = spec.beta(grid[k + 1], xr);
            acc += spec.alpha(grid[k], xl) * dt;
            if (form == GammaForm::Exponent) {
                const double beta_l = spec.beta(grid[k], xl);
                acc += beta_r * db - 0.5 * beta_l * beta_l * kernel.eval(grid[k], xl, xl) * dt;
            } else {
                double factor = 1.0 + beta_r * db;
                if (factor < 1e-12) {
                    factor = 1e-12;
                    out.clamped_ = true;
                }
                acc += std::log(factor);
            }
            if (std::abs(acc) > 700.0) {
                acc = std::copysign(700.0, acc);
                out.clamped_ = true;
            }
            out.exponent_prefix_[m * (n + 1) + k + 1] = acc;
        }
    }
    return out;
}

MeanStderr explicit_linear_fk(const TerminalCondition& phi, const CovarianceKernel& kernel,
                              const FieldRealization& field, std::size_t start_index, double x,
                              std::size_t n_paths, std::uint64_t seed, GammaForm form) {
    const auto& grid = field.grid();
    const std::size_t n = grid.steps();
    if (start_index >= n) throw InvalidArgument("start index must leave at least one step");

    std::vector<double> samples(n_paths);
    parallel_for(n_paths, [&](std::size_t m) {
        Rng rng(seed, "fk-path", m);
        double pos = x;
        double exponent = 0.0;
        for (std::size_t k = start_index; k < n; ++k) {
            const double dt = grid.dt(k);
            const double xl = pos;
            pos += std::sqrt(dt) * rng.normal();
            const double db = field.increment1(k, pos);
            if (form == GammaForm::Exponent) {
                exponent += db - 0.5 * kernel.eval1(grid[k], xl, xl) * dt;
            } else {
                exponent += std::log(std::max(1.0 + db, 1e-12));
            }
        }
        samples[m] = phi.value1(pos) * std::exp(std::min(exponent, 700.0));
    });
    return mean_stderr(samples);
}

double gauss_hermite_expectation(const TerminalCondition& phi, double x, double variance,
                                 std::size_t nodes) {
    if (variance <= 0.0) return phi.value1(x);
    // Golub-Welsch on the Hermite Jacobi matrix.
    const Eigen::Index n = static_cast<Eigen::Index>(nodes);
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        const double b = std::sqrt(static_cast<double>(i + 1) / 2.0);
        jac(i, i + 1) = b;
        jac(i + 1, i) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
    const double sqrt_pi = std::sqrt(std::numbers::pi);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double node = es.eigenvalues()(i);
        const double w = es.eigenvectors()(0, i) * es.eigenvectors()(0, i) * sqrt_pi;
        acc += w * phi.value1(x + std::sqrt(2.0 * variance) * node);
    }
    return acc / sqrt_pi;
}

double deterministic_fk(const TerminalCondition& phi, double lambda, const SdeCoefficients& coeffs,
                        double t, double x, double horizon, std::size_t mc_paths,
                        std::uint64_t seed) {
    const double remaining = horizon - t;
    if (remaining < 0.0) throw InvalidArgument("t beyond horizon");
    const bool brownian = coeffs.family() == CoefficientFamily::Constant && coeffs.dim() == 1;
    double heat = 0.0;
    if (brownian && mc_paths == 0) {
        std::vector<double> b(1);
        coeffs.drift(std::span<const double>(&x, 1), b);
        std::vector<double> s(1);
        coeffs.diffusion(std::span<const double>(&x, 1), s);
        heat = gauss_hermite_expectation(phi, x + b[0] * remaining, s[0] * s[0] * remaining);
    } else {
        const std::size_t paths = mc_paths == 0 ? 200000 : mc_paths;
        const std::size_t steps = 256;
        TimeGrid grid = TimeGrid::uniform(t, horizon, steps);
        PathBundle bundle = simulate(coeffs, StartSpec::point1(t, x), grid, paths, seed);
        double acc = 0.0;
        for (std::size_t m = 0; m < paths; ++m) acc += phi.value(bundle.state(m, steps));
        heat = acc / static_cast<double>(paths);
    }
    return std::exp(lambda * remaining) * heat;
}

} // namespace bdsde
