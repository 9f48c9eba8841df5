#include "bdsde/solver.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "bdsde/binio.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

namespace {

Eigen::MatrixXd states_at(const PathBundle& bundle, std::size_t k) {
    Eigen::MatrixXd s(bundle.paths(), bundle.dim());
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        auto x = bundle.state(m, k);
        for (std::size_t c = 0; c < bundle.dim(); ++c)
            s(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(c)) = x[c];
    }
    return s;
}

void check_inputs(const PathBundle& bundle, const FieldRealization& field) {
    if (!(field.grid() == bundle.grid()))
        throw ContractError("field realization and path bundle live on different grids");
}

} // namespace

double BackwardSolution::surface(std::size_t k, std::span<const double> x) const {
    if (k == grid_.steps()) return terminal_.value(x);
    return y_tables_.at(k).evaluate(x);
}

double BackwardSolution::surface_stderr(std::size_t k, std::span<const double> x) const {
    if (k == grid_.steps()) return 0.0;
    return y_tables_.at(k).prediction_stderr(x);
}

void BackwardSolution::surface_gradient(std::size_t k, std::span<const double> x,
                                        std::span<double> out) const {
    if (k == grid_.steps()) {
        if (dim_ != 1) throw InvalidArgument("terminal gradient implemented for d=1");
        out[0] = terminal_.d1(x[0]);
        return;
    }
    y_tables_.at(k).gradient(x, out);
}

double BackwardSolution::z_surface(std::size_t k, std::size_t comp, std::span<const double> x) const {
    return z_tables_.at(k).at(comp).evaluate(x);
}

BackwardSolution solve(const Driver& driver, const TerminalCondition& terminal,
                       const PathBundle& bundle, const FieldRealization& field,
                       const SchemeConfig& config) {
    check_inputs(bundle, field);
    const auto& grid = bundle.grid();
    const std::size_t n = grid.steps();
    const std::size_t mpaths = bundle.paths();
    const std::size_t d = bundle.dim();

    BackwardSolution sol;
    sol.grid_ = grid;
    sol.paths_ = mpaths;
    sol.dim_ = d;
    sol.realization_id_ = field.realization_id();
    sol.terminal_ = terminal;
    sol.y_.assign(mpaths * (n + 1), 0.0);
    sol.z_.assign(mpaths * n * d, 0.0);
    sol.y_tables_.resize(n);
    sol.z_tables_.assign(n, {});

    for (std::size_t m = 0; m < mpaths; ++m)
        sol.y_[m * (n + 1) + n] = terminal.value(bundle.state(m, n));

    std::vector<double> regressand(mpaths), cv(mpaths), db(mpaths), fitted;
    std::vector<double> zfit(mpaths * d);
    for (std::size_t k = n; k-- > 0;) {
        const double dt = grid.dt(k);
        const double t_right = grid[k + 1];
        RegressionDesign design(config.basis, states_at(bundle, k));

        // field increments at the right-endpoint path positions
        parallel_for(mpaths, [&](std::size_t m) {
            db[m] = field.increment(k, bundle.state(m, k + 1));
        });

        // Z components
        sol.z_tables_[k].reserve(d);
        if (config.z_control_variate) {
            parallel_for(mpaths, [&](std::size_t m) {
                cv[m] = k + 1 == n ? terminal.value(bundle.state(m, k))
                                   : sol.y_tables_[k + 1].evaluate(bundle.state(m, k));
            });
        } else {
            std::fill(cv.begin(), cv.end(), 0.0);
        }
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t m = 0; m < mpaths; ++m) {
                const double ynext = sol.y_[m * (n + 1) + k + 1];
                regressand[m] = (ynext - cv[m]) * bundle.dw(m, k)[c] / dt;
            }
            sol.z_tables_[k].push_back(design.fit(regressand, &fitted));
            for (std::size_t m = 0; m < mpaths; ++m) zfit[m * d + c] = fitted[m];
        }
        for (std::size_t m = 0; m < mpaths; ++m)
            for (std::size_t c = 0; c < d; ++c) sol.z_[(m * n + k) * d + c] = zfit[m * d + c];

        // Y regression, explicit arguments at the right endpoint
        auto assemble = [&](const std::vector<double>& yarg_at, bool yarg_is_next) {
            parallel_for(mpaths, [&](std::size_t m) {
                const double ynext = sol.y_[m * (n + 1) + k + 1];
                const double yarg = yarg_is_next ? ynext : yarg_at[m];
                const auto xr = bundle.state(m, k + 1);
                std::span<const double> zz(zfit.data() + m * d, d);
                regressand[m] = ynext + driver.f(t_right, xr, yarg, zz) * dt +
                                driver.g(t_right, xr, yarg, zz) * db[m];
            });
        };

        assemble({}, true);
        sol.y_tables_[k] = design.fit(regressand, &fitted);
        for (std::size_t it = 0; it < config.n_inner; ++it) {
            assemble(fitted, false);
            sol.y_tables_[k] = design.fit(regressand, &fitted);
        }
        for (std::size_t m = 0; m < mpaths; ++m) {
            if (!std::isfinite(fitted[m]))
                throw NumericalError("backward recursion diverged at step " + std::to_string(k));
            sol.y_[m * (n + 1) + k] = fitted[m];
        }
    }
    return sol;
}

namespace {
constexpr char kSolutionMagic[9] = "BDSOLUT1";
}

void BackwardSolution::serialize(std::ostream& os) const {
    nlohmann::json header;
    header["version"] = 1;
    header["grid"] = grid_.instants();
    header["paths"] = paths_;
    header["dim"] = dim_;
    header["realization_id"] = realization_id_;
    header["terminal"] = terminal_.to_json();
    const std::string hs = header.dump();
    binio::write_magic(os, kSolutionMagic);
    binio::write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    binio::write_doubles(os, y_);
    binio::write_doubles(os, z_);
}

BackwardSolution BackwardSolution::deserialize(std::istream& is) {
    binio::expect_magic(is, kSolutionMagic, "backward solution");
    const std::uint64_t hlen = binio::read_u64(is);
    std::string hs(hlen, '\0');
    is.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    BackwardSolution out;
    out.grid_ = TimeGrid(header.at("grid").get<std::vector<double>>());
    out.paths_ = header.at("paths").get<std::size_t>();
    out.dim_ = header.at("dim").get<std::size_t>();
    out.realization_id_ = header.at("realization_id").get<std::uint64_t>();
    out.terminal_ = TerminalCondition::from_json(header.at("terminal"));
    out.y_.resize(out.paths_ * (out.grid_.steps() + 1));
    out.z_.resize(out.paths_ * out.grid_.steps() * out.dim_);
    binio::read_doubles(is, out.y_);
    binio::read_doubles(is, out.z_);
    if (!is) throw InvalidArgument("corrupt container: truncated payload");
    return out;
}

nlohmann::json ContractionReport::to_json() const {
    return nlohmann::json{{"beta", beta},
                          {"a", a},
                          {"rho_bound", rho_bound},
                          {"distances", distances},
                          {"ratios", ratios}};
}

ContractionReport picard_monitor(const Driver& driver, const TerminalCondition& terminal,
                                 const PathBundle& bundle, const FieldRealization& field,
                                 const SchemeConfig& config, std::size_t n_iter,
                                 const WeightedNormConfig& norm) {
    check_inputs(bundle, field);
    const auto& grid = bundle.grid();
    const std::size_t n = grid.steps();
    const std::size_t mpaths = bundle.paths();
    const std::size_t d = bundle.dim();
    CovarianceKernel kernel = CovarianceKernel::from_json(field.kernel_spec());

    // Contraction recipe: K a + alpha < 1, beta - 2/a = K(a+1)/(K a + alpha).
    const double K = std::max(driver.lipschitz_K(), driver.g_lipschitz_Ky());
    const double alpha = driver.alpha();
    double a = norm.a;
    if (a <= 0.0) a = K > 0.0 ? (1.0 - alpha) / (2.0 * K) : 1.0;
    const double rho = K * a + alpha;
    double beta = norm.beta;
    if (beta <= 0.0) beta = 2.0 / a + (K > 0.0 ? K * (a + 1.0) / rho : 0.0);
    const double z_weight = K > 0.0 ? rho / (K * (a + 1.0)) : 1.0;

    // Per-path suffix weights w_k = exp(beta sum_{r>=k} q~_r dt).
    std::vector<double> qtilde(mpaths * n), weight(mpaths * (n + 1));
    for (std::size_t m = 0; m < mpaths; ++m) {
        weight[m * (n + 1) + n] = 1.0;
        for (std::size_t k = n; k-- > 0;) {
            const auto x = bundle.state(m, k);
            const double qt = std::max(kernel.eval(grid[k], x, x), 1.0);
            qtilde[m * n + k] = qt;
            weight[m * (n + 1) + k] =
                weight[m * (n + 1) + k + 1] * std::exp(beta * qt * grid.dt(k));
        }
    }

    // Frozen-argument backward pass: one application of the mapping. No
    // variance tricks here; the monitor mirrors the fixed-point iteration
    // literally, so a driver-independent pass reaches its fixed point in
    // one application.
    std::vector<double> y_frozen(mpaths * (n + 1), 0.0), z_frozen(mpaths * n * d, 0.0);
    std::vector<double> y_cur(mpaths * (n + 1), 0.0), z_cur(mpaths * n * d, 0.0);
    std::vector<double> regressand(mpaths), fitted, db(mpaths);

    ContractionReport rep;
    rep.beta = beta;
    rep.a = a;
    rep.rho_bound = rho;

    for (std::size_t iter = 1; iter <= n_iter; ++iter) {
        for (std::size_t m = 0; m < mpaths; ++m)
            y_cur[m * (n + 1) + n] = terminal.value(bundle.state(m, n));

        for (std::size_t k = n; k-- > 0;) {
            const double dt = grid.dt(k);
            const double t_right = grid[k + 1];
            RegressionDesign design(config.basis, states_at(bundle, k));
            parallel_for(mpaths, [&](std::size_t m) {
                db[m] = field.increment(k, bundle.state(m, k + 1));
            });

            for (std::size_t c = 0; c < d; ++c) {
                for (std::size_t m = 0; m < mpaths; ++m)
                    regressand[m] = y_cur[m * (n + 1) + k + 1] * bundle.dw(m, k)[c] / dt;
                design.fit(regressand, &fitted);
                for (std::size_t m = 0; m < mpaths; ++m) z_cur[(m * n + k) * d + c] = fitted[m];
            }

            for (std::size_t m = 0; m < mpaths; ++m) {
                const auto xr = bundle.state(m, k + 1);
                const double y_arg = y_frozen[m * (n + 1) + k + 1];
                std::span<const double> z_arg(z_frozen.data() + (m * n + k) * d, d);
                regressand[m] = y_cur[m * (n + 1) + k + 1] + driver.f(t_right, xr, y_arg, z_arg) * dt +
                                driver.g(t_right, xr, y_arg, z_arg) * db[m];
            }
            design.fit(regressand, &fitted);
            for (std::size_t m = 0; m < mpaths; ++m) y_cur[m * (n + 1) + k] = fitted[m];
        }

        // weighted distance to the previous iterate
        double acc_y = 0.0, acc_z = 0.0;
        for (std::size_t m = 0; m < mpaths; ++m) {
            for (std::size_t k = 0; k < n; ++k) {
                const double dy = y_cur[m * (n + 1) + k] - y_frozen[m * (n + 1) + k];
                acc_y += qtilde[m * n + k] * weight[m * (n + 1) + k] * dy * dy * grid.dt(k);
                double dz2 = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double dz = z_cur[(m * n + k) * d + c] - z_frozen[(m * n + k) * d + c];
                    dz2 += dz * dz;
                }
                acc_z += weight[m * (n + 1) + k] * dz2 * grid.dt(k);
            }
        }
        const double dist =
            std::sqrt((acc_y + z_weight * acc_z) / static_cast<double>(mpaths));
        rep.distances.push_back(dist);
        if (rep.distances.size() >= 2) {
            const double prev = rep.distances[rep.distances.size() - 2];
            rep.ratios.push_back(prev > 0.0 ? dist / prev : 0.0);
        }

        y_frozen = y_cur;
        z_frozen = z_cur;
    }
    return rep;
}

std::vector<double> variational_z(const BackwardSolution& solution, const PathBundle& bundle,
                                  const SdeCoefficients& coeffs) {
    if (!bundle.has_flow()) throw InvalidArgument("bundle was simulated without the flow");
    const std::size_t n = bundle.grid().steps();
    const std::size_t d = bundle.dim();
    std::vector<double> out(bundle.paths() * n * d, 0.0);

    std::vector<double> grad(d), sigma(d * d);
    Eigen::MatrixXd flow(d, d);
    for (std::size_t m = 0; m < bundle.paths(); ++m) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto x = bundle.state(m, k);
            solution.surface_gradient(k, x, grad);
            auto f = bundle.flow(m, k);
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    flow(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i * d + j];
            Eigen::FullPivLU<Eigen::MatrixXd> lu(flow);
            if (!lu.isInvertible())
                throw NumericalError("singular flow matrix at path " + std::to_string(m) +
                                     ", step " + std::to_string(k));
            // grad Y_k = grad u(t_k, X_k) * flow;  Z = grad Y * flow^{-1} * sigma
            Eigen::RowVectorXd gu(d);
            for (std::size_t c = 0; c < d; ++c) gu(static_cast<Eigen::Index>(c)) = grad[c];
            Eigen::RowVectorXd grad_y = gu * flow;
            Eigen::RowVectorXd back = grad_y * lu.inverse();
            coeffs.diffusion(x, sigma);
            for (std::size_t c = 0; c < d; ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < d; ++i)
                    s += back(static_cast<Eigen::Index>(i)) * sigma[i * d + c];
                out[(m * n + k) * d + c] = s;
            }
        }
    }
    return out;
}

nlohmann::json MomentReport::to_json() const {
    return nlohmann::json{
        {"p", p}, {"sup_y_moment", sup_y_moment}, {"z_energy_moment", z_energy_moment}};
}

MomentReport moment_report(const BackwardSolution& solution, double p) {
    if (!(p > 1.0)) throw InvalidArgument("moment report needs p > 1");
    const std::size_t n = solution.grid().steps();
    MomentReport rep;
    rep.p = p;
    double acc_y = 0.0, acc_z = 0.0;
    for (std::size_t m = 0; m < solution.paths(); ++m) {
        double sup = 0.0, zint = 0.0;
        for (std::size_t k = 0; k <= n; ++k) sup = std::max(sup, std::abs(solution.y(m, k)));
        for (std::size_t k = 0; k < n; ++k) {
            double z2 = 0.0;
            for (double c : solution.z(m, k)) z2 += c * c;
            zint += z2 * solution.grid().dt(k);
        }
        acc_y += std::pow(sup, 2.0 * p);
        acc_z += std::pow(zint, p);
    }
    rep.sup_y_moment = acc_y / static_cast<double>(solution.paths());
    rep.z_energy_moment = acc_z / static_cast<double>(solution.paths());
    return rep;
}

} // namespace bdsde
