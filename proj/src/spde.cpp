#include "bdsde/spde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bdsde {

namespace {

/// Thomas algorithm; overwrites its scratch copies. Throws on a vanishing
/// pivot.
void solve_tridiagonal(const std::vector<double>& lower, const std::vector<double>& diag,
                       const std::vector<double>& upper, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    static thread_local std::vector<double> c_prime, d_prime;
    c_prime.assign(n, 0.0);
    d_prime.assign(n, 0.0);
    double pivot = diag[0];
    if (std::abs(pivot) < 1e-300) throw NumericalError("tridiagonal solve: zero pivot at row 0");
    c_prime[0] = upper[0] / pivot;
    d_prime[0] = rhs[0] / pivot;
    for (std::size_t i = 1; i < n; ++i) {
        pivot = diag[i] - lower[i] * c_prime[i - 1];
        if (std::abs(pivot) < 1e-300)
            throw NumericalError("tridiagonal solve: zero pivot at row " + std::to_string(i));
        c_prime[i] = upper[i] / pivot;
        d_prime[i] = (rhs[i] - lower[i] * d_prime[i - 1]) / pivot;
    }
    rhs[n - 1] = d_prime[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = d_prime[i] - c_prime[i] * rhs[i + 1];
}

} // namespace

std::vector<double> spde_nodes(const SpdeGridSpec& gspec) {
    if (gspec.nodes < 3 || !(gspec.hi > gspec.lo)) throw InvalidArgument("bad FD grid spec");
    std::vector<double> xs(gspec.nodes);
    const double dx = (gspec.hi - gspec.lo) / static_cast<double>(gspec.nodes - 1);
    for (std::size_t j = 0; j < gspec.nodes; ++j) xs[j] = gspec.lo + dx * static_cast<double>(j);
    return xs;
}

std::vector<std::vector<double>> spde_node_point_sets(const SpdeGridSpec& gspec,
                                                      std::size_t steps) {
    return std::vector<std::vector<double>>(steps, spde_nodes(gspec));
}

double FieldSolution::interpolate(std::size_t k, double x) const {
    const auto lvl = level(k);
    if (x <= xs_.front()) return lvl[0];
    if (x >= xs_.back()) return lvl[xs_.size() - 1];
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - xs_.begin()) - 1;
    const double w = (x - xs_[j]) / (xs_[j + 1] - xs_[j]);
    return (1.0 - w) * lvl[j] + w * lvl[j + 1];
}

FieldSolution solve_spde(const Driver& driver, const TerminalCondition& terminal,
                         const SdeCoefficients& coeffs, const CovarianceKernel& kernel,
                         const FieldRealization& field, const SpdeGridSpec& gspec,
                         const SpdeOptions& opts) {
    if (coeffs.dim() != 1) throw InvalidArgument("the FD dual is one-dimensional");
    if (kernel.to_json() != field.kernel_spec())
        throw ContractError("kernel does not match the field realization's kernel");

    const TimeGrid& grid = field.grid();
    const std::size_t n = grid.steps();
    FieldSolution sol;
    sol.grid_ = grid;
    sol.xs_ = spde_nodes(gspec);
    sol.realization_id_ = field.realization_id();
    sol.kernel_name_ = kernel.name();
    sol.seed_ = field.seed();
    const std::size_t g = sol.xs_.size();
    const double dx = sol.xs_[1] - sol.xs_[0];
    sol.u_.assign((n + 1) * g, 0.0);
    sol.noise_applied_.assign(g, 0.0);

    // terminal level, exact
    for (std::size_t j = 0; j < g; ++j)
        sol.u_[n * g + j] = terminal.value(std::span<const double>(&sol.xs_[j], 1));

    // frozen coefficients per node
    std::vector<double> bj(g), s2j(g), sj(g);
    for (std::size_t j = 0; j < g; ++j) {
        std::span<const double> x(&sol.xs_[j], 1);
        double b, s;
        coeffs.drift(x, std::span<double>(&b, 1));
        coeffs.diffusion(x, std::span<double>(&s, 1));
        bj[j] = b;
        sj[j] = s;
        s2j[j] = s * s;
    }

    std::vector<double> lower(g), diag(g), upper(g), rhs(g), z(g);
    for (std::size_t k = n; k-- > 0;) {
        const double dt = grid.dt(k);
        const double tr = grid[k + 1];
        const double* un = sol.u_.data() + (k + 1) * g;

        if (opts.explicit_diffusion) {
            const double stab = *std::max_element(s2j.begin(), s2j.end()) * dt / (dx * dx);
            if (stab > 0.5) sol.cfl_warning_ = true;
        }

        // z-argument: sigma * centered first difference of the explicit level
        for (std::size_t j = 0; j < g; ++j) {
            double du;
            if (j == 0) du = (un[1] - un[0]) / dx;
            else if (j + 1 == g) du = (un[g - 1] - un[g - 2]) / dx;
            else du = (un[j + 1] - un[j - 1]) / (2.0 * dx);
            z[j] = sj[j] * du;
        }

        for (std::size_t j = 0; j < g; ++j) {
            std::span<const double> x(&sol.xs_[j], 1);
            std::span<const double> zz(&z[j], 1);
            const double db = field.increment(k, x);
            const double gterm = driver.g(tr, x, un[j], zz) * db;
            rhs[j] = un[j] + dt * driver.f(tr, x, un[j], zz) + gterm;
            sol.noise_applied_[j] += gterm;
        }

        double* uk = sol.u_.data() + k * g;
        if (opts.explicit_diffusion) {
            for (std::size_t j = 0; j < g; ++j) {
                double lu;
                if (j == 0) lu = s2j[0] * (un[1] - un[0]) / (dx * dx) + bj[0] * (un[1] - un[0]) / dx;
                else if (j + 1 == g)
                    lu = s2j[g - 1] * (un[g - 2] - un[g - 1]) / (dx * dx) +
                         bj[g - 1] * (un[g - 1] - un[g - 2]) / dx;
                else
                    lu = 0.5 * s2j[j] * (un[j + 1] - 2.0 * un[j] + un[j - 1]) / (dx * dx) +
                         bj[j] * (un[j + 1] - un[j - 1]) / (2.0 * dx);
                uk[j] = rhs[j] + dt * lu;
            }
        } else {
            // rows of I - dt L_h, Neumann mirror for the diffusion and
            // one-sided drift at the boundaries
            for (std::size_t j = 0; j < g; ++j) {
                const double diff = 0.5 * s2j[j] / (dx * dx);
                const double adv = bj[j] / (2.0 * dx);
                if (j == 0) {
                    const double diag_l = -2.0 * diff - bj[0] / dx;
                    const double up_l = 2.0 * diff + bj[0] / dx;
                    lower[j] = 0.0;
                    diag[j] = 1.0 - dt * diag_l;
                    upper[j] = -dt * up_l;
                } else if (j + 1 == g) {
                    const double diag_l = -2.0 * diff + bj[j] / dx;
                    const double low_l = 2.0 * diff - bj[j] / dx;
                    lower[j] = -dt * low_l;
                    diag[j] = 1.0 - dt * diag_l;
                    upper[j] = 0.0;
                } else {
                    lower[j] = -dt * (diff - adv);
                    diag[j] = 1.0 + dt * 2.0 * diff;
                    upper[j] = -dt * (diff + adv);
                }
            }
            solve_tridiagonal(lower, diag, upper, rhs);
            for (std::size_t j = 0; j < g; ++j) uk[j] = rhs[j];
        }
        for (std::size_t j = 0; j < g; ++j)
            if (!std::isfinite(uk[j]))
                throw NumericalError("FD solution became non-finite at step " + std::to_string(k));
    }
    return sol;
}

void FieldSolution::dump_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw InvalidArgument("cannot open " + path);
    char buf[32];
    os << "t";
    for (double x : xs_) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        os << "," << buf;
    }
    os << "\n";
    for (std::size_t k = 0; k <= grid_.steps(); ++k) {
        std::snprintf(buf, sizeof buf, "%.17g", grid_[k]);
        os << buf;
        for (std::size_t j = 0; j < xs_.size(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", value(k, j));
            os << "," << buf;
        }
        os << "\n";
    }
}

nlohmann::json FieldSolution::manifest() const {
    return nlohmann::json{{"nodes", xs_.size()},
                          {"x_lo", xs_.front()},
                          {"x_hi", xs_.back()},
                          {"steps", grid_.steps()},
                          {"t0", grid_.front()},
                          {"t1", grid_.back()},
                          {"kernel", kernel_name_},
                          {"seed", seed_},
                          {"realization_id", realization_id_},
                          {"boundary", boundary_},
                          {"cfl_warning", cfl_warning_}};
}

nlohmann::json CrossValidationReport::to_json() const {
    return nlohmann::json{{"times", times},
                          {"l2", l2},
                          {"linf", linf},
                          {"rel_l2", rel_l2},
                          {"rel_l2_at_start", rel_l2_at_start}};
}

CrossValidationReport cross_validate(const BackwardSolution& bdsde, const FieldSolution& fd,
                                     const std::vector<double>& probe_nodes) {
    if (bdsde.realization_id() != fd.realization_id())
        throw ContractError("cross-validation requires solutions from the same field realization");
    if (!(bdsde.grid() == fd.grid()))
        throw ContractError("cross-validation requires a shared time grid");
    if (probe_nodes.empty()) throw InvalidArgument("need probe nodes");

    CrossValidationReport rep;
    const std::size_t n = fd.grid().steps();
    for (std::size_t k = 0; k <= n; ++k) {
        double ss = 0.0, si = 0.0, fs = 0.0;
        for (double x : probe_nodes) {
            const double a = bdsde.surface1(k, x);
            const double b = fd.interpolate(k, x);
            ss += (a - b) * (a - b);
            fs += b * b;
            si = std::max(si, std::abs(a - b));
        }
        const double m = static_cast<double>(probe_nodes.size());
        rep.times.push_back(fd.grid()[k]);
        rep.l2.push_back(std::sqrt(ss / m));
        rep.linf.push_back(si);
        rep.rel_l2.push_back(fs > 0.0 ? std::sqrt(ss / fs) : std::sqrt(ss / m));
    }
    rep.rel_l2_at_start = rep.rel_l2.front();
    return rep;
}

} // namespace bdsde
