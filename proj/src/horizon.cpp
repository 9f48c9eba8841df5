#include "bdsde/horizon.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/rng.hpp"
#include "bdsde/stats.hpp"

namespace bdsde {

double dissipativity_margin(const Driver& driver, const CovarianceKernel& kernel, double k_prime) {
    const double K = std::max(driver.lipschitz_K(), driver.g_lipschitz_Ky());
    const double alpha = driver.alpha();
    const double M = kernel.has_uniform_bound() ? kernel.bound_M() : 0.0;
    if (!kernel.has_uniform_bound())
        throw InvalidArgument("infinite-horizon work needs a uniformly bounded kernel");
    return 2.0 * driver.monotonicity_mu() - k_prime - K / (1.0 - alpha) - K * M;
}

namespace {

double resolve_k_prime(const Driver& driver, const CovarianceKernel& kernel, double k_prime) {
    double kp = k_prime > 0.0 ? k_prime : driver.monotonicity_mu() / 2.0;
    const double margin = dissipativity_margin(driver, kernel, kp);
    if (!(margin > 0.0))
        throw InvalidArgument(
            "dissipativity margin 2 mu - K' - K/(1-alpha) - K M must be positive (got " +
            std::to_string(margin) + ")");
    return kp;
}

/// Union of per-step evaluation points a solve on `bundle` will request,
/// mapped into base-realization step indices via `map_step`.
void collect_points(const PathBundle& bundle,
                    const std::function<std::size_t(std::size_t)>& map_step,
                    std::vector<std::vector<double>>& sets) {
    for (std::size_t k = 0; k < bundle.grid().steps(); ++k) {
        auto& dst = sets[map_step(k)];
        for (std::size_t m = 0; m < bundle.paths(); ++m) {
            auto x = bundle.state(m, k + 1);
            dst.insert(dst.end(), x.begin(), x.end());
        }
    }
}

} // namespace

nlohmann::json HorizonReport::to_json() const {
    return nlohmann::json{{"k_prime", k_prime},
                          {"margin", margin},
                          {"horizons", horizons},
                          {"sup_differences", sup_differences},
                          {"discounted_tail", discounted_tail},
                          {"probe_x", probe_x},
                          {"u0", u0}};
}

HorizonReport solve_horizon(const Driver& driver, const SdeCoefficients& coeffs,
                            const CovarianceKernel& kernel, const HorizonParams& params,
                            const std::vector<double>& probe_x, std::uint64_t seed) {
    if (params.ladder.size() < 2) throw InvalidArgument("horizon ladder needs at least two rungs");
    for (std::size_t j = 0; j + 1 < params.ladder.size(); ++j)
        if (!(params.ladder[j] < params.ladder[j + 1]))
            throw InvalidArgument("horizon ladder must be increasing");

    HorizonReport rep;
    rep.k_prime = resolve_k_prime(driver, kernel, params.k_prime);
    rep.margin = dissipativity_margin(driver, kernel, rep.k_prime);
    rep.horizons = params.ladder;
    rep.probe_x = probe_x;

    const double n_max = params.ladder.back();
    const std::size_t total_steps =
        static_cast<std::size_t>(std::llround(n_max * static_cast<double>(params.steps_per_unit)));
    TimeGrid full_grid = TimeGrid::uniform(0.0, n_max, total_steps);

    const StartSpec start = StartSpec::spread(0.0, params.spread_lo, params.spread_hi);
    const std::uint64_t w_seed = hash_combine(seed, "horizon-w", 0);
    PathBundle full_bundle = simulate(coeffs, start, full_grid, params.paths, w_seed);

    std::vector<std::vector<double>> point_sets;
    if (!kernel.spatially_constant()) point_sets = full_bundle.right_endpoint_points();
    FieldRealization full_field = sample_increments(kernel, full_grid, coeffs.dim(), point_sets,
                                                    hash_combine(seed, "horizon-b", 0));

    const SchemeConfig scheme{params.basis, params.n_inner, true};
    const TerminalCondition zero = TerminalCondition::zero();

    std::vector<BackwardSolution> runs;
    runs.reserve(params.ladder.size());
    for (double n_j : params.ladder) {
        const std::size_t steps_j = static_cast<std::size_t>(
            std::llround(n_j * static_cast<double>(params.steps_per_unit)));
        FieldRealization field_j = steps_j == total_steps ? full_field : full_field.prefix(steps_j);
        // Same seed, same per-step stream: the prefix bundle reproduces the
        // full bundle's draws on shared steps, so rung differences isolate
        // truncation error from noise.
        PathBundle bundle_j =
            simulate(coeffs, start, field_j.grid(), params.paths, w_seed);
        runs.push_back(solve(driver, zero, bundle_j, field_j, scheme));
    }

    for (std::size_t j = 0; j + 1 < runs.size(); ++j) {
        const auto& a = runs[j];
        const auto& b = runs[j + 1];
        const std::size_t shared = a.grid().steps();
        double acc = 0.0;
        for (std::size_t m = 0; m < a.paths(); ++m) {
            double sup = 0.0;
            for (std::size_t k = 0; k <= shared; ++k) {
                const double dy = b.y(m, k) - a.y(m, k);
                sup = std::max(sup, std::exp(-rep.k_prime * a.grid()[k]) * dy * dy);
            }
            acc += sup;
        }
        rep.sup_differences.push_back(acc / static_cast<double>(a.paths()));
    }

    const auto& longest = runs.back();
    for (double n_j : rep.horizons) {
        const std::size_t k = longest.grid().index_of(n_j);
        double acc = 0.0;
        for (std::size_t m = 0; m < longest.paths(); ++m) acc += longest.y(m, k) * longest.y(m, k);
        rep.discounted_tail.push_back(std::exp(-rep.k_prime * n_j) * acc /
                                      static_cast<double>(longest.paths()));
    }

    for (double x : probe_x) rep.u0.push_back(longest.surface1(0, x));
    return rep;
}

nlohmann::json PeriodicityReport::to_json() const {
    return nlohmann::json{{"tau", tau},
                          {"horizon", horizon},
                          {"max_discrepancy", max_discrepancy},
                          {"max_combined_se", max_combined_se},
                          {"truncation_estimate", truncation_estimate},
                          {"probe_t", probe_t},
                          {"probe_x", probe_x},
                          {"discrepancy", discrepancy},
                          {"combined_se", combined_se}};
}

namespace {

/// Mean surface over independent-Brownian replicas, plus the stderr of the
/// replica mean, evaluated lazily at probe points.
struct ReplicaSurface {
    std::vector<BackwardSolution> runs;

    MeanStderr at(std::size_t level, double x) const {
        std::vector<double> vals;
        vals.reserve(runs.size());
        for (const auto& r : runs) vals.push_back(r.surface1(level, x));
        auto ms = mean_stderr(vals);
        if (runs.size() == 1) ms.stderr_ = runs[0].surface_stderr1(level, x);
        return ms;
    }
};

ReplicaSurface solve_replicas(const Driver& driver, const SdeCoefficients& coeffs,
                              const FieldRealization& field, const HorizonParams& params,
                              std::size_t replicas, std::uint64_t w_seed_base) {
    ReplicaSurface out;
    const SchemeConfig scheme{params.basis, params.n_inner, true};
    const TerminalCondition zero = TerminalCondition::zero();
    const StartSpec start = StartSpec::spread(0.0, params.spread_lo, params.spread_hi);
    for (std::size_t r = 0; r < replicas; ++r) {
        PathBundle bundle = simulate(coeffs, start, field.grid(), params.paths,
                                     hash_combine(w_seed_base, "replica", r));
        out.runs.push_back(solve(driver, zero, bundle, field, scheme));
    }
    return out;
}

} // namespace

PeriodicityReport verify_periodicity(const Driver& driver, const SdeCoefficients& coeffs,
                                     const CovarianceKernel& kernel, const HorizonParams& params,
                                     const std::vector<double>& probe_t,
                                     const std::vector<double>& probe_x, std::uint64_t seed) {
    const double tau = driver.periodic_tau();
    if (!driver.time_independent() && tau <= 0.0)
        throw InvalidArgument("periodicity check needs a tau-periodic driver");
    const double tau_eff = tau > 0.0 ? tau : 1.0;  // time-independent drivers are tau-periodic for any tau
    resolve_k_prime(driver, kernel, params.k_prime);

    const double horizon = params.ladder.empty() ? 6.0 : params.ladder.back();
    const std::size_t total_steps = static_cast<std::size_t>(
        std::llround(horizon * static_cast<double>(params.steps_per_unit)));
    TimeGrid grid = TimeGrid::uniform(0.0, horizon, total_steps);
    const double dt = grid.dt(0);
    const double shift_f = tau_eff / dt;
    const std::size_t shift_steps = static_cast<std::size_t>(std::llround(shift_f));
    if (std::abs(shift_f - static_cast<double>(shift_steps)) > 1e-9)
        throw InvalidArgument("tau must be an integer multiple of the grid step");

    const std::size_t replicas = std::max<std::size_t>(2, params.replicas);
    const std::uint64_t w1 = hash_combine(seed, "periodic-w1", 0);
    const std::uint64_t w2 = hash_combine(seed, "periodic-w2", 0);

    std::vector<std::vector<double>> point_sets;
    if (!kernel.spatially_constant()) {
        point_sets.assign(total_steps, {});
        const StartSpec start = StartSpec::spread(0.0, params.spread_lo, params.spread_hi);
        for (std::size_t r = 0; r < replicas; ++r) {
            PathBundle b1 = simulate(coeffs, start, grid, params.paths, hash_combine(w1, "replica", r));
            collect_points(b1, [](std::size_t k) { return k; }, point_sets);
            PathBundle b2 = simulate(coeffs, start, grid_dropped_front(grid, shift_steps),
                                     params.paths, hash_combine(w2, "replica", r));
            collect_points(b2, [&](std::size_t k) { return k + shift_steps; }, point_sets);
        }
    }
    FieldRealization field =
        sample_increments(kernel, grid, coeffs.dim(), point_sets, hash_combine(seed, "periodic-b", 0));

    ReplicaSurface run1 = solve_replicas(driver, coeffs, field, params, replicas, w1);
    FieldRealization shifted = field.shifted(shift_steps);
    ReplicaSurface run2 = solve_replicas(driver, coeffs, shifted, params, replicas, w2);

    PeriodicityReport rep;
    rep.tau = tau_eff;
    rep.horizon = horizon;
    rep.probe_t = probe_t;
    rep.probe_x = probe_x;
    double max_t = 0.0;
    for (double t : probe_t) {
        const std::size_t lvl = grid.index_of(t);
        max_t = std::max(max_t, t);
        if (lvl + shift_steps > total_steps)
            throw InvalidArgument("probe time t + tau beyond the horizon");
        for (double x : probe_x) {
            const auto a = run2.at(lvl, x);                 // u'(t, x)
            const auto b = run1.at(lvl + shift_steps, x);   // u(t + tau, x)
            rep.discrepancy.push_back(std::abs(a.mean - b.mean));
            rep.combined_se.push_back(std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_));
        }
    }
    rep.max_discrepancy = *std::max_element(rep.discrepancy.begin(), rep.discrepancy.end());
    rep.max_combined_se = *std::max_element(rep.combined_se.begin(), rep.combined_se.end());
    rep.truncation_estimate =
        std::exp(-driver.monotonicity_mu() * (horizon - tau_eff - max_t));
    return rep;
}

nlohmann::json StationaryReport::to_json() const {
    return nlohmann::json{{"anchor_T", anchor_T},
                          {"probe_t", probe_t},
                          {"shifts", shifts},
                          {"shift_discrepancy", shift_discrepancy},
                          {"shift_combined_se", shift_combined_se},
                          {"t_vs_2t_discrepancy", t_vs_2t_discrepancy},
                          {"t_vs_2t_se", t_vs_2t_se},
                          {"truncation_scale", truncation_scale},
                          {"measurability_ok", measurability_ok}};
}

StationaryReport stationary_solution(const Driver& driver, const SdeCoefficients& coeffs,
                                     const CovarianceKernel& kernel, const HorizonParams& params,
                                     double anchor_T, double probe_t,
                                     const std::vector<double>& shifts,
                                     const std::vector<double>& probe_x, std::uint64_t seed) {
    if (!driver.time_independent())
        throw InvalidArgument("stationary construction needs a time-independent driver");
    resolve_k_prime(driver, kernel, params.k_prime);
    if (!(probe_t < anchor_T)) throw InvalidArgument("probe time must be below the anchor");

    const double t_max = 2.0 * anchor_T;
    const std::size_t total_steps = static_cast<std::size_t>(
        std::llround(t_max * static_cast<double>(params.steps_per_unit)));
    TimeGrid tilde_grid = TimeGrid::uniform(0.0, t_max, total_steps);
    const double dt = tilde_grid.dt(0);
    auto on_grid = [&](double v) {
        const double f = v / dt;
        const std::size_t idx = static_cast<std::size_t>(std::llround(f));
        if (std::abs(f - static_cast<double>(idx)) > 1e-9)
            throw InvalidArgument("anchor, probe time and shifts must be grid-aligned");
        return idx;
    };
    const std::size_t i_T = on_grid(anchor_T);
    const std::size_t i_2T = total_steps;
    const std::size_t j_probe_T = i_T - on_grid(probe_t);  // level of T - t in the [0,T] run

    const std::size_t replicas = std::max<std::size_t>(2, params.replicas);
    const std::uint64_t wT = hash_combine(seed, "stat-wT", 0);
    const std::uint64_t w2T = hash_combine(seed, "stat-w2T", 0);

    std::vector<std::vector<double>> point_sets;
    if (!kernel.spatially_constant()) {
        point_sets.assign(total_steps, {});
        const StartSpec start = StartSpec::spread(0.0, params.spread_lo, params.spread_hi);
        auto declare = [&](const TimeGrid& g, std::uint64_t wseed,
                           const std::function<std::size_t(std::size_t)>& map_step) {
            for (std::size_t r = 0; r < replicas; ++r) {
                PathBundle b = simulate(coeffs, start, g, params.paths, hash_combine(wseed, "replica", r));
                collect_points(b, map_step, point_sets);
            }
        };
        declare(grid_reversed_about(tilde_grid, i_T), wT,
                [&](std::size_t k) { return i_T - 1 - k; });
        declare(grid_reversed_about(tilde_grid, i_2T), w2T,
                [&](std::size_t k) { return i_2T - 1 - k; });
        for (std::size_t s = 0; s < shifts.size(); ++s) {
            const std::size_t ir = on_grid(shifts[s]);
            declare(grid_reversed_about(grid_dropped_front(tilde_grid, ir), i_T),
                    hash_combine(seed, "stat-wshift", s),
                    [&](std::size_t k) { return ir + i_T - 1 - k; });
        }
    }
    FieldRealization tilde = sample_increments(kernel, tilde_grid, coeffs.dim(), point_sets,
                                               hash_combine(seed, "stat-b", 0));

    ReplicaSurface vT = solve_replicas(driver, coeffs, tilde.reversed(i_T), params, replicas, wT);
    ReplicaSurface v2T = solve_replicas(driver, coeffs, tilde.reversed(i_2T), params, replicas, w2T);

    StationaryReport rep;
    rep.anchor_T = anchor_T;
    rep.probe_t = probe_t;
    rep.shifts = shifts;
    rep.truncation_scale = std::exp(-driver.monotonicity_mu() * anchor_T);

    for (std::size_t s = 0; s < shifts.size(); ++s) {
        const std::size_t ir = on_grid(shifts[s]);
        if (ir > j_probe_T) throw InvalidArgument("shift exceeds the probe level (need t + r <= T)");
        FieldRealization field_s = tilde.shifted(ir).reversed(i_T);
        ReplicaSurface lhs = solve_replicas(driver, coeffs, field_s, params, replicas,
                                            hash_combine(seed, "stat-wshift", s));
        double worst = 0.0, worst_se = 0.0;
        for (double x : probe_x) {
            const auto a = lhs.at(j_probe_T, x);              // theta_r v(t, x)
            const auto b = vT.at(j_probe_T - ir, x);          // v(t + r, x) = u_T(T-t-r)
            worst = std::max(worst, std::abs(a.mean - b.mean));
            worst_se = std::max(worst_se, std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_));
        }
        rep.shift_discrepancy.push_back(worst);
        rep.shift_combined_se.push_back(worst_se);
    }

    // T-independence: v_T(t, .) against v_2T(t, .)
    {
        const std::size_t j_probe_2T = i_2T - on_grid(probe_t);
        double worst = 0.0, worst_se = 0.0;
        for (double x : probe_x) {
            const auto a = vT.at(j_probe_T, x);
            const auto b = v2T.at(j_probe_2T, x);
            worst = std::max(worst, std::abs(a.mean - b.mean));
            worst_se = std::max(worst_se, std::sqrt(a.stderr_ * a.stderr_ + b.stderr_ * b.stderr_));
        }
        rep.t_vs_2t_discrepancy = worst;
        rep.t_vs_2t_se = worst_se;
    }

    // Measurability: resample the pre-reversal future of B~ and check the
    // v_T(t,.) surfaces are bitwise unchanged.
    {
        FieldRealization alt = sample_increments(kernel, tilde_grid, coeffs.dim(), point_sets,
                                                 hash_combine(seed, "stat-b-alt", 0));
        FieldRealization spliced = tilde.spliced(alt, on_grid(probe_t));
        ReplicaSurface vT_spliced =
            solve_replicas(driver, coeffs, spliced.reversed(i_T), params, replicas, wT);
        bool ok = true;
        for (double x : probe_x)
            for (std::size_t r = 0; r < replicas; ++r)
                if (vT.runs[r].surface1(j_probe_T, x) != vT_spliced.runs[r].surface1(j_probe_T, x))
                    ok = false;
        rep.measurability_ok = ok;
    }
    return rep;
}

} // namespace bdsde
