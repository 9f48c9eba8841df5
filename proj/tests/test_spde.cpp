#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "bdsde/experiments.hpp"
#include "bdsde/oracles.hpp"
#include "bdsde/spde.hpp"

using namespace bdsde;

namespace {

FieldRealization grid_field(const CovarianceKernel& kernel, const TimeGrid& grid,
                            const SpdeGridSpec& gspec, std::uint64_t seed) {
    std::vector<std::vector<double>> sets;
    if (!kernel.spatially_constant()) sets = spde_node_point_sets(gspec, grid.steps());
    return sample_increments(kernel, grid, 1, sets, seed);
}

} // namespace

TEST_CASE("terminal level is exact and values stay finite") {
    auto kernel = CovarianceKernel::constant(0.5);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto driver = Driver::make(FFamily::LinearY, GFamily::LinearY).with_lambda(-0.5).with_beta(0.8);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    SpdeGridSpec gspec{-6.0, 6.0, 121};
    auto field = grid_field(kernel, grid, gspec, 1);
    auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
    for (std::size_t j = 0; j < 121; ++j) {
        CHECK(sol.value(64, j) == terminal.value(std::span<const double>(&sol.nodes()[j], 1)));
        CHECK(std::isfinite(sol.value(0, j)));
    }
}

TEST_CASE("backward heat flow matches the Gaussian convolution") {
    // f = g = 0, sigma = sqrt(2): u(0,x) widens the bump by variance 2T
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), std::sqrt(2.0), 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::Zero);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    const double T = 0.25;
    TimeGrid grid = TimeGrid::uniform(0.0, T, 256);
    SpdeGridSpec gspec{-8.0, 8.0, 400};
    auto field = grid_field(kernel, grid, gspec, 2);
    auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
    double linf = 0.0;
    for (std::size_t j = 0; j < gspec.nodes; ++j) {
        const double x = sol.nodes()[j];
        if (std::abs(x) > 4.0) continue;
        const double exact = closed_form::heat_bump(1.0, 0.0, 1.0, 2.0 * T, x);
        linf = std::max(linf, std::abs(sol.value(0, j) - exact));
    }
    CHECK(linf <= 1e-3);
}

TEST_CASE("linear f scales the heat solution by the integrating factor") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), std::sqrt(2.0), 1);
    const double lambda = 0.8, T = 0.25;
    auto driver = Driver::make(FFamily::LinearY, GFamily::Zero).with_lambda(lambda);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, T, 256);
    SpdeGridSpec gspec{-8.0, 8.0, 400};
    auto field = grid_field(kernel, grid, gspec, 3);
    auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
    double linf = 0.0;
    for (std::size_t j = 0; j < gspec.nodes; ++j) {
        const double x = sol.nodes()[j];
        if (std::abs(x) > 4.0) continue;
        const double exact =
            std::exp(lambda * T) * closed_form::heat_bump(1.0, 0.0, 1.0, 2.0 * T, x);
        linf = std::max(linf, std::abs(sol.value(0, j) - exact));
    }
    CHECK(linf <= 1.5e-3);
}

TEST_CASE("noise consistency: with a frozen generator the g-terms telescope exactly") {
    auto kernel = CovarianceKernel::exponential(1.0, 1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 0.0, 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::AffineY).with_g_offset(1.0).with_beta(0.0);
    auto terminal = TerminalCondition::cosine(0.5, 1.0, 0.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    SpdeGridSpec gspec{-2.0, 2.0, 17};
    auto field = grid_field(kernel, grid, gspec, 4);
    auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
    for (std::size_t j = 0; j < gspec.nodes; ++j) {
        const double x = sol.nodes()[j];
        const double total = field.cumulative1(32, x);
        CHECK(sol.noise_applied()[j] == doctest::Approx(total).epsilon(1e-12));
        CHECK(sol.value(0, j) ==
              doctest::Approx(terminal.value1(x) + total).epsilon(1e-12));
    }
}

TEST_CASE("solution is linear in the terminal for linear drivers") {
    auto kernel = CovarianceKernel::constant(0.5);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto driver = Driver::make(FFamily::LinearY, GFamily::LinearY).with_lambda(-0.4).with_beta(0.6);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    SpdeGridSpec gspec{-6.0, 6.0, 201};
    auto field = grid_field(kernel, grid, gspec, 5);
    const double k = 1.1;
    auto phi1 = TerminalCondition::cosine(1.0, k, 0.0);
    auto phi2 = TerminalCondition::cosine(1.0, k, std::numbers::pi / 2.0);
    auto phi12 = TerminalCondition::cosine(2.0 * std::cos(std::numbers::pi / 4.0), k,
                                           std::numbers::pi / 4.0);
    auto s1 = solve_spde(driver, phi1, coeffs, kernel, field, gspec);
    auto s2 = solve_spde(driver, phi2, coeffs, kernel, field, gspec);
    auto s12 = solve_spde(driver, phi12, coeffs, kernel, field, gspec);
    for (std::size_t k2 = 0; k2 <= 64; k2 += 16)
        for (std::size_t j = 0; j < 201; j += 20)
            CHECK(std::abs(s12.value(k2, j) - s1.value(k2, j) - s2.value(k2, j)) <= 1e-10);
}

TEST_CASE("joint refinement shrinks the deterministic error by about half") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), std::sqrt(2.0), 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::Zero);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    const double T = 0.25;
    auto err = [&](std::size_t steps, std::size_t nodes, std::uint64_t seed) {
        TimeGrid grid = TimeGrid::uniform(0.0, T, steps);
        SpdeGridSpec gspec{-8.0, 8.0, nodes};
        auto field = grid_field(kernel, grid, gspec, seed);
        auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
        double linf = 0.0;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double x = sol.nodes()[j];
            if (std::abs(x) > 4.0) continue;
            linf = std::max(linf,
                            std::abs(sol.value(0, j) - closed_form::heat_bump(1.0, 0.0, 1.0,
                                                                              2.0 * T, x)));
        }
        return linf;
    };
    // time error dominates at this balance, so joint halving halves the error
    const double coarse = err(32, 401, 6);
    const double fine = err(64, 801, 7);
    const double ratio = fine / coarse;
    CHECK(ratio >= 0.3);
    CHECK(ratio <= 0.7);
}

TEST_CASE("explicit-diffusion variant raises the stability warning") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), std::sqrt(2.0), 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::Zero);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 0.1, 8);  // dt = 0.0125
    SpdeGridSpec gspec{-4.0, 4.0, 201};             // dx = 0.04: s^2 dt/dx^2 >> 0.5
    auto field = grid_field(kernel, grid, gspec, 8);
    SpdeOptions opts;
    opts.explicit_diffusion = true;
    auto sol = solve_spde(driver, terminal, coeffs, kernel, field, gspec, opts);
    CHECK(sol.cfl_warning());
}

TEST_CASE("cross validation agrees for the classical reduction and checks contracts") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::Zero);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    SpdeGridSpec gspec{-7.0, 7.0, 281};
    auto field = grid_field(kernel, grid, gspec, 9);

    auto bundle = simulate(coeffs, StartSpec::spread(0.0, -1.5, 1.5), grid, 30000, 10);
    SchemeConfig scheme;
    scheme.basis = {BasisKind::Polynomial, 6, 0};
    auto bs = solve(driver, terminal, bundle, field, scheme);
    auto fd = solve_spde(driver, terminal, coeffs, kernel, field, gspec);

    std::vector<double> probes;
    for (double x = -1.0; x <= 1.001; x += 0.125) probes.push_back(x);
    auto rep = cross_validate(bs, fd, probes);
    CHECK(rep.rel_l2_at_start <= 0.03);

    // mismatched realization ids must be rejected
    auto field2 = grid_field(kernel, grid, gspec, 999);
    auto fd2 = solve_spde(driver, terminal, coeffs, kernel, field2, gspec);
    CHECK_THROWS_AS(cross_validate(bs, fd2, probes), ContractError);
}

TEST_CASE("linear g case: FD solution tracks the explicit linear estimator per node") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto driver = Driver::make(FFamily::Zero, GFamily::LinearY).with_beta(1.0);
    auto terminal = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    SpdeGridSpec gspec{-7.0, 7.0, 281};
    auto field = grid_field(kernel, grid, gspec, 11);
    auto fd = solve_spde(driver, terminal, coeffs, kernel, field, gspec);
    for (double x : {-0.5, 0.0, 0.5}) {
        auto oracle = explicit_linear_fk(terminal, kernel, field, 0, x, 60000, 12);
        CHECK(std::abs(fd.interpolate(0, x) - oracle.mean) <= 3.0 * oracle.stderr_ + 2e-3);
    }
}

TEST_CASE("kernel mismatch with the realization is rejected") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto other = CovarianceKernel::constant(2.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
    SpdeGridSpec gspec{-2.0, 2.0, 11};
    auto field = grid_field(kernel, grid, gspec, 13);
    CHECK_THROWS_AS(solve_spde(Driver::make(FFamily::Zero, GFamily::Zero),
                               TerminalCondition::zero(), coeffs, other, field, gspec),
                    ContractError);
}

TEST_CASE("csv dump and manifest are written") {
    auto kernel = CovarianceKernel::constant(1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 0.5, 8);
    SpdeGridSpec gspec{-2.0, 2.0, 21};
    auto field = grid_field(kernel, grid, gspec, 14);
    auto sol = solve_spde(Driver::make(FFamily::Zero, GFamily::Zero),
                          TerminalCondition::gaussian_bump(1.0, 0.0, 1.0), coeffs, kernel, field,
                          gspec);
    const std::string path = "spde_dump_test.csv";
    sol.dump_csv(path);
    std::FILE* f = std::fopen(path.c_str(), "r");
    REQUIRE(f != nullptr);
    std::fclose(f);
    std::remove(path.c_str());
    CHECK(sol.manifest().at("nodes").get<std::size_t>() == 21);
}
