#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/oracles.hpp"
#include "bdsde/stats.hpp"

using namespace bdsde;

namespace {

FieldRealization field_for(const CovarianceKernel& kernel, const PathBundle& bundle,
                           std::uint64_t seed) {
    std::vector<std::vector<double>> sets;
    if (!kernel.spatially_constant()) sets = bundle.right_endpoint_points();
    return sample_increments(kernel, bundle.grid(), bundle.dim(), sets, seed);
}

} // namespace

TEST_CASE("gamma is identically one for a null linear driver") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    auto kernel = CovarianceKernel::constant(1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 16);
    auto bundle = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 4, 1);
    auto field = field_for(kernel, bundle, 2);
    LinearDriverSpec spec;  // h = alpha = beta = 0
    for (auto form : {GammaForm::Exponent, GammaForm::Product}) {
        auto g = gamma_functional(spec, bundle, field, form);
        for (std::size_t m = 0; m < 4; ++m)
            for (std::size_t i = 0; i <= 16; ++i)
                for (std::size_t j = i; j <= 16; ++j) CHECK(g.gamma(m, i, j) == 1.0);
    }
}

TEST_CASE("deterministic exponential weight is exact in both forms") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    auto kernel = CovarianceKernel::constant(1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    auto bundle = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 2, 3);
    auto field = field_for(kernel, bundle, 4);
    LinearDriverSpec spec;
    spec.alpha = LinearCoef::constant(0.7);
    for (auto form : {GammaForm::Exponent, GammaForm::Product}) {
        auto g = gamma_functional(spec, bundle, field, form);
        // left-endpoint quadrature of a constant alpha is exact
        CHECK(g.gamma(0, 16, 48) == doctest::Approx(std::exp(0.7 * 0.5)).epsilon(1e-12));
        CHECK(g.gamma(0, 0, 64) == doctest::Approx(std::exp(0.7)).epsilon(1e-12));
    }
}

TEST_CASE("gamma cocycle holds exactly on the grid") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    auto kernel = CovarianceKernel::constant(0.8);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    auto bundle = simulate(coeffs, StartSpec::point1(0.0, 0.2), grid, 8, 5);
    auto field = field_for(kernel, bundle, 6);
    LinearDriverSpec spec;
    spec.alpha = LinearCoef::constant(0.3);
    spec.beta = LinearCoef::constant(1.0);
    for (auto form : {GammaForm::Exponent, GammaForm::Product}) {
        auto g = gamma_functional(spec, bundle, field, form);
        for (std::size_t m = 0; m < 8; ++m)
            for (std::size_t i : {0, 5, 12})
                for (std::size_t u : {13, 20})
                    for (std::size_t j : {25, 32}) {
                        const double lhs = g.gamma(m, i, u) * g.gamma(m, u, j);
                        CHECK(lhs == doctest::Approx(g.gamma(m, i, j)).epsilon(1e-12));
                    }
    }
}

TEST_CASE("exponential-martingale mean: E Gamma = 1 over realizations") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto kernel = CovarianceKernel::constant(1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    LinearDriverSpec spec;
    spec.beta = LinearCoef::constant(1.0);
    const std::size_t n_real = 20000;
    std::vector<double> vals_exp(n_real), vals_prod(n_real);
    auto bundle = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 1, 7);
    for (std::size_t r = 0; r < n_real; ++r) {
        auto field = field_for(kernel, bundle, 100 + r);
        vals_exp[r] = gamma_functional(spec, bundle, field, GammaForm::Exponent).gamma(0, 0, 64);
        vals_prod[r] = gamma_functional(spec, bundle, field, GammaForm::Product).gamma(0, 0, 64);
    }
    auto me = mean_stderr(vals_exp);
    auto mp = mean_stderr(vals_prod);
    CHECK(std::abs(me.mean - 1.0) <= 3.0 * me.stderr_);
    CHECK(std::abs(mp.mean - 1.0) <= 3.0 * mp.stderr_);
}

TEST_CASE("explicit linear estimator reduces to the heat mean when the field is off") {
    auto kernel = CovarianceKernel::constant(0.0);  // q == 0: weight factors vanish
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    auto field = sample_increments(kernel, grid, 1, {}, 11);
    auto phi = TerminalCondition::poly_clamped(0.0, 1.0, 12.0);
    for (double x : {-0.5, 0.7}) {
        auto ms = explicit_linear_fk(phi, kernel, field, 0, x, 40000, 13);
        CHECK(std::abs(ms.mean - x) <= 3.0 * ms.stderr_);
    }
}

TEST_CASE("explicit linear estimator with phi = 1 has unit mean over realizations") {
    auto kernel = CovarianceKernel::constant(1.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    auto phi = TerminalCondition::cosine(1.0, 0.0, 0.0);
    const std::size_t n_real = 2000;
    std::vector<double> vals(n_real);
    for (std::size_t r = 0; r < n_real; ++r) {
        auto field = sample_increments(kernel, grid, 1, {}, 500 + r);
        vals[r] = explicit_linear_fk(phi, kernel, field, 0, 0.0, 64, 17 + r).mean;
    }
    auto ms = mean_stderr(vals);
    CHECK(std::abs(ms.mean - 1.0) <= 3.0 * ms.stderr_);
}

TEST_CASE("deterministic reduction oracle") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    // the smooth clamp costs E[(x+W)^3]/(3 c^2); keep it negligible here
    auto phi_x = TerminalCondition::poly_clamped(0.0, 1.0, 1e6);
    CHECK(deterministic_fk(phi_x, 0.0, coeffs, 0.0, 0.4, 1.0) ==
          doctest::Approx(0.4).epsilon(1e-6));

    auto one = TerminalCondition::cosine(1.0, 0.0, 0.0);
    CHECK(deterministic_fk(one, -1.0, coeffs, 0.0, 0.0, 1.0) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

    // Gaussian convolution of a bump against the quadrature oracle
    auto bump = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    const double v = deterministic_fk(bump, 0.0, coeffs, 0.0, 0.5, 1.0);
    const double exact = 1.0 / std::sqrt(2.0) * std::exp(-0.25 / 2.0 / 2.0 * 2.0 * 0.5);
    // closed form: w/sqrt(w^2+T) exp(-x^2/(2(w^2+T)))
    const double closed = 1.0 / std::sqrt(2.0) * std::exp(-0.25 / (2.0 * 2.0));
    (void)exact;
    CHECK(v == doctest::Approx(closed).epsilon(1e-10));
}

TEST_CASE("oracle self-consistency: q = 0 explicit matches the deterministic oracle") {
    auto kernel = CovarianceKernel::constant(0.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    auto field = sample_increments(kernel, grid, 1, {}, 19);
    auto bump = TerminalCondition::gaussian_bump(1.0, 0.0, 1.0);
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    auto ms = explicit_linear_fk(bump, kernel, field, 0, 0.3, 60000, 23);
    const double det = deterministic_fk(bump, 0.0, coeffs, 0.0, 0.3, 1.0);
    CHECK(std::abs(ms.mean - det) <= 3.0 * ms.stderr_);
}

TEST_CASE("gauss-hermite expectation is exact for polynomials") {
    // E[(x + s Z)] = x and E[cos(k(x+sZ))] = cos(kx) e^{-k^2 s^2/2}
    auto lin = TerminalCondition::poly_clamped(0.0, 1.0, 1e6);
    CHECK(gauss_hermite_expectation(lin, 1.2, 0.7) == doctest::Approx(1.2).epsilon(1e-9));
    auto cosphi = TerminalCondition::cosine(1.0, 2.0, 0.0);
    const double v = gauss_hermite_expectation(cosphi, 0.5, 0.3);
    CHECK(v == doctest::Approx(std::cos(1.0) * std::exp(-4.0 * 0.3 / 2.0)).epsilon(1e-9));
}

TEST_CASE("product-form weight clamps pathological factors and flags it") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    auto kernel = CovarianceKernel::constant(400.0);  // wild field, factors can cross zero
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
    auto bundle = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 64, 29);
    auto field = field_for(kernel, bundle, 30);
    LinearDriverSpec spec;
    spec.beta = LinearCoef::constant(1.0);
    auto g = gamma_functional(spec, bundle, field, GammaForm::Product);
    CHECK(g.clamped());
}
