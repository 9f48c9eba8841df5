#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/basis.hpp"
#include "bdsde/errors.hpp"
#include "bdsde/rng.hpp"

using namespace bdsde;

namespace {
Eigen::MatrixXd random_states(std::size_t n, std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd s(n, d);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c)
            s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                4.0 * (rng.uniform01() - 0.5);
    return s;
}
} // namespace

TEST_CASE("monomial enumeration counts") {
    CHECK(monomial_exponents(1, 4).size() == 5);
    CHECK(monomial_exponents(2, 2).size() == 6);
    CHECK(monomial_exponents(3, 3).size() == 20);
}

TEST_CASE("polynomial fit recovers polynomials exactly") {
    auto states = random_states(2000, 1, 1);
    RegressionDesign design({BasisKind::Polynomial, 4, 0}, states);
    std::vector<double> y(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
        const double x = states(static_cast<Eigen::Index>(i), 0);
        y[i] = 2.0 - x + 0.5 * x * x * x;
    }
    auto table = design.fit(y);
    for (double x : {-1.5, -0.3, 0.0, 0.9, 1.8}) {
        CHECK(table.evaluate1(x) == doctest::Approx(2.0 - x + 0.5 * x * x * x).epsilon(1e-9));
        CHECK(table.gradient1(x) == doctest::Approx(-1.0 + 1.5 * x * x).epsilon(1e-7));
    }
    CHECK(table.residual_variance() < 1e-18);
}

TEST_CASE("two-dimensional fit and gradient") {
    auto states = random_states(4000, 2, 2);
    RegressionDesign design({BasisKind::Polynomial, 3, 0}, states);
    std::vector<double> y(4000);
    for (std::size_t i = 0; i < 4000; ++i) {
        const double a = states(static_cast<Eigen::Index>(i), 0);
        const double b = states(static_cast<Eigen::Index>(i), 1);
        y[i] = 1.0 + a * b + b * b;
    }
    auto table = design.fit(y);
    const double pt[2] = {0.4, -0.7};
    CHECK(table.evaluate(pt) == doctest::Approx(1.0 + 0.4 * -0.7 + 0.49).epsilon(1e-8));
    double grad[2];
    table.gradient(pt, grad);
    CHECK(grad[0] == doctest::Approx(-0.7).epsilon(1e-6));
    CHECK(grad[1] == doctest::Approx(0.4 + 2.0 * -0.7).epsilon(1e-6));
}

TEST_CASE("degenerate design falls back to the sample mean") {
    Eigen::MatrixXd states = Eigen::MatrixXd::Constant(500, 1, 1.3);
    RegressionDesign design({BasisKind::Polynomial, 4, 0}, states);
    std::vector<double> y(500);
    Rng rng(3);
    double mean = 0.0;
    for (auto& v : y) {
        v = 5.0 + rng.normal();
        mean += v;
    }
    mean /= 500.0;
    auto table = design.fit(y);
    CHECK(table.rank() >= 1);
    CHECK(table.evaluate1(-2.0) == doctest::Approx(mean).epsilon(1e-9));
    CHECK(table.evaluate1(7.0) == doctest::Approx(mean).epsilon(1e-9));
}

TEST_CASE("piecewise-linear equal-mass fit tracks a smooth function") {
    auto states = random_states(20000, 1, 4);
    RegressionDesign design({BasisKind::PiecewiseLinear, 0, 32}, states);
    std::vector<double> y(20000);
    Rng rng(5);
    for (std::size_t i = 0; i < 20000; ++i) {
        const double x = states(static_cast<Eigen::Index>(i), 0);
        y[i] = std::sin(x) + 0.01 * rng.normal();
    }
    auto table = design.fit(y);
    for (double x : {-1.5, -0.5, 0.0, 0.8, 1.6})
        CHECK(table.evaluate1(x) == doctest::Approx(std::sin(x)).epsilon(0.02));
}

TEST_CASE("fitted values agree with table evaluation at the design points") {
    auto states = random_states(300, 1, 6);
    RegressionDesign design({BasisKind::Polynomial, 2, 0}, states);
    std::vector<double> y(300);
    for (std::size_t i = 0; i < 300; ++i)
        y[i] = states(static_cast<Eigen::Index>(i), 0) * 2.0 + 1.0;
    std::vector<double> fitted;
    auto table = design.fit(y, &fitted);
    for (std::size_t i = 0; i < 300; ++i)
        CHECK(fitted[i] ==
              doctest::Approx(table.evaluate1(states(static_cast<Eigen::Index>(i), 0)))
                  .epsilon(1e-9));
}

TEST_CASE("prediction stderr shrinks with the sample size") {
    auto fit_se = [](std::size_t n) {
        auto states = random_states(n, 1, 8);
        RegressionDesign design({BasisKind::Polynomial, 2, 0}, states);
        Rng rng(9);
        std::vector<double> y(n);
        for (auto& v : y) v = rng.normal();
        auto table = design.fit(y);
        return table.prediction_stderr1(0.0);
    };
    CHECK(fit_se(16000) < 0.6 * fit_se(1000));
}

TEST_CASE("non-finite regressand is rejected") {
    auto states = random_states(100, 1, 10);
    RegressionDesign design({BasisKind::Polynomial, 2, 0}, states);
    std::vector<double> y(100, 1.0);
    y[50] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(design.fit(y), NumericalError);
}
