#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bdsde/sde.hpp"
#include "bdsde/stats.hpp"

using namespace bdsde;

TEST_CASE("frozen dynamics keep the state and the flow") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 0.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 16);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.7), grid, 4, 1, true);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t k = 0; k <= 16; ++k) {
            CHECK(b.state1(m, k) == 0.7);
            CHECK(b.flow(m, k)[0] == 1.0);
        }
}

TEST_CASE("pure constant drift integrates exactly") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Ones(1), 0.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 64);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 2, 1);
    CHECK(b.state1(0, 64) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("OU terminal variance matches the closed form") {
    // dX = -X dt + sqrt(2) dW from 0: Var X_T = 1 - e^{-2T}
    auto coeffs = SdeCoefficients::ou(1.0, std::sqrt(2.0), 1);
    const double T = 1.0;
    TimeGrid grid = TimeGrid::uniform(0.0, T, 256);
    const std::size_t m = 100000;
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, m, 42);
    std::vector<double> xt(m);
    for (std::size_t i = 0; i < m; ++i) xt[i] = b.state1(i, 256);
    double var = 0.0;
    for (double x : xt) var += x * x;
    var /= static_cast<double>(m);
    const double target = 1.0 - std::exp(-2.0 * T);
    // sample-variance spread plus O(dt) Euler bias allowance
    const double se = target * std::sqrt(2.0 / static_cast<double>(m)) + 2.0 / 256.0;
    CHECK(std::abs(var - target) <= 3.0 * se);
}

TEST_CASE("Brownian increments have the right moments") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 50000, 7);
    for (std::size_t k = 0; k < 4; ++k) {
        std::vector<double> dw(b.paths());
        for (std::size_t m = 0; m < b.paths(); ++m) dw[m] = b.dw(m, k)[0];
        auto ms = mean_stderr(dw);
        CHECK(std::abs(ms.mean) <= 4.0 * ms.stderr_);
        double var = 0.0;
        for (double d : dw) var += d * d;
        var /= static_cast<double>(b.paths());
        CHECK(var == doctest::Approx(0.25).epsilon(0.05));
    }
}

TEST_CASE("paths reconstruct exactly from the same seed") {
    auto coeffs = SdeCoefficients::ou(0.5, 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 32);
    auto a = simulate(coeffs, StartSpec::point1(0.0, 1.0), grid, 8, 99);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 1.0), grid, 8, 99);
    for (std::size_t m = 0; m < 8; ++m)
        for (std::size_t k = 0; k <= 32; ++k) CHECK(a.state1(m, k) == b.state1(m, k));
}

TEST_CASE("prefix simulation shares draws with the longer run") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    TimeGrid full = TimeGrid::uniform(0.0, 2.0, 32);
    TimeGrid half = TimeGrid::uniform(0.0, 1.0, 16);
    auto a = simulate(coeffs, StartSpec::point1(0.0, 0.3), full, 4, 5);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.3), half, 4, 5);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t k = 0; k <= 16; ++k) CHECK(a.state1(m, k) == b.state1(m, k));
}

TEST_CASE("flow matches centered finite differences under common noise") {
    auto coeffs = SdeCoefficients::tanh_family(
        Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -0.8),
        Eigen::VectorXd::Constant(1, 1.0), Eigen::VectorXd::Constant(1, 0.3));
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 128);
    const double x0 = 0.4, h = 1e-4;
    auto mid = simulate(coeffs, StartSpec::point1(0.0, x0), grid, 16, 17, true);
    auto up = simulate(coeffs, StartSpec::point1(0.0, x0 + h), grid, 16, 17);
    auto dn = simulate(coeffs, StartSpec::point1(0.0, x0 - h), grid, 16, 17);
    for (std::size_t m = 0; m < 16; ++m) {
        const double fd = (up.state1(m, 128) - dn.state1(m, 128)) / (2.0 * h);
        const double fl = mid.flow(m, 128)[0];
        CHECK(std::abs(fl - fd) / std::max(std::abs(fd), 1e-8) <= 1e-2);
    }
}

TEST_CASE("restart at an interior state reproduces the tail exactly") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 32);
    auto full = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 1, 23);

    // rebuild the tail from step 16 with the same residual increments
    const std::size_t k0 = 16;
    double x = full.state1(0, k0);
    for (std::size_t k = k0; k < 32; ++k) {
        const double dt = grid.dt(k);
        std::vector<double> drift(1), sigma(1);
        coeffs.drift(std::span<const double>(&x, 1), drift);
        coeffs.diffusion(std::span<const double>(&x, 1), sigma);
        x = x + drift[0] * dt + sigma[0] * full.dw(0, k)[0];
        CHECK(x == doctest::Approx(full.state1(0, k + 1)).epsilon(1e-14));
    }
}

TEST_CASE("strong-order halving with coupled increments") {
    auto coeffs = SdeCoefficients::tanh_family(
        Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, -1.0),
        Eigen::VectorXd::Constant(1, 0.8), Eigen::VectorXd::Constant(1, 0.2));
    const std::size_t n_paths = 4096;
    // fine reference at 4N, coarse runs at N and 2N assembled from the
    // same fine increments
    const std::size_t n_fine = 256;
    TimeGrid fine = TimeGrid::uniform(0.0, 1.0, n_fine);
    auto ref = simulate(coeffs, StartSpec::point1(0.0, 0.2), fine, n_paths, 31);

    auto euler_on_subgrid = [&](std::size_t stride, std::size_t m) {
        double x = 0.2;
        for (std::size_t k = 0; k < n_fine; k += stride) {
            double dw = 0.0;
            for (std::size_t j = 0; j < stride; ++j) dw += ref.dw(m, k + j)[0];
            const double dt = fine.dt(0) * static_cast<double>(stride);
            std::vector<double> drift(1), sigma(1);
            coeffs.drift(std::span<const double>(&x, 1), drift);
            coeffs.diffusion(std::span<const double>(&x, 1), sigma);
            x = x + drift[0] * dt + sigma[0] * dw;
        }
        return x;
    };

    double e_coarse = 0.0, e_half = 0.0;
    for (std::size_t m = 0; m < n_paths; ++m) {
        const double xf = ref.state1(m, n_fine);
        e_coarse += std::abs(euler_on_subgrid(4, m) - xf);
        e_half += std::abs(euler_on_subgrid(2, m) - xf);
    }
    e_coarse /= static_cast<double>(n_paths);
    e_half /= static_cast<double>(n_paths);
    const double ratio = e_half / e_coarse;
    CHECK(ratio >= 0.5 * 0.7);
    CHECK(ratio <= 0.5 * 1.3);
}

TEST_CASE("moment probe on frozen and deterministic dynamics") {
    auto zero = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 0.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 2048);
    auto at_zero = simulate(zero, StartSpec::point1(0.0, 0.0), grid, 2, 1);
    CHECK(moment_probe(at_zero, 1.0, 1.0) == 0.0);

    auto at_one = simulate(zero, StartSpec::point1(0.0, 1.0), grid, 2, 1);
    // int_0^1 e^{-r} dr = 1 - e^{-1}, left-endpoint quadrature error O(dt)
    CHECK(moment_probe(at_one, 1.0, 1.0) ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(2e-3));
}

TEST_CASE("moment probe on OU paths against quadrature of the closed-form second moment") {
    // dX = -X dt + sqrt(2) dW, X_0 = 0: E X_t^2 = 1 - e^{-2t}
    auto coeffs = SdeCoefficients::ou(1.0, std::sqrt(2.0), 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 512);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 20000, 3);
    const double probe = moment_probe(b, 1.0, 1.0);
    double target = 0.0;
    for (std::size_t k = 0; k < 512; ++k) {
        const double t = grid[k];
        target += std::exp(-t) * (1.0 - std::exp(-2.0 * t)) * grid.dt(k);
    }
    // Monte Carlo spread of the path integral
    CHECK(probe == doctest::Approx(target).epsilon(0.03));
}

TEST_CASE("divergent coefficients report step and path") {
    // huge linear drift with a large step blows up in finite time
    auto coeffs = SdeCoefficients::linear(Eigen::MatrixXd::Constant(1, 1, 1e8), {}, 0.0);
    TimeGrid grid = TimeGrid::uniform(0.0, 100.0, 4);
    CHECK_THROWS_AS(simulate(coeffs, StartSpec::point1(0.0, 1e300), grid, 1, 1),
                    NumericalError);
}

TEST_CASE("empty bundle and bad arguments are rejected") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4);
    CHECK_THROWS_AS(simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 0, 1), InvalidArgument);
    auto b = simulate(coeffs, StartSpec::point1(0.0, 0.0), grid, 2, 1);
    CHECK_THROWS_AS(moment_probe(b, 0.5, 1.0), InvalidArgument);
    CHECK_THROWS_AS(moment_probe(b, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("spread start stratifies the interval deterministically") {
    auto coeffs = SdeCoefficients::constant(Eigen::VectorXd::Zero(1), 0.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 2);
    auto b = simulate(coeffs, StartSpec::spread(0.0, -1.0, 1.0), grid, 4, 1);
    CHECK(b.state1(0, 0) == doctest::Approx(-0.75));
    CHECK(b.state1(3, 0) == doctest::Approx(0.75));
}

TEST_CASE("bundle container round trip is lossless") {
    auto coeffs = SdeCoefficients::ou(1.0, 1.0, 1);
    TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 8);
    auto b = simulate(coeffs, StartSpec::spread(0.0, -1.0, 1.0), grid, 16, 777, true);
    std::ostringstream os(std::ios::binary);
    b.serialize(os);
    std::istringstream is(os.str(), std::ios::binary);
    auto c = PathBundle::deserialize(is);
    CHECK(c.paths() == 16);
    CHECK(c.has_flow());
    for (std::size_t m = 0; m < 16; ++m)
        for (std::size_t k = 0; k <= 8; ++k) {
            CHECK(c.state1(m, k) == b.state1(m, k));
            CHECK(c.flow(m, k)[0] == b.flow(m, k)[0]);
        }
    std::ostringstream os2(std::ios::binary);
    c.serialize(os2);
    CHECK(os.str() == os2.str());
}

TEST_CASE("coefficient json round trip") {
    auto coeffs = SdeCoefficients::tanh_family(
        Eigen::VectorXd::Constant(1, 0.1), Eigen::VectorXd::Constant(1, -1.0),
        Eigen::VectorXd::Constant(1, 0.9), Eigen::VectorXd::Constant(1, 0.2));
    auto back = SdeCoefficients::from_json(coeffs.to_json());
    const double x = 0.37;
    std::vector<double> d1(1), d2(1);
    coeffs.drift(std::span<const double>(&x, 1), d1);
    back.drift(std::span<const double>(&x, 1), d2);
    CHECK(d1[0] == d2[0]);
}
