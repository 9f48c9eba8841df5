#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/kernels.hpp"
#include "bdsde/rng.hpp"

using namespace bdsde;

TEST_CASE("constant kernel evaluates to q0 everywhere") {
    auto k = CovarianceKernel::constant(1.0);
    CHECK(k.eval1(0.3, -2.0, 5.0) == 1.0);
    CHECK(k.eval1(0.0, 0.0, 0.0) == 1.0);
    CHECK(k.spatially_constant());
}

TEST_CASE("exponential kernel at coincident points equals the amplitude") {
    auto k = CovarianceKernel::exponential(1.0, 1.0);
    CHECK(k.eval1(0.0, 0.7, 0.7) == doctest::Approx(1.0));
}

TEST_CASE("exponential kernel decay matches scalar arithmetic") {
    // scale 0.5: q(0,1) = exp(-|0-1|/0.5) = exp(-2)
    auto k = CovarianceKernel::exponential(0.5, 1.0);
    const double expected = std::exp(-2.0);
    CHECK(k.eval1(0.1, 0.0, 1.0) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(k.eval1(0.1, 1.0, 0.0) == k.eval1(0.1, 0.0, 1.0));
}

TEST_CASE("kernel symmetry over random probes") {
    auto k = CovarianceKernel::squared_exponential(0.8, 2.0);
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        const double x = 10.0 * (rng.uniform01() - 0.5);
        const double y = 10.0 * (rng.uniform01() - 0.5);
        const double s = rng.uniform01();
        CHECK(k.eval1(s, x, y) == k.eval1(s, y, x));
    }
}

TEST_CASE("non-finite inputs are rejected") {
    auto k = CovarianceKernel::constant(1.0);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(k.eval1(0.0, inf, 0.0), InvalidArgument);
    CHECK_THROWS_AS(k.eval1(inf, 0.0, 0.0), InvalidArgument);
}

TEST_CASE("validation passes the shipped families") {
    ProbeSpec probe;
    probe.lo = -5.0;
    probe.hi = 5.0;

    auto rep = validate_kernel(CovarianceKernel::constant(1.0), probe);
    CHECK(rep.psd_ok);
    CHECK(rep.uniform_bound_ok);
    CHECK(rep.max_abs_q == doctest::Approx(1.0));

    auto rep2 = validate_kernel(CovarianceKernel::squared_exponential(1.0, 2.0), probe);
    CHECK(rep2.psd_ok);
    CHECK(rep2.growth_ok);
    CHECK(rep2.max_abs_q == doctest::Approx(2.0).epsilon(1e-6));

    auto rep3 = validate_kernel(CovarianceKernel::exponential(0.7, 1.0), probe);
    CHECK(rep3.psd_ok);
    CHECK(rep3.holder_ok);
}

TEST_CASE("an indefinite hand-built table is flagged by the eigen oracle") {
    // 3x3 symmetric matrix with a negative eigenvalue: ones off-diagonal,
    // small diagonal.
    const double g[9] = {0.1, 1.0, 1.0, 1.0, 0.1, 1.0, 1.0, 1.0, 0.1};
    const double lam = min_eigenvalue_sym(std::span<const double>(g, 9), 3);
    CHECK(lam < -0.5);  // exact: 0.1 - 1 = -0.9
    CHECK(lam == doctest::Approx(-0.9).epsilon(1e-9));
}

TEST_CASE("degenerate probe region is rejected") {
    ProbeSpec probe;
    probe.lo = 1.0;
    probe.hi = 1.0;
    CHECK_THROWS_AS(validate_kernel(CovarianceKernel::constant(1.0), probe), InvalidArgument);
}

TEST_CASE("time-modulated kernel keeps PSD and bound metadata") {
    TimeFactor f{1.0, 0.5, 2.0};
    auto k = CovarianceKernel::time_modulated(CovarianceKernel::constant(2.0), f);
    CHECK(k.spatially_constant());
    CHECK_FALSE(k.time_homogeneous());
    CHECK(k.bound_M() == doctest::Approx(3.0));
    CHECK(k.eval1(0.0, 4.0, -4.0) == doctest::Approx(2.0 * 1.5));
    // offset < |amp| would allow a negative factor
    TimeFactor bad{0.4, 0.5, 1.0};
    CHECK_THROWS_AS(CovarianceKernel::time_modulated(CovarianceKernel::constant(1.0), bad),
                    InvalidArgument);
}

TEST_CASE("kernel json round trip") {
    auto k = CovarianceKernel::exponential(0.5, 2.0);
    auto k2 = CovarianceKernel::from_json(k.to_json());
    CHECK(k2.eval1(0.0, 0.0, 1.3) == k.eval1(0.0, 0.0, 1.3));
    CHECK(k.to_json() == k2.to_json());
}
