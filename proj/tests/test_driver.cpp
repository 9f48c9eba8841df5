#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <nlohmann/json.hpp>

#include "bdsde/driver.hpp"

using namespace bdsde;

TEST_CASE("linear f validates with its declared constants") {
    auto d = Driver::make(FFamily::LinearY, GFamily::Zero).with_lambda(-1.0).with_alpha(0.1);
    auto kernel = CovarianceKernel::constant(0.25);
    auto rep = validate_driver(d, kernel, {}, 0.25);
    CHECK(rep.lipschitz_ok);
    CHECK(rep.alpha_ok);
    CHECK(rep.monotone_ok);
    CHECK(rep.monotone_worst <= doctest::Approx(-1.0));
    // 2*1 - 0.25 - 1/(1-0.1) - 1*0.25 > 0
    CHECK(rep.margin == doctest::Approx(2.0 - 0.25 - 1.0 / 0.9 - 0.25));
    CHECK(rep.margin_ok);
}

TEST_CASE("z-sensitive g respects the alpha contract only for small kernels") {
    // g = beta z with beta^2 q <= alpha: beta = sqrt(alpha/q0)
    const double alpha = 0.5, q0 = 2.0;
    auto good = Driver::make(FFamily::Zero, GFamily::LinearZ)
                    .with_beta(std::sqrt(alpha / q0))
                    .with_alpha(alpha);
    auto kernel = CovarianceKernel::constant(q0);
    auto rep = validate_driver(good, kernel, {});
    CHECK(rep.alpha_q_max == doctest::Approx(alpha).epsilon(1e-9));
    CHECK(rep.alpha_ok);

    auto bad = Driver::make(FFamily::Zero, GFamily::LinearZ).with_beta(1.0).with_alpha(alpha);
    auto rep2 = validate_driver(bad, kernel, {});
    CHECK_FALSE(rep2.alpha_ok);  // 1 * q0 = 2 > alpha
}

TEST_CASE("bounded cosine g passes its Lipschitz bound") {
    auto d = Driver::make(FFamily::CosBounded, GFamily::CosY).with_eps(1.0);
    auto kernel = CovarianceKernel::constant(0.2);
    auto rep = validate_driver(d, kernel, {});
    CHECK(rep.lipschitz_ok);
    CHECK(rep.worst_f_ratio <= 4.0 + 1e-9);
}

TEST_CASE("periodic driver shift check is exact, aperiodic fails it") {
    auto periodic =
        Driver::make(FFamily::PeriodicForcing, GFamily::Zero).with_mu(1.0).with_tau(0.5);
    auto kernel = CovarianceKernel::constant(0.1);
    auto rep = validate_driver(periodic, kernel, {});
    CHECK(rep.periodic_ok);
    CHECK(rep.periodic_max_diff <= 1e-12);  // exact up to phase-reduction rounding
    CHECK(periodic.periodic_tau() == 0.5);

    // time-independent drivers are periodic for any tau
    auto autonomous = Driver::make(FFamily::DissipativeAffine, GFamily::Zero).with_mu(2.0);
    CHECK(validate_driver(autonomous, kernel, {}).periodic_ok);
    CHECK(autonomous.time_independent());
}

TEST_CASE("dissipative margin fails when the kernel bound is too large") {
    auto d = Driver::make(FFamily::DissipativeAffine, GFamily::Zero).with_mu(1.0).with_alpha(0.1);
    auto rep = validate_driver(d, CovarianceKernel::constant(4.0), {}, 0.5);
    CHECK_FALSE(rep.margin_ok);
}

TEST_CASE("driver json round trip preserves behavior") {
    auto d = Driver::make(FFamily::PeriodicForcing, GFamily::SinY)
                 .with_mu(1.5)
                 .with_tau(2.0)
                 .with_eps(0.3)
                 .with_alpha(0.2);
    auto back = Driver::from_json(d.to_json());
    const double z = 0.4;
    std::span<const double> zs(&z, 1);
    for (double t : {0.0, 0.3, 1.7})
        for (double y : {-1.0, 0.5}) {
            CHECK(d.f(t, zs, y, zs) == back.f(t, zs, y, zs));
            CHECK(d.g(t, zs, y, zs) == back.g(t, zs, y, zs));
        }
}

TEST_CASE("terminal registry values and derivatives") {
    auto clamp = TerminalCondition::poly_clamped(0.0, 1.0, 8.0);
    CHECK(clamp.value1(0.5) == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(clamp.value1(100.0) <= 8.0);
    CHECK(clamp.d1(0.0) == doctest::Approx(1.0).epsilon(1e-9));

    auto bump = TerminalCondition::gaussian_bump(2.0, 0.5, 1.5);
    CHECK(bump.value1(0.5) == doctest::Approx(2.0));
    const double h = 1e-6;
    CHECK(bump.d1(1.2) ==
          doctest::Approx((bump.value1(1.2 + h) - bump.value1(1.2 - h)) / (2.0 * h)).epsilon(1e-5));

    auto cos = TerminalCondition::cosine(1.0, 2.0, 0.3);
    CHECK(cos.value1(0.0) == doctest::Approx(std::cos(0.3)));
    CHECK(TerminalCondition::zero().value1(3.0) == 0.0);
}

TEST_CASE("degenerate probe spec is rejected") {
    DriverProbeSpec probe;
    probe.y_lo = probe.y_hi = 0.0;
    CHECK_THROWS_AS(
        validate_driver(Driver::make(FFamily::Zero, GFamily::Zero),
                        CovarianceKernel::constant(1.0), probe),
        InvalidArgument);
}
