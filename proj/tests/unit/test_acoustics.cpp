#include "doctest.h"
#include "gen.hpp"

#include "auvtrack/acoustics.hpp"
#include "auvtrack/errors.hpp"

#include <cmath>
#include <limits>

using namespace auvtrack;

namespace {

// Independent evaluation of the propagation formulas.
double oracle_alpha(double f) {
    const double f2 = f * f;
    return 0.11 * f2 / (1 + f2) + 44 * f2 / (4100 + f2) + 2.75e-4 * f2 + 0.003;
}
double oracle_tl(double d, double f) { return 20 * std::log10(d) + d * oracle_alpha(f) * 1e-3; }

}  // namespace

TEST_SUITE("acoustics") {

TEST_CASE("thorp absorption") {
    CHECK(thorp_alpha(10.0) == doctest::Approx(oracle_alpha(10.0)).epsilon(1e-14));
    CHECK(std::abs(thorp_alpha(10.0) - 1.18703) < 1e-5);
    CHECK(std::abs(thorp_alpha(1e-9) - 0.003) < 1e-12);
    double prev = thorp_alpha(1.0);
    for (double f = 1.5; f <= 100.0; f += 0.5) {
        const double a = thorp_alpha(f);
        CHECK(a > prev);
        prev = a;
    }
    CHECK_THROWS_AS(thorp_alpha(0.0), DomainError);
    CHECK_THROWS_AS(thorp_alpha(-1.0), DomainError);
}

TEST_CASE("transmission loss") {
    CHECK(std::abs(transmission_loss(100, 10) - 40.1187) < 1e-3);
    CHECK(std::abs(transmission_loss(12, 10) - 21.598) < 1e-3);
    CHECK(std::abs(transmission_loss(1, 10) - 0.0012) < 1e-4);
    CHECK(transmission_loss(12, 10) == doctest::Approx(oracle_tl(12, 10)).epsilon(1e-14));
    CHECK_THROWS_AS(transmission_loss(0.0, 10), DomainError);
}

TEST_CASE("echo margin and SNR hand values") {
    HydroParams hp;
    CHECK(std::abs(active_echo_margin(25.0, hp) - 0.023) < 1e-3);
    CHECK(std::abs(active_echo_margin(25.1, hp) - (-0.047)) < 1e-3);
    CHECK(std::abs(passive_snr(12.0, hp) - 51.402) < 1e-2);
    CHECK(std::abs(passive_snr(14.03, hp) - 50.05) < 2e-2);
    CHECK(active_echo_margin(25.0, hp) == doctest::Approx(56.0 - 2 * oracle_tl(25.0, 10)).epsilon(1e-12));
}

TEST_CASE("detection radius") {
    HydroParams hp;
    const double r = detection_radius(hp);
    CHECK(std::abs(r - 25.03) < 0.05);
    CHECK(std::abs(active_echo_margin(r, hp)) < 1e-2);
    HydroParams louder = hp;
    louder.sl += 20;
    CHECK(detection_radius(louder) > r);
    HydroParams deaf = hp;
    deaf.dt_thresh = 1e9;
    CHECK_THROWS_AS(detection_radius(deaf), DomainError);
}

TEST_CASE("monotonicity and identity properties") {
    HydroParams hp;
    gen::Gen g(11);
    for (int k = 0; k < 500; ++k) {
        const double d1 = g.uniform(0.1, 200);
        const double d2 = d1 + g.uniform(1e-3, 50);
        CHECK(transmission_loss(d2, hp.f) > transmission_loss(d1, hp.f));
        CHECK(active_echo_margin(d2, hp) < active_echo_margin(d1, hp));
        CHECK(passive_snr(d2, hp) < passive_snr(d1, hp));
        const double lhs = passive_snr(d1, hp) - active_echo_margin(d1, hp);
        const double rhs = transmission_loss(d1, hp.f) - hp.ts + hp.dt_thresh;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

}
