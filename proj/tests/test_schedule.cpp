#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "uwdiff/error.hpp"
#include "uwdiff/schedule.hpp"

using namespace uwdiff;

TEST_CASE("linear schedule endpoints and known values") {
    const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.T == 1000);
    CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-12));

    // Independent 64-bit product oracle.
    double prod = 1.0;
    for (int t = 1; t <= 1000; ++t) {
        const double beta = 1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0;
        prod *= 1.0 - beta;
    }
    CHECK(s.alpha_bar(1000) == doctest::Approx(prod).epsilon(1e-12));
    CHECK(s.alpha_bar(1000) == doctest::Approx(4.04e-5).epsilon(0.01));
}

TEST_CASE("linear schedule with T=1") {
    const NoiseSchedule s = linear_schedule(1, 0.5, 0.5);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("linear schedule validates bounds") {
    CHECK_THROWS_AS(linear_schedule(0, 1e-4, 0.02), ConfigError);
    CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(linear_schedule(10, 0.03, 0.02), ConfigError);
    CHECK_THROWS_AS(linear_schedule(10, 1e-4, 1.0), ConfigError);
}

TEST_CASE("cosine schedule against the closed form") {
    const int T = 1000;
    const double s = 0.008;
    const NoiseSchedule sched = cosine_schedule(T, s);
    CHECK(sched.alpha_bar(0) == 1.0);

    auto f = [&](double t) {
        const double u = (t / T + s) / (1.0 + s) * (3.14159265358979323846 / 2.0);
        const double c = std::cos(u);
        return c * c;
    };
    // Where no beta was clipped the stored alpha_bar equals f(t)/f(0).
    for (int t : {1, 100, 250, 500, 750, 900}) {
        CHECK(sched.alpha_bar(t) ==
              doctest::Approx(f(t) / f(0)).epsilon(1e-10));
    }
    CHECK(sched.alpha_bar(500) == doctest::Approx(0.49).epsilon(0.05));
}

TEST_CASE("cosine betas are clipped and valid") {
    const NoiseSchedule sched = cosine_schedule(1000);
    for (int t = 1; t <= 1000; ++t) {
        CHECK(sched.beta(t) > 0.0);
        CHECK(sched.beta(t) <= 0.999);
    }
    // The clip binds near the end of the schedule.
    CHECK(sched.beta(1000) == doctest::Approx(0.999));
}

TEST_CASE("alpha_bars strictly decreasing for both schedules") {
    for (const NoiseSchedule& s : {linear_schedule(1000), cosine_schedule(1000)}) {
        for (int t = 1; t <= s.T; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
        CHECK(s.alpha_bar(1) > 0.99);
        CHECK(s.alpha_bar(s.T) < 0.01);
    }
}

TEST_CASE("cosine dominates linear through three quarters of the schedule") {
    const NoiseSchedule lin = linear_schedule(1000);
    const NoiseSchedule cos = cosine_schedule(1000);
    for (int t = 1; t <= 750; ++t) CHECK(cos.alpha_bar(t) > lin.alpha_bar(t));
}

TEST_CASE("coeffs Pythagorean identity") {
    const NoiseSchedule sched = cosine_schedule(1000);
    for (int t = 1; t <= 1000; ++t) {
        const DiffusionCoeffs c = coeffs(sched, t);
        const double lhs = c.sqrt_ab * c.sqrt_ab + c.sqrt_one_minus_ab * c.sqrt_one_minus_ab;
        CHECK(std::abs(lhs - 1.0) <= 1e-12);
    }
}

TEST_CASE("coeffs known values") {
    // alpha_bar = 0.25 gives (0.5, sqrt(0.75)).
    NoiseSchedule s = linear_schedule(1, 0.75, 0.75);
    const DiffusionCoeffs c = coeffs(s, 1);
    CHECK(c.sqrt_ab == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(c.sqrt_one_minus_ab == doctest::Approx(0.8660254037844386).epsilon(1e-12));
}

TEST_CASE("timestep range checks") {
    const NoiseSchedule s = linear_schedule(10);
    CHECK_THROWS(coeffs(s, 0));
    CHECK_THROWS(coeffs(s, 11));
    CHECK_THROWS(s.beta(0));
    CHECK_THROWS(s.alpha_bar(-1));
    CHECK_THROWS(s.alpha_bar(11));
    CHECK_NOTHROW(s.alpha_bar(0));
}
