#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "jsqlab/quadrature.hpp"

using namespace jsqlab;

TEST_CASE("polynomials on finite intervals") {
    CHECK(integrate([](double x) { return x * x; }, 0, 1) == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(integrate([](double x) { return std::sin(x); }, 0, 3.141592653589793) ==
          doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("semi-infinite exponential tails") {
    double full = integrate_upper([](double x) { return std::exp(-x); }, 0, 1.0);
    CHECK(full == doctest::Approx(1.0).epsilon(1e-10));
    // integral of y e^{-y} over [1, inf) = 2/e
    double tail = integrate_upper([](double x) { return x * std::exp(-x); }, 1.0, 1.0);
    CHECK(tail == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("mass far from the left endpoint is not missed") {
    auto bump = [](double x) {
        double z = x - 40.0;
        return std::exp(-0.5 * z * z) / 2.5066282746310005;
    };
    CHECK(integrate_upper(bump, 0, 1.0) == doctest::Approx(1.0).epsilon(1e-8));
}
