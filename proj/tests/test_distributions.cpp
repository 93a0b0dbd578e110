#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "jsqlab/distributions.hpp"
#include "jsqlab/quadrature.hpp"
#include "jsqlab/rng.hpp"

using namespace jsqlab;

namespace {

std::vector<Distribution> catalogue() {
    return {Distribution::exponential(1.0),
            Distribution::exponential(2.5),
            Distribution::deterministic(2.0),
            Distribution::uniform(0.0, 1.0),
            Distribution::uniform(0.5, 3.0),
            Distribution::discrete({{1.0, 0.5}, {3.0, 0.5}}),
            Distribution::discrete({{0.5, 0.2}, {1.0, 0.5}, {4.0, 0.3}}),
            Distribution::hyperexponential({{0.5, 0.4}, {2.0, 0.6}}),
            Distribution::pareto(3.0, 1.0),
            Distribution::pareto(2.2, 0.5),
            Distribution::lognormal(0.0, 0.5),
            Distribution::lognormal(-0.3, 1.0)};
}

// independent quadrature/summation oracle for the first tail moment
double tail_first_moment_oracle(const Distribution& d, double m) {
    return d.expect_tail(m, [](double y) { return y; });
}

// Kolmogorov-Smirnov statistic evaluated at the sample points, with the
// left limit of the model CDF reconstructed from the atom list
double ks_statistic(std::vector<double> xs, const Distribution& d) {
    std::sort(xs.begin(), xs.end());
    auto atoms = d.atoms();
    auto mass_at = [&](double y) {
        for (auto& [v, p] : atoms)
            if (v == y) return p;
        return 0.0;
    };
    std::size_t n = xs.size();
    double worst = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && xs[j] == xs[i]) ++j;  // run of tied samples
        double f = d.cdf(xs[i]);
        double f_left = f - mass_at(xs[i]);
        worst = std::max(worst, std::abs((double)j / n - f));
        worst = std::max(worst, std::abs((double)i / n - f_left));
        i = j;
    }
    return worst;
}

}  // namespace

TEST_CASE("closed-form means match the quadrature oracle") {
    for (auto& d : catalogue()) {
        double oracle = d.expect([](double y) { return y; });
        CHECK(d.mean() == doctest::Approx(oracle).epsilon(1e-8));
        CHECK(d.mean() > 0);
    }
    CHECK(Distribution::exponential(2.0).mean() == doctest::Approx(0.5));
    CHECK(Distribution::discrete({{1.0, 0.5}, {3.0, 0.5}}).mean() == doctest::Approx(2.0));
    // Pareto(shape 3, scale 1): numeric quadrature over the density gives 1.5
    CHECK(Distribution::pareto(3.0, 1.0).mean() == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("tail first moments: examples and oracle") {
    CHECK(Distribution::exponential(1.0).tail_first_moment(0.0) == doctest::Approx(1.0));
    CHECK(Distribution::deterministic(2.0).tail_first_moment(3.0) == 0.0);
    CHECK(Distribution::exponential(1.0).tail_first_moment(1.0) ==
          doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));  // ~0.7357588823
    for (auto& d : catalogue()) {
        for (double m : {0.0, 0.3, 1.0, 2.7, 6.0}) {
            double closed = d.tail_first_moment(m);
            double oracle = tail_first_moment_oracle(d, m);
            CHECK(closed == doctest::Approx(oracle).epsilon(1e-7).scale(1.0));
        }
    }
}

TEST_CASE("tail first moment is nonincreasing and anchored at the mean") {
    for (auto& d : catalogue()) {
        CHECK(std::abs(d.tail_first_moment(0.0) - d.mean()) <= 1e-9);
        double prev = kInf;
        for (double m = 0.0; m <= 12.0; m += 0.25) {
            double t = d.tail_first_moment(m);
            CHECK(t <= prev + 1e-12);
            CHECK(t >= 0.0);
            prev = t;
        }
    }
}

TEST_CASE("log-domain tail moments agree with the linear ones") {
    for (auto& d : catalogue()) {
        for (double m : {0.5, 2.0, 8.0, 30.0}) {
            double lin = d.tail_first_moment(m);
            double logv = d.log_tail_first_moment(m);
            if (lin > 1e-290) CHECK(logv == doctest::Approx(std::log(lin)).epsilon(1e-8));
            else CHECK(logv < -600.0);
        }
    }
}

TEST_CASE("sampling: point masses and the law of large numbers") {
    RngStream rng = RngStream::seeded(17, 0);
    for (int i = 0; i < 32; ++i) CHECK(Distribution::deterministic(2.0).sample(rng) == 2.0);
    for (int i = 0; i < 32; ++i)
        CHECK(Distribution::discrete({{1.0, 1.0}}).sample(rng) == 1.0);
    auto exp1 = Distribution::exponential(1.0);
    double sum = 0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum += exp1.sample(rng);
    CHECK(std::abs(sum / n - 1.0) < 0.01);
}

TEST_CASE("empirical CDFs stay within KS distance 0.02 at 1e5 samples") {
    int variant = 0;
    for (auto& d : catalogue()) {
        RngStream rng = RngStream::seeded(91, (std::uint64_t)variant++);
        std::vector<double> xs(100000);
        for (auto& x : xs) x = d.sample(rng);
        CHECK(ks_statistic(std::move(xs), d) < 0.02);
    }
}

TEST_CASE("regularity flags per family") {
    auto flags = [](const Distribution& d) { return d.regularity_flags(); };
    CHECK(flags(Distribution::exponential(1)).unbounded_support);
    CHECK(flags(Distribution::exponential(1)).spread_out);
    CHECK_FALSE(flags(Distribution::deterministic(1)).unbounded_support);
    CHECK_FALSE(flags(Distribution::deterministic(1)).spread_out);
    CHECK_FALSE(flags(Distribution::uniform(0, 1)).unbounded_support);
    CHECK(flags(Distribution::uniform(0, 1)).spread_out);
    CHECK(flags(Distribution::hyperexponential({{1.0, 1.0}})).unbounded_support);
    CHECK(flags(Distribution::pareto(2.0, 1.0)).unbounded_support);
    CHECK(flags(Distribution::lognormal(0, 1)).unbounded_support);
    CHECK_FALSE(flags(Distribution::discrete({{1.0, 1.0}})).unbounded_support);
}

TEST_CASE("unbounded_support agrees with a survival probe") {
    for (auto& d : catalogue()) {
        bool flag = d.regularity_flags().unbounded_support;
        double far = d.support_upper();
        if (flag) {
            CHECK(d.survival(1e6) >= 0.0);
            CHECK(far == kInf);
        } else {
            CHECK(d.survival(far + 1.0) == 0.0);
        }
    }
}

TEST_CASE("second moments") {
    CHECK(Distribution::exponential(2.0).second_moment() == doctest::Approx(0.5));
    CHECK(Distribution::uniform(0, 1).second_moment() == doctest::Approx(1.0 / 3));
    CHECK(Distribution::pareto(1.5, 1.0).second_moment() == kInf);
    for (auto& d : catalogue()) {
        if (!std::isfinite(d.second_moment())) continue;
        double oracle = d.expect([](double y) { return y * y; });
        CHECK(d.second_moment() == doctest::Approx(oracle).epsilon(1e-6));
    }
}

TEST_CASE("construction rejects invalid parameters") {
    CHECK_THROWS_AS(Distribution::exponential(0.0), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::uniform(2.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::discrete({{1.0, 0.4}, {2.0, 0.4}}), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::discrete({{-1.0, 1.0}}), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::pareto(1.0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(Distribution::lognormal(0.0, 0.0), std::invalid_argument);
}
