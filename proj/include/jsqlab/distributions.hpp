#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "jsqlab/quadrature.hpp"
#include "jsqlab/rng.hpp"

namespace jsqlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// stable log of the standard normal CDF
inline double log_norm_cdf(double x) {
    if (x > -10.0) return std::log(0.5 * std::erfc(-x / 1.4142135623730951));
    double x2 = x * x;
    return -0.5 * x2 - 0.91893853320467274178 - std::log(-x) + std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x / 1.4142135623730951); }

struct Exponential {
    double rate;
};
struct Deterministic {
    double value;
};
struct UniformInterval {
    double a, b;
};
struct DiscretePointMasses {
    std::vector<std::pair<double, double>> masses;  // (value, prob), ascending values
};
struct Hyperexponential {
    std::vector<std::pair<double, double>> components;  // (rate, prob)
};
struct Pareto {
    double shape, scale;
};
struct LogNormal {
    double location, scale;
};

struct RegularityFlags {
    bool unbounded_support;
    bool spread_out;
};

/// Interarrival/service law with exact analytics and seeded sampling.
class Distribution {
  public:
    using Variant = std::variant<Exponential, Deterministic, UniformInterval, DiscretePointMasses,
                                 Hyperexponential, Pareto, LogNormal>;

    static Distribution exponential(double rate) {
        require(rate > 0, "exponential rate must be > 0");
        return Distribution(Exponential{rate});
    }
    static Distribution deterministic(double value) {
        require(value > 0, "deterministic value must be > 0");
        return Distribution(Deterministic{value});
    }
    static Distribution uniform(double a, double b) {
        require(a >= 0 && b > a, "uniform interval needs 0 <= a < b");
        return Distribution(UniformInterval{a, b});
    }
    static Distribution discrete(std::vector<std::pair<double, double>> masses) {
        require(!masses.empty(), "discrete law needs at least one mass point");
        double total = 0;
        for (auto& [v, p] : masses) {
            require(v > 0, "discrete mass values must be > 0");
            require(p > 0, "discrete mass probabilities must be > 0");
            total += p;
        }
        require(std::abs(total - 1.0) <= 1e-12, "discrete probabilities must sum to 1");
        std::sort(masses.begin(), masses.end());
        return Distribution(DiscretePointMasses{std::move(masses)});
    }
    static Distribution hyperexponential(std::vector<std::pair<double, double>> components) {
        require(!components.empty(), "hyperexponential needs at least one component");
        double total = 0;
        for (auto& [r, p] : components) {
            require(r > 0, "hyperexponential rates must be > 0");
            require(p > 0, "hyperexponential weights must be > 0");
            total += p;
        }
        require(std::abs(total - 1.0) <= 1e-12, "hyperexponential weights must sum to 1");
        return Distribution(Hyperexponential{std::move(components)});
    }
    static Distribution pareto(double shape, double scale) {
        require(shape > 1, "pareto shape must be > 1 for a finite mean");
        require(scale > 0, "pareto scale must be > 0");
        return Distribution(Pareto{shape, scale});
    }
    static Distribution lognormal(double location, double scale) {
        require(scale > 0, "lognormal scale must be > 0");
        return Distribution(LogNormal{location, scale});
    }

    const Variant& variant() const { return v_; }

    const char* kind() const {
        static const char* names[] = {"exponential", "deterministic",    "uniform", "discrete",
                                      "hyperexponential", "pareto", "lognormal"};
        return names[v_.index()];
    }

    double mean() const {
        return std::visit(
            [](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return 1.0 / d.rate;
                if constexpr (std::is_same_v<T, Deterministic>) return d.value;
                if constexpr (std::is_same_v<T, UniformInterval>) return 0.5 * (d.a + d.b);
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double m = 0;
                    for (auto& [v, p] : d.masses) m += v * p;
                    return m;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double m = 0;
                    for (auto& [r, p] : d.components) m += p / r;
                    return m;
                }
                if constexpr (std::is_same_v<T, Pareto>) return d.shape * d.scale / (d.shape - 1.0);
                if constexpr (std::is_same_v<T, LogNormal>)
                    return std::exp(d.location + 0.5 * d.scale * d.scale);
            },
            v_);
    }

    // E[X^2]; +inf when the law has no second moment
    double second_moment() const {
        return std::visit(
            [](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return 2.0 / (d.rate * d.rate);
                if constexpr (std::is_same_v<T, Deterministic>) return d.value * d.value;
                if constexpr (std::is_same_v<T, UniformInterval>)
                    return (d.a * d.a + d.a * d.b + d.b * d.b) / 3.0;
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double m = 0;
                    for (auto& [v, p] : d.masses) m += v * v * p;
                    return m;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double m = 0;
                    for (auto& [r, p] : d.components) m += 2.0 * p / (r * r);
                    return m;
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (d.shape <= 2.0) return kInf;
                    return d.shape * d.scale * d.scale / (d.shape - 2.0);
                }
                if constexpr (std::is_same_v<T, LogNormal>)
                    return std::exp(2.0 * d.location + 2.0 * d.scale * d.scale);
            },
            v_);
    }

    // First tail moment: integral of y dF(y) over [M, inf).  Atoms sitting
    // exactly at M are included, so tail_first_moment(0) == mean().
    double tail_first_moment(double M) const {
        if (M <= 0) return mean();
        return std::visit(
            [M](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>)
                    return (M + 1.0 / d.rate) * std::exp(-d.rate * M);
                if constexpr (std::is_same_v<T, Deterministic>) return M <= d.value ? d.value : 0.0;
                if constexpr (std::is_same_v<T, UniformInterval>) {
                    if (M >= d.b) return 0.0;
                    double lo = std::max(d.a, M);
                    return (d.b * d.b - lo * lo) / (2.0 * (d.b - d.a));
                }
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double m = 0;
                    for (auto& [v, p] : d.masses)
                        if (v >= M) m += v * p;
                    return m;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double m = 0;
                    for (auto& [r, p] : d.components) m += p * (M + 1.0 / r) * std::exp(-r * M);
                    return m;
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (M <= d.scale) return d.shape * d.scale / (d.shape - 1.0);
                    return d.shape * std::pow(d.scale, d.shape) * std::pow(M, 1.0 - d.shape) /
                           (d.shape - 1.0);
                }
                if constexpr (std::is_same_v<T, LogNormal>) {
                    double z = (d.location + d.scale * d.scale - std::log(M)) / d.scale;
                    return std::exp(d.location + 0.5 * d.scale * d.scale) * norm_cdf(z);
                }
            },
            v_);
    }

    // log of tail_first_moment; usable for thresholds far beyond double range
    double log_tail_first_moment(double M) const {
        if (M <= 0) return std::log(mean());
        return std::visit(
            [M](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>)
                    return std::log(M + 1.0 / d.rate) - d.rate * M;
                if constexpr (std::is_same_v<T, Deterministic>)
                    return M <= d.value ? std::log(d.value) : -kInf;
                if constexpr (std::is_same_v<T, UniformInterval>) {
                    if (M >= d.b) return -kInf;
                    double lo = std::max(d.a, M);
                    return std::log((d.b * d.b - lo * lo) / (2.0 * (d.b - d.a)));
                }
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double m = 0;
                    for (auto& [v, p] : d.masses)
                        if (v >= M) m += v * p;
                    return m > 0 ? std::log(m) : -kInf;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double best = -kInf;
                    for (auto& [r, p] : d.components)
                        best = std::max(best, std::log(p * (M + 1.0 / r)) - r * M);
                    if (!std::isfinite(best)) return -kInf;
                    // logsumexp against the dominant term
                    double sum = 0;
                    for (auto& [r, p] : d.components)
                        sum += std::exp(std::log(p * (M + 1.0 / r)) - r * M - best);
                    return best + std::log(sum);
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (M <= d.scale)
                        return std::log(d.shape * d.scale / (d.shape - 1.0));
                    return std::log(d.shape / (d.shape - 1.0)) + d.shape * std::log(d.scale) +
                           (1.0 - d.shape) * std::log(M);
                }
                if constexpr (std::is_same_v<T, LogNormal>) {
                    double z = (d.location + d.scale * d.scale - std::log(M)) / d.scale;
                    return d.location + 0.5 * d.scale * d.scale + log_norm_cdf(z);
                }
            },
            v_);
    }

    double cdf(double y) const {
        if (y < 0) return 0.0;
        return std::visit(
            [y](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return -std::expm1(-d.rate * y);
                if constexpr (std::is_same_v<T, Deterministic>) return y >= d.value ? 1.0 : 0.0;
                if constexpr (std::is_same_v<T, UniformInterval>) {
                    if (y <= d.a) return 0.0;
                    if (y >= d.b) return 1.0;
                    return (y - d.a) / (d.b - d.a);
                }
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double c = 0;
                    for (auto& [v, p] : d.masses)
                        if (v <= y) c += p;
                    return c;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double c = 0;
                    for (auto& [r, p] : d.components) c += p * -std::expm1(-r * y);
                    return c;
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (y <= d.scale) return 0.0;
                    return 1.0 - std::pow(d.scale / y, d.shape);
                }
                if constexpr (std::is_same_v<T, LogNormal>) {
                    if (y <= 0) return 0.0;
                    return norm_cdf((std::log(y) - d.location) / d.scale);
                }
            },
            v_);
    }

    double survival(double y) const { return 1.0 - cdf(y); }

    double log_survival(double y) const {
        if (y < 0) return 0.0;
        return std::visit(
            [y, this](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return -d.rate * y;
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double best = -kInf;
                    for (auto& [r, p] : d.components) best = std::max(best, std::log(p) - r * y);
                    if (!std::isfinite(best)) return -kInf;
                    double sum = 0;
                    for (auto& [r, p] : d.components) sum += std::exp(std::log(p) - r * y - best);
                    return best + std::log(sum);
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (y <= d.scale) return 0.0;
                    return d.shape * (std::log(d.scale) - std::log(y));
                }
                if constexpr (std::is_same_v<T, LogNormal>) {
                    if (y <= 0) return 0.0;
                    return log_norm_cdf(-(std::log(y) - d.location) / d.scale);
                }
                double s = survival(y);
                return s > 0 ? std::log(s) : -kInf;
            },
            v_);
    }

    double sample(RngStream& rng) const {
        return std::visit(
            [&rng](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return rng.exponential(d.rate);
                if constexpr (std::is_same_v<T, Deterministic>) return d.value;
                if constexpr (std::is_same_v<T, UniformInterval>)
                    return d.a + (d.b - d.a) * rng.u01();
                if constexpr (std::is_same_v<T, DiscretePointMasses>) {
                    double u = rng.u01(), c = 0;
                    for (auto& [v, p] : d.masses) {
                        c += p;
                        if (u <= c) return v;
                    }
                    return d.masses.back().first;
                }
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    double u = rng.u01(), c = 0;
                    for (auto& [r, p] : d.components) {
                        c += p;
                        if (u <= c) return rng.exponential(r);
                    }
                    return rng.exponential(d.components.back().first);
                }
                if constexpr (std::is_same_v<T, Pareto>)
                    return d.scale * std::pow(rng.u01(), -1.0 / d.shape);
                if constexpr (std::is_same_v<T, LogNormal>)
                    return std::exp(d.location + d.scale * rng.normal());
            },
            v_);
    }

    // spread_out is declared per family, not verified analytically
    RegularityFlags regularity_flags() const {
        return std::visit(
            [](const auto& d) -> RegularityFlags {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>) return {true, true};
                if constexpr (std::is_same_v<T, Deterministic>) return {false, false};
                if constexpr (std::is_same_v<T, UniformInterval>) return {false, true};
                if constexpr (std::is_same_v<T, DiscretePointMasses>) return {false, false};
                if constexpr (std::is_same_v<T, Hyperexponential>) return {true, true};
                if constexpr (std::is_same_v<T, Pareto>) return {true, true};
                if constexpr (std::is_same_v<T, LogNormal>) return {true, true};
            },
            v_);
    }

    bool is_atomic() const {
        return std::holds_alternative<Deterministic>(v_) ||
               std::holds_alternative<DiscretePointMasses>(v_);
    }

    std::vector<std::pair<double, double>> atoms() const {
        if (auto* det = std::get_if<Deterministic>(&v_)) return {{det->value, 1.0}};
        if (auto* dm = std::get_if<DiscretePointMasses>(&v_)) return dm->masses;
        return {};
    }

    double support_upper() const {
        return std::visit(
            [](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Deterministic>) return d.value;
                if constexpr (std::is_same_v<T, UniformInterval>) return d.b;
                if constexpr (std::is_same_v<T, DiscretePointMasses>) return d.masses.back().first;
                return kInf;
            },
            v_);
    }

    double support_lower() const {
        return std::visit(
            [](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Deterministic>) return d.value;
                if constexpr (std::is_same_v<T, UniformInterval>) return d.a;
                if constexpr (std::is_same_v<T, DiscretePointMasses>) return d.masses.front().first;
                if constexpr (std::is_same_v<T, Pareto>) return d.scale;
                return 0.0;
            },
            v_);
    }

    double density(double y) const {
        return std::visit(
            [y](const auto& d) -> double {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, Exponential>)
                    return y >= 0 ? d.rate * std::exp(-d.rate * y) : 0.0;
                if constexpr (std::is_same_v<T, UniformInterval>)
                    return (y >= d.a && y <= d.b) ? 1.0 / (d.b - d.a) : 0.0;
                if constexpr (std::is_same_v<T, Hyperexponential>) {
                    if (y < 0) return 0.0;
                    double f = 0;
                    for (auto& [r, p] : d.components) f += p * r * std::exp(-r * y);
                    return f;
                }
                if constexpr (std::is_same_v<T, Pareto>) {
                    if (y < d.scale) return 0.0;
                    return d.shape * std::pow(d.scale, d.shape) / std::pow(y, d.shape + 1.0);
                }
                if constexpr (std::is_same_v<T, LogNormal>) {
                    if (y <= 0) return 0.0;
                    double z = (std::log(y) - d.location) / d.scale;
                    return std::exp(-0.5 * z * z) / (y * d.scale * 2.5066282746310005024);
                }
                return 0.0;  // atomic
            },
            v_);
    }

    // integral of f(y) dF(y) over [lo, inf); exact summation for atomic laws,
    // adaptive quadrature otherwise
    template <typename F>
    double expect_tail(double lo, const F& f) const {
        if (is_atomic()) {
            double total = 0;
            for (auto& [v, p] : atoms())
                if (v >= lo) total += p * f(v);
            return total;
        }
        double a = std::max(lo, support_lower());
        double hi = support_upper();
        auto integrand = [&](double y) { return f(y) * density(y); };
        if (std::isfinite(hi)) {
            if (a >= hi) return 0.0;
            return integrate(integrand, a, hi);
        }
        return integrate_upper(integrand, a, std::max(mean(), a * 0.25 + 1e-9));
    }

    template <typename F>
    double expect(const F& f) const {
        return expect_tail(0.0, f);
    }

    bool operator==(const Distribution& o) const { return v_ == o.v_; }

  private:
    explicit Distribution(Variant v) : v_(std::move(v)) {}
    static void require(bool ok, const char* msg) {
        if (!ok) throw std::invalid_argument(msg);
    }
    Variant v_;
};

inline bool operator==(const Exponential& a, const Exponential& b) { return a.rate == b.rate; }
inline bool operator==(const Deterministic& a, const Deterministic& b) { return a.value == b.value; }
inline bool operator==(const UniformInterval& a, const UniformInterval& b) {
    return a.a == b.a && a.b == b.b;
}
inline bool operator==(const DiscretePointMasses& a, const DiscretePointMasses& b) {
    return a.masses == b.masses;
}
inline bool operator==(const Hyperexponential& a, const Hyperexponential& b) {
    return a.components == b.components;
}
inline bool operator==(const Pareto& a, const Pareto& b) {
    return a.shape == b.shape && a.scale == b.scale;
}
inline bool operator==(const LogNormal& a, const LogNormal& b) {
    return a.location == b.location && a.scale == b.scale;
}

}  // namespace jsqlab
