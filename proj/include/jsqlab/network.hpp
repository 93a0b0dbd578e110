#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "jsqlab/distributions.hpp"
#include "jsqlab/errors.hpp"
#include "jsqlab/rng.hpp"

namespace jsqlab {

using QueueSet = std::vector<int>;  // sorted, unique, 0-based queue indices

inline std::uint64_t set_to_mask(const QueueSet& s) {
    std::uint64_t m = 0;
    for (int n : s) m |= (std::uint64_t{1} << n);
    return m;
}

inline QueueSet mask_to_set(std::uint64_t m) {
    QueueSet s;
    for (int n = 0; m; ++n, m >>= 1)
        if (m & 1) s.push_back(n);
    return s;
}

inline double choose_real(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double c = 1.0;
    for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
    return c;
}

// ---------------------------------------------------------------------------
// Selection rules

struct ExplicitRule {
    // (selection set, probability); probabilities sum to 1
    std::vector<std::pair<QueueSet, double>> sets;
};
struct MeanFieldChoose {
    int d;
};
struct MeanFieldWithReplacement {
    int d;
};
struct CircleNeighborhood {
    int radius;
};

struct SelectionRule {
    std::variant<ExplicitRule, MeanFieldChoose, MeanFieldWithReplacement, CircleNeighborhood> v;
};

// queues offered to stream k by a circle rule: the 2*radius queues nearest the
// stream point sitting between queue k and k+1 (indices wrap around)
inline QueueSet circle_window(int k, int radius, int N) {
    std::set<int> w;
    for (int j = 0; j < radius; ++j) {
        w.insert(((k + j) % N + N) % N);
        w.insert(((k + 1 + j) % N + N) % N);
    }
    return QueueSet(w.begin(), w.end());
}

// ---------------------------------------------------------------------------
// Service maps

struct ClassIndependent {
    std::vector<Distribution> per_queue;  // F_n
};
struct StationIndependent {
    std::vector<Distribution> per_stream;  // default F_k
    struct Override {
        int stream;
        QueueSet set;
        Distribution dist;
    };
    std::vector<Override> overrides;  // F_{k,B} exceptions
};

enum class DisciplineKind {
    Fifo,
    LifoPreemptive,
    ProcessorSharing,
    DesignatedQueue,
    PriorityShortestResidual,
    PriorityLongestResidual,
};

enum class AssignmentKind { Jsq, Jllq, RandomD1, JsqHandicap };

enum class TieBreak { UniformRandom, MinIndex };

struct NetworkSpec {
    int N = 0;
    int K = 0;
    std::vector<Distribution> interarrival;  // G_k
    std::vector<SelectionRule> selection;    // per stream
    std::variant<ClassIndependent, StationIndependent> service;
    DisciplineKind discipline = DisciplineKind::Fifo;
    AssignmentKind assignment = AssignmentKind::Jsq;
    int handicap_kappa = 0;
    TieBreak tie_break = TieBreak::UniformRandom;

    bool class_independent() const { return std::holds_alternative<ClassIndependent>(service); }

    double arrival_rate(int k) const { return 1.0 / interarrival[k].mean(); }

    const Distribution& service_dist(int k, const QueueSet& set, int n) const {
        if (auto* ci = std::get_if<ClassIndependent>(&service)) return ci->per_queue[n];
        auto& si = std::get<StationIndependent>(service);
        for (auto& ov : si.overrides)
            if (ov.stream == k && ov.set == set) return ov.dist;
        return si.per_stream[k];
    }

    // m-ring of (k,A): 1 for class independent, m_{k,A} for station independent
    double m_ring(int k, const QueueSet& set) const {
        if (class_independent()) return 1.0;
        return service_dist(k, set, set.empty() ? 0 : set.front()).mean();
    }

    // mu-ring of n: mu_n for class independent, 1 for station independent
    double mu_ring(int n) const {
        if (auto* ci = std::get_if<ClassIndependent>(&service)) return 1.0 / ci->per_queue[n].mean();
        return 1.0;
    }

    double mu_ring_sum() const {
        double s = 0;
        for (int n = 0; n < N; ++n) s += mu_ring(n);
        return s;
    }

    // every distinct service law paired with its rate mu_j
    std::vector<std::pair<Distribution, double>> distinct_service_laws() const {
        std::vector<std::pair<Distribution, double>> out;
        auto push = [&](const Distribution& d) {
            for (auto& [e, mu] : out)
                if (e == d) return;
            out.emplace_back(d, 1.0 / d.mean());
        };
        if (auto* ci = std::get_if<ClassIndependent>(&service)) {
            for (auto& d : ci->per_queue) push(d);
        } else {
            auto& si = std::get<StationIndependent>(service);
            for (auto& d : si.per_stream) push(d);
            for (auto& ov : si.overrides) push(ov.dist);
        }
        return out;
    }

    double m_max() const {
        double m = 0;
        for (auto& [d, mu] : distinct_service_laws()) m = std::max(m, d.mean());
        return m;
    }

    double m_ring_ratio() const {
        if (class_independent()) return 1.0;
        double lo = kInf, hi = 0;
        for (auto& [d, mu] : distinct_service_laws()) {
            lo = std::min(lo, d.mean());
            hi = std::max(hi, d.mean());
        }
        return hi / lo;
    }

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("network spec: " + m); };
        if (N < 1 || K < 1) fail("N and K must be >= 1");
        if ((int)interarrival.size() != K || (int)selection.size() != K)
            fail("per-stream arrays must have K entries");
        for (auto& rule : selection) {
            if (auto* ex = std::get_if<ExplicitRule>(&rule.v)) {
                if (ex->sets.empty()) fail("explicit rule needs at least one set");
                double total = 0;
                for (auto& [s, p] : ex->sets) {
                    if (s.empty()) fail("selection sets must be nonempty");
                    if (!std::is_sorted(s.begin(), s.end())) fail("selection sets must be sorted");
                    if (std::adjacent_find(s.begin(), s.end()) != s.end())
                        fail("selection sets must not repeat queues");
                    if (s.front() < 0 || s.back() >= N) fail("selection set out of range");
                    if (p < 0) fail("selection probabilities must be >= 0");
                    total += p;
                }
                if (std::abs(total - 1.0) > 1e-12) fail("explicit probabilities must sum to 1");
            } else if (auto* mf = std::get_if<MeanFieldChoose>(&rule.v)) {
                if (mf->d < 1 || mf->d > N) fail("mean-field D must be in [1, N]");
            } else if (auto* mr = std::get_if<MeanFieldWithReplacement>(&rule.v)) {
                if (mr->d < 1) fail("with-replacement D must be >= 1");
            } else if (auto* c = std::get_if<CircleNeighborhood>(&rule.v)) {
                if (c->radius < 1) fail("circle radius must be >= 1");
            }
        }
        if (auto* ci = std::get_if<ClassIndependent>(&service)) {
            if ((int)ci->per_queue.size() != N) fail("class-independent map needs N entries");
        } else {
            auto& si = std::get<StationIndependent>(service);
            if ((int)si.per_stream.size() != K) fail("station-independent map needs K entries");
            for (auto& ov : si.overrides) {
                if (ov.stream < 0 || ov.stream >= K) fail("override stream out of range");
                if (!std::holds_alternative<ExplicitRule>(selection[ov.stream].v) &&
                    !std::holds_alternative<CircleNeighborhood>(selection[ov.stream].v))
                    fail("service overrides require an explicit or circle selection rule");
            }
        }
        if (assignment == AssignmentKind::JsqHandicap && handicap_kappa < 0)
            fail("handicap must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// Selection sampling

inline QueueSet sample_selection(const SelectionRule& rule, int k, int N, RngStream& rng) {
    if (auto* ex = std::get_if<ExplicitRule>(&rule.v)) {
        double u = rng.u01(), c = 0;
        for (auto& [s, p] : ex->sets) {
            c += p;
            if (u <= c) return s;
        }
        return ex->sets.back().first;
    }
    if (auto* mf = std::get_if<MeanFieldChoose>(&rule.v)) {
        // Floyd's algorithm: D distinct indices, uniform over D-subsets
        std::set<int> chosen;
        for (int j = N - mf->d; j < N; ++j) {
            int t = (int)rng.below(j + 1);
            if (!chosen.insert(t).second) chosen.insert(j);
        }
        return QueueSet(chosen.begin(), chosen.end());
    }
    if (auto* mr = std::get_if<MeanFieldWithReplacement>(&rule.v)) {
        std::set<int> chosen;
        for (int j = 0; j < mr->d; ++j) chosen.insert((int)rng.below(N));
        return QueueSet(chosen.begin(), chosen.end());
    }
    auto& c = std::get<CircleNeighborhood>(rule.v);
    return circle_window(k, c.radius, N);
}

inline QueueSet sample_selection(const NetworkSpec& spec, int k, RngStream& rng) {
    return sample_selection(spec.selection[k], k, spec.N, rng);
}

// probability that a stream-k arrival is a potential arrival at queue n
inline double inclusion_prob(const NetworkSpec& spec, int k, int n) {
    const auto& rule = spec.selection[k];
    if (auto* ex = std::get_if<ExplicitRule>(&rule.v)) {
        double p = 0;
        for (auto& [s, w] : ex->sets)
            if (std::binary_search(s.begin(), s.end(), n)) p += w;
        return p;
    }
    if (auto* mf = std::get_if<MeanFieldChoose>(&rule.v)) return (double)mf->d / spec.N;
    if (auto* mr = std::get_if<MeanFieldWithReplacement>(&rule.v))
        return 1.0 - std::pow(1.0 - 1.0 / spec.N, mr->d);
    auto& c = std::get<CircleNeighborhood>(rule.v);
    QueueSet w = circle_window(k, c.radius, spec.N);
    return std::binary_search(w.begin(), w.end(), n) ? 1.0 : 0.0;
}

// enumerate (set, probability) pairs of a rule; throws SubsetExplosion past `cap`
inline std::vector<std::pair<QueueSet, double>> enumerate_selection_sets(const SelectionRule& rule,
                                                                         int k, int N,
                                                                         std::size_t cap = 100000) {
    if (auto* ex = std::get_if<ExplicitRule>(&rule.v)) return ex->sets;
    if (auto* c = std::get_if<CircleNeighborhood>(&rule.v))
        return {{circle_window(k, c->radius, N), 1.0}};
    if (auto* mf = std::get_if<MeanFieldChoose>(&rule.v)) {
        double count = choose_real(N, mf->d);
        if (count > (double)cap) throw SubsetExplosion("too many mean-field selection sets");
        std::vector<std::pair<QueueSet, double>> out;
        QueueSet combo(mf->d);
        for (int i = 0; i < mf->d; ++i) combo[i] = i;
        const double p = 1.0 / count;
        while (true) {
            out.emplace_back(combo, p);
            int i = mf->d - 1;
            while (i >= 0 && combo[i] == N - mf->d + i) --i;
            if (i < 0) break;
            ++combo[i];
            for (int j = i + 1; j < mf->d; ++j) combo[j] = combo[j - 1] + 1;
        }
        return out;
    }
    auto& mr = std::get<MeanFieldWithReplacement>(rule.v);
    // distinct-set law of D draws with replacement: P(S) = surjections(D,|S|)/N^D
    int D = mr.d;
    if (choose_real(N, std::min(D, N)) > (double)cap)
        throw SubsetExplosion("too many with-replacement selection sets");
    std::vector<std::pair<QueueSet, double>> out;
    int maxsz = std::min(D, N);
    for (int sz = 1; sz <= maxsz; ++sz) {
        // surjection count onto a fixed sz-set via inclusion-exclusion
        double surj = 0;
        for (int t = 0; t <= sz; ++t)
            surj += (t % 2 == 0 ? 1.0 : -1.0) * choose_real(sz, t) * std::pow(sz - t, D);
        double p = surj / std::pow((double)N, D);
        if (p <= 0) continue;
        QueueSet combo(sz);
        for (int i = 0; i < sz; ++i) combo[i] = i;
        while (true) {
            out.emplace_back(combo, p);
            if (out.size() > cap) throw SubsetExplosion("too many with-replacement selection sets");
            int i = sz - 1;
            while (i >= 0 && combo[i] == N - sz + i) --i;
            if (i < 0) break;
            ++combo[i];
            for (int j = i + 1; j < sz; ++j) combo[j] = combo[j - 1] + 1;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Traffic intensity

struct TrafficIntensity {
    double rho = 0;
    int mode = 1;  // 1 class independent, 2 station independent
    std::uint64_t argmax_mask = 0;
    bool closed_form = false;
};

namespace detail {

// sum over A subset of B of p_{k,A} (optionally weighted by m_{k,A})
inline double subset_weight(const NetworkSpec& spec, int k, std::uint64_t bmask, int bsize,
                            bool weight_by_mean) {
    const auto& rule = spec.selection[k];
    if (auto* ex = std::get_if<ExplicitRule>(&rule.v)) {
        double total = 0;
        for (auto& [s, p] : ex->sets) {
            std::uint64_t m = set_to_mask(s);
            if ((m & bmask) == m) total += p * (weight_by_mean ? spec.m_ring(k, s) : 1.0);
        }
        return total;
    }
    double mean_k = 1.0;
    if (weight_by_mean) {
        auto& si = std::get<StationIndependent>(spec.service);
        mean_k = si.per_stream[k].mean();
    }
    if (auto* mf = std::get_if<MeanFieldChoose>(&rule.v))
        return mean_k * choose_real(bsize, mf->d) / choose_real(spec.N, mf->d);
    if (auto* mr = std::get_if<MeanFieldWithReplacement>(&rule.v))
        return mean_k * std::pow((double)bsize / spec.N, mr->d);
    auto& c = std::get<CircleNeighborhood>(rule.v);
    std::uint64_t w = set_to_mask(circle_window(k, c.radius, spec.N));
    return ((w & bmask) == w) ? mean_k : 0.0;
}

inline double ratio_for_mask(const NetworkSpec& spec, std::uint64_t bmask) {
    int bsize = 0;
    double den = 0;
    bool ci = spec.class_independent();
    for (int n = 0; n < spec.N; ++n)
        if (bmask & (std::uint64_t{1} << n)) {
            ++bsize;
            den += ci ? spec.mu_ring(n) : 1.0;
        }
    double num = 0;
    for (int k = 0; k < spec.K; ++k)
        num += spec.arrival_rate(k) * subset_weight(spec, k, bmask, bsize, !ci);
    return num / den;
}

inline bool all_rules_enumerable(const NetworkSpec& spec) {
    for (auto& r : spec.selection)
        if (!std::holds_alternative<ExplicitRule>(r.v) &&
            !std::holds_alternative<CircleNeighborhood>(r.v))
            return false;
    return true;
}

}  // namespace detail

// true when the symmetric closed form (sum alpha_k) * m / N applies: an
// exchangeable selection rule per stream and a single service law everywhere
inline bool recognized_symmetric(const NetworkSpec& spec) {
    std::optional<Distribution> common;
    auto absorb = [&](const Distribution& d) {
        if (!common) {
            common = d;
            return true;
        }
        return *common == d;
    };
    if (auto* ci = std::get_if<ClassIndependent>(&spec.service)) {
        for (auto& d : ci->per_queue)
            if (!absorb(d)) return false;
    } else {
        auto& si = std::get<StationIndependent>(spec.service);
        for (auto& d : si.per_stream)
            if (!absorb(d)) return false;
        for (auto& ov : si.overrides)
            if (!absorb(ov.dist)) return false;
    }
    bool all_meanfield = true;
    for (auto& r : spec.selection)
        if (!std::holds_alternative<MeanFieldChoose>(r.v) &&
            !std::holds_alternative<MeanFieldWithReplacement>(r.v))
            all_meanfield = false;
    if (all_meanfield) return true;
    // rotation-symmetric circle family: one stream per queue, identical rules
    bool all_circle = spec.K == spec.N;
    int radius = -1;
    for (auto& r : spec.selection) {
        auto* c = std::get_if<CircleNeighborhood>(&r.v);
        if (!c) {
            all_circle = false;
            break;
        }
        if (radius < 0) radius = c->radius;
        if (c->radius != radius) all_circle = false;
    }
    if (all_circle) {
        for (int k = 1; k < spec.K; ++k)
            if (!(spec.interarrival[k] == spec.interarrival[0])) return false;
        return true;
    }
    return false;
}

inline TrafficIntensity traffic_intensity_exhaustive(const NetworkSpec& spec) {
    if (spec.N > 24) throw SubsetExplosion("exhaustive subset enumeration limited to N <= 24");
    TrafficIntensity out;
    out.mode = spec.class_independent() ? 1 : 2;
    for (std::uint64_t b = 1; b < (std::uint64_t{1} << spec.N); ++b) {
        double r = detail::ratio_for_mask(spec, b);
        if (r > out.rho) {
            out.rho = r;
            out.argmax_mask = b;
        }
    }
    return out;
}

inline TrafficIntensity traffic_intensity(const NetworkSpec& spec) {
    TrafficIntensity out;
    out.mode = spec.class_independent() ? 1 : 2;
    if (recognized_symmetric(spec)) {
        double alpha_sum = 0;
        for (int k = 0; k < spec.K; ++k) alpha_sum += spec.arrival_rate(k);
        double m = spec.class_independent()
                       ? std::get<ClassIndependent>(spec.service).per_queue[0].mean()
                       : std::get<StationIndependent>(spec.service).per_stream[0].mean();
        out.rho = alpha_sum * m / spec.N;
        out.closed_form = true;
        out.argmax_mask = spec.N >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << spec.N) - 1;
        return out;
    }
    // candidate subsets: union closure of rule supports plus singletons (other
    // B cannot increase the numerator); exhaustive fallback for small N
    if (detail::all_rules_enumerable(spec) && spec.N <= 62) {
        std::set<std::uint64_t> closure;
        for (int k = 0; k < spec.K; ++k)
            for (auto& [s, p] : enumerate_selection_sets(spec.selection[k], k, spec.N))
                if (p > 0) closure.insert(set_to_mask(s));
        bool ok = true;
        std::vector<std::uint64_t> frontier(closure.begin(), closure.end());
        while (!frontier.empty() && ok) {
            std::vector<std::uint64_t> next;
            for (auto a : frontier)
                for (auto b : std::vector<std::uint64_t>(closure.begin(), closure.end())) {
                    std::uint64_t u = a | b;
                    if (closure.insert(u).second) next.push_back(u);
                    if (closure.size() > 8192) {
                        ok = false;
                        break;
                    }
                }
            frontier = std::move(next);
        }
        if (ok) {
            for (int n = 0; n < spec.N; ++n) closure.insert(std::uint64_t{1} << n);
            for (auto b : closure) {
                double r = detail::ratio_for_mask(spec, b);
                if (r > out.rho) {
                    out.rho = r;
                    out.argmax_mask = b;
                }
            }
            return out;
        }
    }
    if (spec.N <= 24) return traffic_intensity_exhaustive(spec);
    throw SubsetExplosion("N > 24 and no symmetric shortcut applies");
}

inline bool is_subcritical(const NetworkSpec& spec) {
    return traffic_intensity(spec).rho < 1.0 - 1e-12;
}

// ---------------------------------------------------------------------------
// Arrival-bound condition (at most Gamma potential arrivals over (0, m_max t])

struct ArrivalBound {
    bool supported = false;
    int gamma = 0;
    double h_of_t = 0;
    std::string note;

    // evaluation model, kept so the h sequence of the proof constants can be
    // computed at any t
    enum class Model { PoissonThin, GeneralThin, SurvivalProduct, None } model = Model::None;
    double thin_rate = 0;  // PoissonThin: max_n sum_k alpha_k pi_{n,k} * m_max
    struct ThinTerm {
        double alpha, pi, xi2;
        bool poisson;
    };
    std::vector<std::vector<ThinTerm>> thin_terms;  // [n][k], GeneralThin
    std::vector<Distribution> survival_dists;       // SurvivalProduct
    double m_max = 0;

    double log_h(double t) const {
        switch (model) {
            case Model::PoissonThin:
                return -thin_rate * t;
            case Model::GeneralThin: {
                double worst = 0;
                for (auto& row : thin_terms) {
                    double lh = 0;
                    for (auto& term : row) {
                        double tau = m_max * t;
                        if (term.poisson)
                            lh += -term.alpha * term.pi * tau;
                        else
                            lh += (1.0 + term.alpha * tau + term.alpha * term.alpha * term.xi2) *
                                  std::log1p(-term.pi);
                    }
                    worst = std::min(worst, lh);
                }
                return worst;
            }
            case Model::SurvivalProduct: {
                double lh = 0;
                for (auto& g : survival_dists) lh += g.log_survival(m_max * t);
                return lh;
            }
            default:
                return -kInf;
        }
    }
    double h(double t) const { return std::exp(log_h(t)); }
};

inline ArrivalBound check_arrival_bound(const NetworkSpec& spec, double t) {
    ArrivalBound out;
    out.m_max = spec.m_max();
    bool all_pi_below_one = true;
    bool all_poisson = true;
    bool thin_usable = true;
    for (int k = 0; k < spec.K; ++k) {
        bool poisson = std::holds_alternative<Exponential>(spec.interarrival[k].variant());
        if (!poisson) {
            all_poisson = false;
            if (!std::isfinite(spec.interarrival[k].second_moment())) thin_usable = false;
        }
    }
    double worst_rate = 0;
    for (int n = 0; n < spec.N && all_pi_below_one; ++n) {
        double rate_n = 0;
        for (int k = 0; k < spec.K; ++k) {
            double pi = inclusion_prob(spec, k, n);
            if (pi >= 1.0 - 1e-12 && pi > 0) all_pi_below_one = false;
            rate_n += spec.arrival_rate(k) * pi;
        }
        worst_rate = std::max(worst_rate, rate_n);
    }
    if (all_pi_below_one && all_poisson) {
        out.supported = true;
        out.gamma = 0;
        out.model = ArrivalBound::Model::PoissonThin;
        out.thin_rate = worst_rate * out.m_max;
        out.h_of_t = out.h(t);
        out.note = "Poisson thinning; every inclusion probability below 1";
        return out;
    }
    if (all_pi_below_one && thin_usable) {
        out.supported = true;
        out.gamma = 0;
        out.model = ArrivalBound::Model::GeneralThin;
        out.thin_terms.resize(spec.N);
        for (int n = 0; n < spec.N; ++n)
            for (int k = 0; k < spec.K; ++k)
                out.thin_terms[n].push_back(
                    {spec.arrival_rate(k), inclusion_prob(spec, k, n),
                     spec.interarrival[k].second_moment(),
                     std::holds_alternative<Exponential>(spec.interarrival[k].variant())});
        out.h_of_t = out.h(t);
        out.note = "renewal thinning with a second-moment arrival-count bound";
        return out;
    }
    bool all_unbounded = true;
    for (int k = 0; k < spec.K; ++k)
        if (!spec.interarrival[k].regularity_flags().unbounded_support) all_unbounded = false;
    if (all_unbounded) {
        out.supported = true;
        out.gamma = spec.K + 1;
        out.model = ArrivalBound::Model::SurvivalProduct;
        out.survival_dists = spec.interarrival;
        out.h_of_t = out.h(t);
        out.note = "unbounded interarrival supports; survival-function product";
        return out;
    }
    out.note = "no inclusion-probability slack and bounded interarrival support";
    return out;
}

// ---------------------------------------------------------------------------
// Family uniformity report

struct UniformityReport {
    double service_sup = 0;       // sup_a max_j mu_j int_{M/mu_j} y F_j(dy)
    double interarrival_sup = 0;  // the same with alpha_k, G_k
    double rho_sup = 0;
    double m_ring_ratio_sup = 0;
};

inline UniformityReport check_family_uniformity(const std::vector<NetworkSpec>& family, double M) {
    if (family.empty()) throw std::invalid_argument("empty network family");
    bool ci = family.front().class_independent();
    for (auto& spec : family)
        if (spec.class_independent() != ci)
            throw std::invalid_argument("family members must share the service mode");
    UniformityReport rep;
    for (auto& spec : family) {
        for (auto& [d, mu] : spec.distinct_service_laws())
            rep.service_sup = std::max(rep.service_sup, mu * d.tail_first_moment(M / mu));
        for (int k = 0; k < spec.K; ++k) {
            double a = spec.arrival_rate(k);
            rep.interarrival_sup =
                std::max(rep.interarrival_sup, a * spec.interarrival[k].tail_first_moment(M / a));
        }
        rep.rho_sup = std::max(rep.rho_sup, traffic_intensity(spec).rho);
        rep.m_ring_ratio_sup = std::max(rep.m_ring_ratio_sup, spec.m_ring_ratio());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Symmetry check

struct PermutationGroup {
    // each generator permutes {0..N+K-1}; queues map to queues, streams to streams
    std::vector<std::vector<int>> generators;
};

inline bool check_symmetry(const NetworkSpec& spec, const PermutationGroup& group) {
    const int N = spec.N, K = spec.K;
    for (auto& g : group.generators) {
        if ((int)g.size() != N + K) throw InvalidPermutation("generator has wrong size");
        std::vector<bool> seen(N + K, false);
        for (int i = 0; i < N + K; ++i) {
            int j = g[i];
            if (j < 0 || j >= N + K || seen[j]) throw InvalidPermutation("not a permutation");
            seen[j] = true;
            if ((i < N) != (j < N))
                throw InvalidPermutation("queues must map to queues and streams to streams");
        }
    }
    // queues must communicate under the group
    {
        std::vector<int> comp(N, -1);
        std::vector<int> stack{0};
        comp[0] = 0;
        while (!stack.empty()) {
            int n = stack.back();
            stack.pop_back();
            for (auto& g : group.generators) {
                int m = g[n];
                if (comp[m] < 0) {
                    comp[m] = 0;
                    stack.push_back(m);
                }
                for (int i = 0; i < N; ++i)
                    if (g[i] == n && comp[i] < 0) {
                        comp[i] = 0;
                        stack.push_back(i);
                    }
            }
        }
        for (int n = 0; n < N; ++n)
            if (comp[n] < 0) throw InvalidPermutation("queues do not communicate under the group");
    }

    auto permute_set = [&](const QueueSet& s, const std::vector<int>& g) {
        QueueSet out;
        out.reserve(s.size());
        for (int n : s) out.push_back(g[n]);
        std::sort(out.begin(), out.end());
        return out;
    };

    // candidate subsets for the aggregate-rate condition
    std::set<std::uint64_t> candidates;
    bool enumerable = detail::all_rules_enumerable(spec);
    if (enumerable && N <= 62) {
        for (int k = 0; k < K; ++k)
            for (auto& [s, p] : enumerate_selection_sets(spec.selection[k], k, N))
                if (p > 0) candidates.insert(set_to_mask(s));
    } else if (N <= 20) {
        for (std::uint64_t b = 1; b < (std::uint64_t{1} << N); ++b) candidates.insert(b);
    }
    for (int n = 0; n < N && N <= 62; ++n) candidates.insert(std::uint64_t{1} << n);
    if (N <= 62) candidates.insert((std::uint64_t{1} << N) - 1);

    auto aggregate = [&](std::uint64_t bmask) {
        int bsize = 0;
        for (int n = 0; n < N; ++n)
            if (bmask & (std::uint64_t{1} << n)) ++bsize;
        double total = 0;
        for (int k = 0; k < K; ++k)
            total += spec.arrival_rate(k) * detail::subset_weight(spec, k, bmask, bsize, false);
        return total;
    };

    for (auto& g : group.generators) {
        for (auto b : candidates) {
            QueueSet bs = mask_to_set(b);
            std::uint64_t bp = set_to_mask(permute_set(bs, g));
            if (std::abs(aggregate(b) - aggregate(bp)) > 1e-12) return false;
        }
        // structural invariance
        for (int k = 0; k < K; ++k) {
            int kp = g[N + k] - N;
            if (!(spec.interarrival[kp] == spec.interarrival[k])) return false;
            const auto& rk = spec.selection[k].v;
            const auto& rkp = spec.selection[kp].v;
            if (rk.index() != rkp.index()) return false;
            if (auto* ex = std::get_if<ExplicitRule>(&rk)) {
                auto& exp_ = std::get<ExplicitRule>(rkp);
                for (auto& [s, p] : ex->sets) {
                    QueueSet sp = permute_set(s, g);
                    double found = 0;
                    for (auto& [s2, p2] : exp_.sets)
                        if (s2 == sp) found += p2;
                    if (std::abs(found - p) > 1e-12) return false;
                }
            } else if (auto* mf = std::get_if<MeanFieldChoose>(&rk)) {
                if (mf->d != std::get<MeanFieldChoose>(rkp).d) return false;
            } else if (auto* mr = std::get_if<MeanFieldWithReplacement>(&rk)) {
                if (mr->d != std::get<MeanFieldWithReplacement>(rkp).d) return false;
            } else if (auto* c = std::get_if<CircleNeighborhood>(&rk)) {
                auto& cp = std::get<CircleNeighborhood>(rkp);
                if (c->radius != cp.radius) return false;
                if (permute_set(circle_window(k, c->radius, N), g) !=
                    circle_window(kp, cp.radius, N))
                    return false;
            }
        }
        if (auto* ci = std::get_if<ClassIndependent>(&spec.service)) {
            for (int n = 0; n < N; ++n)
                if (!(ci->per_queue[g[n]] == ci->per_queue[n])) return false;
        } else {
            auto& si = std::get<StationIndependent>(spec.service);
            for (int k = 0; k < K; ++k) {
                int kp = g[N + k] - N;
                if (!(si.per_stream[kp] == si.per_stream[k])) return false;
            }
            for (auto& ov : si.overrides) {
                int kp = g[N + ov.stream] - N;
                QueueSet sp = permute_set(ov.set, g);
                if (!(spec.service_dist(kp, sp, sp.front()) ==
                      spec.service_dist(ov.stream, ov.set, ov.set.front())))
                    return false;
            }
        }
    }
    return true;
}

// ---------------------------------------------------------------------------
// Routing distributions (the potential-minimisation algorithm)

struct RoutingFlow {
    int k;
    QueueSet set;
    std::vector<double> beta;  // beta_{k,A,n} for n in set
    std::vector<double> q;     // concentrated on set, sums to 1
};

struct RoutingTable {
    bool uniform_symmetric = false;
    std::vector<RoutingFlow> flows;
    std::vector<double> load;      // per queue
    std::vector<double> residual;  // rho - load
    double rho = 0;
    int mode = 1;
    double v_terminal = 0;
    long iterations = 0;
};

inline double potential(const RoutingTable& table) {
    double v = 0;
    for (double l : table.load) v += (l - table.rho) * (l - table.rho);
    return v;
}

inline double potential(const NetworkSpec& spec, const std::vector<RoutingFlow>& flows,
                        double rho) {
    std::vector<double> load(spec.N, 0.0);
    for (auto& f : flows)
        for (std::size_t i = 0; i < f.set.size(); ++i) load[f.set[i]] += f.beta[i] * f.q[i];
    double v = 0;
    for (double l : load) v += (l - rho) * (l - rho);
    return v;
}

namespace detail {

inline std::vector<RoutingFlow> materialize_flows(const NetworkSpec& spec, std::size_t cap) {
    std::vector<RoutingFlow> flows;
    bool ci = spec.class_independent();
    for (int k = 0; k < spec.K; ++k) {
        double alpha = spec.arrival_rate(k);
        for (auto& [s, p] : enumerate_selection_sets(spec.selection[k], k, spec.N, cap)) {
            if (p <= 0) continue;
            RoutingFlow f;
            f.k = k;
            f.set = s;
            f.beta.resize(s.size());
            f.q.assign(s.size(), 1.0 / s.size());
            for (std::size_t i = 0; i < s.size(); ++i) {
                double m = ci ? std::get<ClassIndependent>(spec.service).per_queue[s[i]].mean()
                              : spec.m_ring(k, s);
                f.beta[i] = alpha * p * m;
            }
            flows.push_back(std::move(f));
            if (flows.size() > cap) throw SubsetExplosion("routing flow materialization too large");
        }
    }
    return flows;
}

}  // namespace detail

inline RoutingTable solve_routing(const NetworkSpec& spec, double tol = 1e-9,
                                  long max_iters = 1000000) {
    auto ti = traffic_intensity(spec);
    if (ti.rho >= 1.0 - 1e-12)
        throw std::invalid_argument("solve_routing requires a subcritical network");
    RoutingTable table;
    table.rho = ti.rho;
    table.mode = ti.mode;

    bool symmetric = recognized_symmetric(spec);
    std::size_t cap = 100000;
    bool materializable = true;
    double total_sets = 0;
    for (int k = 0; k < spec.K && materializable; ++k) {
        if (auto* mf = std::get_if<MeanFieldChoose>(&spec.selection[k].v))
            total_sets += choose_real(spec.N, mf->d);
        else if (auto* mr = std::get_if<MeanFieldWithReplacement>(&spec.selection[k].v))
            total_sets += choose_real(spec.N, std::min(mr->d, spec.N)) * mr->d;
        else if (auto* ex = std::get_if<ExplicitRule>(&spec.selection[k].v))
            total_sets += ex->sets.size();
        else
            total_sets += 1;
        if (total_sets > (double)cap) materializable = false;
    }

    if (symmetric && !materializable) {
        // uniform q_{k,A,n} = 1/|A| is feasible; every queue carries exactly rho
        table.uniform_symmetric = true;
        table.load.assign(spec.N, ti.rho);
        table.residual.assign(spec.N, 0.0);
        table.v_terminal = 0.0;
        return table;
    }

    table.flows = detail::materialize_flows(spec, cap);
    table.uniform_symmetric = symmetric;
    table.load.assign(spec.N, 0.0);
    for (auto& f : table.flows)
        for (std::size_t i = 0; i < f.set.size(); ++i) table.load[f.set[i]] += f.beta[i] * f.q[i];

    auto apply = [&](RoutingFlow& f, std::size_t i1, std::size_t i2, double eps) {
        f.q[i1] -= eps;
        f.q[i2] += eps;
        table.load[f.set[i1]] -= f.beta[i1] * eps;
        table.load[f.set[i2]] += f.beta[i2] * eps;
    };

    long iter = 0;
    const double rho = ti.rho;
    // Phase 1: pairwise mass transfer until every queue sits at or below
    // rho + tol.  The greedy step drains the most-overloaded queue into the
    // most-underloaded member of one of its selection sets; when no direct
    // target exists, mass must flow through intermediate queues, so we fall
    // back to the best V-descending pairwise transfer anywhere (V is a convex
    // quadratic over a product of simplices, so a stationary point with an
    // overloaded queue cannot exist while (3.2.4)-feasibility holds).
    while (iter < max_iters) {
        int n1 = -1;
        double excess = tol;
        for (int n = 0; n < spec.N; ++n)
            if (table.load[n] - rho > excess) {
                excess = table.load[n] - rho;
                n1 = n;
            }
        if (n1 < 0) break;
        ++iter;
        bool moved = false;
        for (auto& f : table.flows) {
            auto it = std::find(f.set.begin(), f.set.end(), n1);
            if (it == f.set.end()) continue;
            std::size_t i1 = it - f.set.begin();
            if (f.q[i1] <= 0) continue;
            // most underloaded target in the same selection set
            std::size_t i2 = i1;
            double best = 0;
            for (std::size_t j = 0; j < f.set.size(); ++j) {
                double deficit = rho - table.load[f.set[j]];
                if (deficit > best + 1e-15) {
                    best = deficit;
                    i2 = j;
                }
            }
            if (i2 == i1 || best <= 0) continue;
            double eps = std::min({excess / f.beta[i1], best / f.beta[i2], f.q[i1]});
            if (eps <= 0) continue;
            apply(f, i1, i2, eps);
            moved = true;
            break;
        }
        if (!moved) {
            double best_gain = 0;
            RoutingFlow* bf = nullptr;
            std::size_t b1 = 0, b2 = 0;
            for (auto& f : table.flows) {
                for (std::size_t i = 0; i < f.set.size(); ++i) {
                    if (f.q[i] <= 0) continue;
                    double di = table.load[f.set[i]] - rho;
                    for (std::size_t j = 0; j < f.set.size(); ++j) {
                        if (j == i) continue;
                        double dj = table.load[f.set[j]] - rho;
                        double slope = f.beta[i] * di - f.beta[j] * dj;
                        if (slope > best_gain + 1e-18) {
                            best_gain = slope;
                            bf = &f;
                            b1 = i;
                            b2 = j;
                        }
                    }
                }
            }
            if (!bf) throw NotConverged(excess);
            double di = table.load[bf->set[b1]] - rho, dj = table.load[bf->set[b2]] - rho;
            double star = (bf->beta[b1] * di - bf->beta[b2] * dj) /
                          (bf->beta[b1] * bf->beta[b1] + bf->beta[b2] * bf->beta[b2]);
            apply(*bf, b1, b2, std::min(star, bf->q[b1]));
        }
    }
    {
        double worst = 0;
        for (int n = 0; n < spec.N; ++n) worst = std::max(worst, table.load[n] - rho);
        if (worst > tol) throw NotConverged(worst);
    }
    // phase 2: keep descending V by equalising deviations inside each set;
    // feasibility is preserved because mass only moves toward larger deficits
    for (int sweep = 0; sweep < 200 && iter < max_iters; ++sweep) {
        double improved = 0;
        for (auto& f : table.flows) {
            for (std::size_t i = 0; i < f.set.size(); ++i) {
                if (f.q[i] <= 0) continue;
                for (std::size_t j = 0; j < f.set.size(); ++j) {
                    if (i == j) continue;
                    double di = table.load[f.set[i]] - rho;
                    double dj = table.load[f.set[j]] - rho;
                    if (dj >= 0) continue;  // never push a queue past rho
                    double slope = f.beta[i] * di - f.beta[j] * dj;
                    if (slope <= 1e-15) continue;
                    double star =
                        slope / (f.beta[i] * f.beta[i] + f.beta[j] * f.beta[j]);
                    double eps = std::min({star, f.q[i], -dj / f.beta[j]});
                    if (eps <= 0) continue;
                    apply(f, i, j, eps);
                    improved += slope * eps;
                    ++iter;
                }
            }
        }
        if (improved < 1e-15) break;
    }
    table.iterations = iter;
    table.residual.resize(spec.N);
    for (int n = 0; n < spec.N; ++n) table.residual[n] = rho - table.load[n];
    table.v_terminal = potential(table);
    return table;
}

}  // namespace jsqlab
