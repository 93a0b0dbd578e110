#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "jsqlab/errors.hpp"
#include "jsqlab/network.hpp"
#include "jsqlab/psi.hpp"
#include "jsqlab/state.hpp"

namespace jsqlab {

// Parameters of the composite norm ||.|| = ||.||_L + ||.||_R + ||.||_A.
// L3 is astronomically large by construction and never materializes: psi_Z is
// evaluated in min-form and only log(L3 + 1) is stored.
struct LyapunovParams {
    std::shared_ptr<const NetworkSpec> spec;
    RoutingTable routing;

    double rho = 0;
    int mode = 1;
    double eps1 = 0, eps2 = 0, eps3 = 0;
    double L1 = 4, L2 = 0;
    double log_L3_plus_1 = 0;
    double M1 = 1;

    std::shared_ptr<PsiLadder> psi_W, psi_A;

    std::vector<double> mu_ring;  // per queue
    double mu_ring_sum = 0, mu_ring_min = 0;
    double m_ring_max = 0, m_ring_min = 0, m_ring_ratio = 1;

    // g[k][n] = sum_A p_{k,A} q_{k,A,n} m-ring_{k,A}
    std::vector<std::vector<double>> g;
    // I[k] = integral of psi_A(alpha_k y) G_k(dy)
    std::vector<double> psi_A_mean;

    double psi_Z_of(double y) const {
        return std::min(eps1 + (eps3 / L2) * std::log1p(y), L1);
    }
    double m_ring(int k, const QueueSet& set) const { return spec->m_ring(k, set); }
};

enum class PsiKind { W, Z, A };

inline double eval_psi(const LyapunovParams& p, PsiKind which, double y) {
    switch (which) {
        case PsiKind::W:
            return p.psi_W->eval(y);
        case PsiKind::Z:
            return p.psi_Z_of(y);
        default:
            return p.psi_A->eval(y);
    }
}

inline LyapunovParams build_params(const NetworkSpec& spec, double L1 = 0,
                                   const RoutingTable* routing = nullptr) {
    spec.validate();
    LyapunovParams p;
    p.spec = std::make_shared<NetworkSpec>(spec);
    auto ti = traffic_intensity(spec);
    if (ti.rho >= 1.0 - 1e-12)
        throw std::invalid_argument("build_params requires a subcritical network");
    p.routing = routing ? *routing : solve_routing(spec);
    p.rho = ti.rho;
    p.mode = ti.mode;
    p.eps1 = 1.0 - ti.rho;
    p.eps2 = p.eps1 * p.eps1 / 40.0;

    p.mu_ring.resize(spec.N);
    p.mu_ring_sum = 0;
    p.mu_ring_min = kInf;
    for (int n = 0; n < spec.N; ++n) {
        p.mu_ring[n] = spec.mu_ring(n);
        p.mu_ring_sum += p.mu_ring[n];
        p.mu_ring_min = std::min(p.mu_ring_min, p.mu_ring[n]);
    }
    p.m_ring_ratio = spec.m_ring_ratio();
    if (spec.class_independent()) {
        p.m_ring_max = p.m_ring_min = 1.0;
    } else {
        p.m_ring_max = 0;
        p.m_ring_min = kInf;
        for (auto& [d, mu] : spec.distinct_service_laws()) {
            p.m_ring_max = std::max(p.m_ring_max, d.mean());
            p.m_ring_min = std::min(p.m_ring_min, d.mean());
        }
    }

    const double ln2 = 0.6931471805599453;
    auto service_laws = spec.distinct_service_laws();
    // psi_W: initial slope c with c <= eps2/2, dyadic ladder with knot budgets
    // eps2 * 4^-(j+1) so that sum_j 2^j T(K_j) <= eps2/2
    double cW = p.eps2 / (2.0 * std::max(1.0, spec.m_max()));
    p.psi_W = std::make_shared<PsiLadder>(0.0, false, cW, std::log(p.eps2) - 2.0 * ln2,
                                          2.0 * ln2, service_laws);

    // psi_A: affine head M1 - y, then a ladder with budgets eps2 * 2^-(2j+3)
    std::vector<std::pair<Distribution, double>> arrival_laws;
    for (int k = 0; k < spec.K; ++k)
        arrival_laws.emplace_back(spec.interarrival[k], spec.arrival_rate(k));
    {
        PsiLadder probe(0.0, false, 1.0, 0.0, 1.0, arrival_laws);
        p.M1 = std::max(1.0, probe.tail_point(std::log(p.eps2) - 2.0 * ln2));
    }
    p.psi_A = std::make_shared<PsiLadder>(p.M1, true, 0.25, std::log(p.eps2) - 3.0 * ln2,
                                          2.0 * ln2, arrival_laws);

    p.eps3 = p.eps2 / (p.M1 * p.m_ring_ratio);
    if (L1 <= 0) {
        double mu_ratio =
            spec.class_independent()
                ? *std::max_element(p.mu_ring.begin(), p.mu_ring.end()) / p.mu_ring_min
                : 1.0;
        L1 = std::max(4.0, 4.0 * spec.N * mu_ratio);
    }
    if (L1 < 4) throw std::invalid_argument("L1 must be >= 4");
    p.L1 = L1;
    p.L2 = p.psi_W->first_arg_slope_ge(2.0 * L1);
    if (!(p.L2 >= p.eps2)) throw ConstructionFailed("L2 fell below eps2");
    p.log_L3_plus_1 = (p.L1 - p.eps1) * p.L2 / p.eps3;

    // re-verify the integral bounds of the construction by quadrature
    const double slack = 1e-9;
    for (auto& [d, mu] : service_laws) {
        double v = d.expect([&](double y) { return p.psi_W->eval(mu * y); });
        if (!(v <= p.eps2 * (1 + slack) + 1e-15))
            throw ConstructionFailed("workload weight bound failed for a service law");
    }
    p.psi_A_mean.resize(spec.K);
    for (int k = 0; k < spec.K; ++k) {
        const auto& gk = spec.interarrival[k];
        double alpha = spec.arrival_rate(k);
        double tail = gk.expect_tail(p.M1 / alpha, [&](double y) {
            return p.psi_A->eval(alpha * y) + alpha * y;
        });
        if (!(tail <= p.eps2 * (1 + slack) + 1e-15))
            throw ConstructionFailed("interarrival weight bound failed for a stream");
        p.psi_A_mean[k] = gk.expect([&](double y) { return p.psi_A->eval(alpha * y); });
        if (!(p.M1 - p.psi_A_mean[k] >= 1.0 - p.eps2 * (1 + slack) - 1e-12))
            throw ConstructionFailed("mean interarrival weight slack failed for a stream");
    }

    // routing marginals g[k][n]
    p.g.assign(spec.K, std::vector<double>(spec.N, 0.0));
    if (!p.routing.flows.empty()) {
        bool ci = spec.class_independent();
        for (auto& f : p.routing.flows) {
            double alpha = spec.arrival_rate(f.k);
            for (std::size_t i = 0; i < f.set.size(); ++i) {
                int n = f.set[i];
                // class independent: beta = alpha p m_n and m-ring = 1;
                // station independent: beta = alpha p m_{k,A} = alpha p m-ring
                double p_mring =
                    ci ? f.beta[i] /
                             (alpha * std::get<ClassIndependent>(spec.service).per_queue[n].mean())
                       : f.beta[i] / alpha;
                p.g[f.k][n] += p_mring * f.q[i];
            }
        }
    } else {
        // implicit uniform q on a symmetric rule: the (p q)-marginal is 1/N
        // for exchangeable rules and 1/|W| on a circle window
        for (int k = 0; k < spec.K; ++k) {
            double m_ring_k = spec.class_independent()
                                  ? 1.0
                                  : std::get<StationIndependent>(spec.service).per_stream[k].mean();
            if (auto* c = std::get_if<CircleNeighborhood>(&spec.selection[k].v)) {
                QueueSet w = circle_window(k, c->radius, spec.N);
                for (int n : w) p.g[k][n] = m_ring_k / w.size();
            } else {
                for (int n = 0; n < spec.N; ++n) p.g[k][n] = m_ring_k / spec.N;
            }
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Norm evaluation

struct NormBreakdown {
    double L = 0, R = 0, A = 0, total = 0;
    std::vector<double> per_queue_L, per_queue_R, per_stream_A;
};

inline NormBreakdown norm(const StateSnapshot& x, const LyapunovParams& p) {
    NormBreakdown out;
    const int N = x.N, K = x.K;
    out.per_queue_L.assign(N, 0.0);
    out.per_queue_R.assign(N, 0.0);
    out.per_stream_A.assign(K, 0.0);
    std::vector<double> lsum(N, 0.0);
    std::vector<int> z(N, 0);
    for (auto& j : x.jobs) {
        double mr = p.m_ring(j.stream, j.selection);
        double wplus = j.weighted_residual + p.eps2;
        lsum[j.queue] += mr * std::min(wplus, p.L2);
        out.per_queue_R[j.queue] += mr * p.psi_W->eval(j.weighted_residual);
        ++z[j.queue];
    }
    std::vector<double> psi_z(N);
    for (int n = 0; n < N; ++n) {
        psi_z[n] = p.psi_Z_of(z[n]);
        out.per_queue_L[n] = lsum[n] * psi_z[n];
        out.L += out.per_queue_L[n];
        out.R += out.per_queue_R[n];
    }
    for (int k = 0; k < K; ++k) {
        double dot = 0;
        for (int n = 0; n < N; ++n) dot += p.g[k][n] * psi_z[n];
        out.per_stream_A[k] = (1.0 + p.eps1 / 2.0) * dot * p.psi_A->eval(x.s[k]);
        out.A += out.per_stream_A[k];
    }
    out.total = out.L + out.R + out.A;
    return out;
}

// ---------------------------------------------------------------------------
// Flow derivative between events (right time derivatives)

struct FlowDerivative {
    double dL = 0, dR = 0, dA = 0;
    double drain_bound = 0;  // on dL + dR/2
    double arrival_growth_bound = 0;  // on dA
    double total_bound = 0;  // on the total
    bool drain_ok = false, arrival_growth_ok = false, total_ok = false;
};

inline FlowDerivative flow_derivative(const StateSnapshot& x, const LyapunovParams& p,
                                      double slack = 1e-9) {
    FlowDerivative out;
    const NetworkSpec& spec = *p.spec;
    std::vector<int> z(x.N, 0);
    for (auto& j : x.jobs) ++z[j.queue];
    std::vector<double> psi_z(x.N);
    for (int n = 0; n < x.N; ++n) psi_z[n] = p.psi_Z_of(z[n]);

    // ages grow at rate mu_j, residuals shrink at mu_j r, s_k shrinks at
    // alpha_k; the decreasing arguments take left slopes
    for (auto& j : x.jobs) {
        if (j.effort <= 0) continue;
        double mu_n = p.mu_ring[j.queue];
        out.dR -= mu_n * j.effort * p.psi_W->deriv_left(j.weighted_residual);
        if (j.weighted_residual + p.eps2 <= p.L2)
            out.dL -= psi_z[j.queue] * mu_n * j.effort;
    }
    for (int k = 0; k < x.K; ++k) {
        double dot = 0;
        for (int n = 0; n < x.N; ++n) dot += p.g[k][n] * psi_z[n];
        out.dA -= (1.0 + p.eps1 / 2.0) * dot * spec.arrival_rate(k) * p.psi_A->deriv_left(x.s[k]);
    }

    for (int n = 0; n < x.N; ++n) {
        out.drain_bound += p.mu_ring[n] * (p.eps1 - psi_z[n]);
        out.arrival_growth_bound += p.mu_ring[n] * psi_z[n];
        out.total_bound += p.mu_ring[n] * (2.0 - psi_z[n]);
    }
    out.arrival_growth_bound *= (1.0 + p.eps1 / 2.0) * p.rho;
    out.total_bound *= p.eps1 / 2.0;
    out.drain_ok = out.dL + out.dR / 2.0 <= out.drain_bound + slack;
    out.arrival_growth_ok = out.dA <= out.arrival_growth_bound + slack;
    out.total_ok = out.dL + out.dR + out.dA <= out.total_bound + slack;
    return out;
}

// ---------------------------------------------------------------------------
// Expected norm jump at an arrival from stream k
//
// The state is read as the pre-arrival state at the arrival epoch, so the
// weighted residual interarrival of stream k is 0 there and the post-arrival
// value is integrated against a fresh draw from G_k.

struct JumpExpectation {
    double value = 0;
    double std_error = 0;
    bool exact = true;
};

namespace detail {

struct JumpContext {
    std::vector<int> z;
    std::vector<double> lsum;       // per queue: sum m-ring (w+ ^ L2)
    std::vector<double> psi_z;      // psi_Z(z_n)
    std::vector<double> psi_z_up;   // psi_Z(z_n + 1)
    std::vector<double> psi_a_val;  // psi_A(s_k'), k' != k unchanged
    std::vector<double> dot;        // per stream: sum_n g[k][n] psi_z[n]
};

inline JumpContext make_jump_context(const StateSnapshot& x, const LyapunovParams& p) {
    JumpContext c;
    c.z.assign(x.N, 0);
    c.lsum.assign(x.N, 0.0);
    for (auto& j : x.jobs) {
        ++c.z[j.queue];
        c.lsum[j.queue] += p.m_ring(j.stream, j.selection) *
                           std::min(j.weighted_residual + p.eps2, p.L2);
    }
    c.psi_z.resize(x.N);
    c.psi_z_up.resize(x.N);
    for (int n = 0; n < x.N; ++n) {
        c.psi_z[n] = p.psi_Z_of(c.z[n]);
        c.psi_z_up[n] = p.psi_Z_of(c.z[n] + 1);
    }
    c.psi_a_val.resize(x.K);
    for (int k = 0; k < x.K; ++k) c.psi_a_val[k] = p.psi_A->eval(x.s[k]);
    c.dot.resize(x.K);
    for (int k = 0; k < x.K; ++k) {
        double d = 0;
        for (int n = 0; n < x.N; ++n) d += p.g[k][n] * c.psi_z[n];
        c.dot[k] = d;
    }
    return c;
}

// norm change when a stream-k job with service time v lands on queue n out of
// selection set A; `psi_a_new` is psi_A at the fresh weighted interarrival
inline double jump_delta(const LyapunovParams& p, const JumpContext& c, int k, const QueueSet& A,
                         int n, double v, double psi_a_new) {
    const NetworkSpec& spec = *p.spec;
    double mr = spec.m_ring(k, A);
    double mu_j = 1.0 / spec.service_dist(k, A, n).mean();
    double w_new = mu_j * v;
    double dpsi = c.psi_z_up[n] - c.psi_z[n];
    double dL = c.lsum[n] * dpsi + mr * std::min(w_new + p.eps2, p.L2) * c.psi_z_up[n];
    double dR = mr * p.psi_W->eval(w_new);
    double dA = psi_a_new * (c.dot[k] + p.g[k][n] * dpsi) - p.M1 * c.dot[k];
    for (int k2 = 0; k2 < (int)c.dot.size(); ++k2)
        if (k2 != k) dA += c.psi_a_val[k2] * p.g[k2][n] * dpsi;
    return dL + dR + (1.0 + p.eps1 / 2.0) * dA;
}

// assignment law over the selection set: the JSQ tie-break distribution on
// the minimizers of z, or uniform for random assignment
inline std::vector<std::pair<int, double>> jsq_target_law(const NetworkSpec& spec,
                                                          const std::vector<int>& z,
                                                          const QueueSet& A) {
    std::vector<std::pair<int, double>> law;
    if (spec.assignment == AssignmentKind::RandomD1) {
        for (int n : A) law.emplace_back(n, 1.0 / A.size());
        return law;
    }
    int zmin = z[A.front()];
    for (int n : A) zmin = std::min(zmin, z[n]);
    std::vector<int> mins;
    for (int n : A)
        if (z[n] == zmin) mins.push_back(n);
    if (spec.tie_break == TieBreak::MinIndex || mins.size() == 1) {
        law.emplace_back(mins.front(), 1.0);
    } else {
        for (int n : mins) law.emplace_back(n, 1.0 / mins.size());
    }
    return law;
}

}  // namespace detail

inline JumpExpectation arrival_jump_expectation(const StateSnapshot& x, const LyapunovParams& p,
                                                int k, long mc_budget = 0,
                                                RngStream* rng = nullptr) {
    const NetworkSpec& spec = *p.spec;
    if (spec.assignment != AssignmentKind::Jsq && spec.assignment != AssignmentKind::RandomD1)
        throw std::invalid_argument("arrival jump expectation supports JSQ and random assignment");
    auto c = detail::make_jump_context(x, p);
    double alpha = spec.arrival_rate(k);

    if (mc_budget <= 0) {
        // exact mode: enumerate selection sets, tie-breaks and service atoms
        std::vector<std::pair<QueueSet, double>> sets;
        try {
            sets = enumerate_selection_sets(spec.selection[k], k, spec.N, 4096);
        } catch (const SubsetExplosion&) {
            throw ExactModeUnavailable("selection sets of the stream cannot be enumerated");
        }
        double i_k = p.psi_A_mean[k];
        double total = 0;
        for (auto& [A, pa] : sets) {
            if (pa <= 0) continue;
            for (auto& [n, qn] : detail::jsq_target_law(spec, c.z, A)) {
                const Distribution& f = spec.service_dist(k, A, n);
                if (!f.is_atomic())
                    throw ExactModeUnavailable(
                        "exact mode requires discrete service laws; pass a Monte Carlo budget");
                for (auto& [v, pv] : f.atoms())
                    total += pa * qn * pv * detail::jump_delta(p, c, k, A, n, v, i_k);
            }
        }
        return {total, 0.0, true};
    }

    if (!rng) throw std::invalid_argument("Monte Carlo mode needs an RngStream");
    double sum = 0, sumsq = 0;
    for (long it = 0; it < mc_budget; ++it) {
        QueueSet A = sample_selection(spec, k, *rng);
        auto law = detail::jsq_target_law(spec, c.z, A);
        int n = law.front().first;
        if (law.size() > 1) n = law[rng->below(law.size())].first;
        double v = spec.service_dist(k, A, n).sample(*rng);
        double fresh = alpha * spec.interarrival[k].sample(*rng);
        double d = detail::jump_delta(p, c, k, A, n, v, p.psi_A->eval(fresh));
        sum += d;
        sumsq += d * d;
    }
    double mean = sum / mc_budget;
    double var = std::max(0.0, sumsq / mc_budget - mean * mean);
    return {mean, std::sqrt(var / mc_budget), false};
}

// ---------------------------------------------------------------------------
// JLLQ norm: sum_n psi(g_n) with psi(y) = (1+y) log(1+y) - y

inline double jllq_phi(double y) { return (1.0 + y) * std::log1p(y) - y; }
inline double jllq_phi_prime(double y) { return std::log1p(y); }

inline double jllq_queue_potential(const StateSnapshot& x, const LyapunovParams& p, int n) {
    double g = 0;
    for (auto& j : x.jobs)
        if (j.queue == n)
            g += p.m_ring(j.stream, j.selection) * (j.weighted_residual + p.eps2);
    double arr = 0;
    for (int k = 0; k < x.K; ++k) arr += p.g[k][n] * p.psi_A->eval(x.s[k]);
    return g + (1.0 + p.eps1 / 2.0) * arr;
}

inline double jllq_norm(const StateSnapshot& x, const LyapunovParams& p) {
    if (p.spec->assignment != AssignmentKind::Jllq)
        throw std::invalid_argument("jllq_norm requires a least-loaded assignment rule");
    double total = 0;
    for (int n = 0; n < x.N; ++n) total += jllq_phi(jllq_queue_potential(x, p, n));
    return total;
}

// time derivative of the JLLQ norm under the deterministic flow
inline double jllq_norm_derivative(const StateSnapshot& x, const LyapunovParams& p) {
    std::vector<double> gdot(x.N, 0.0);
    for (auto& j : x.jobs)
        gdot[j.queue] -= p.mu_ring[j.queue] * j.effort;
    for (int k = 0; k < x.K; ++k) {
        double rate = p.spec->arrival_rate(k) * p.psi_A->deriv_left(x.s[k]);
        for (int n = 0; n < x.N; ++n)
            gdot[n] -= (1.0 + p.eps1 / 2.0) * p.g[k][n] * rate;
    }
    double total = 0;
    for (int n = 0; n < x.N; ++n)
        total += jllq_phi_prime(jllq_queue_potential(x, p, n)) * gdot[n];
    return total;
}

// ---------------------------------------------------------------------------
// Proof constants

struct ProofConstants {
    int gamma = 0;
    ArrivalBound bound;  // carries the h function

    std::vector<double> t_seq;      // t(i), +inf once saturated
    std::vector<double> log_p_seq;  // log p(i)
    std::vector<double> log_w_seq;  // log w(i), i >= 1

    double log_M_L = 0;
    double M_A = 0;
    double y1 = 0;
    double log_M_R = 0;
    double log_L4 = 0;

    double C1 = 0, C2 = 0, C3 = 0, C4 = 0, C5 = 0, C6 = 0;
    double log_C4_tail = 0;  // the tail-estimate variant C4 = L3, log-domain
};

inline ProofConstants proof_constants(const LyapunovParams& p, const NetworkSpec& spec,
                                      int depth) {
    ProofConstants out;
    out.bound = check_arrival_bound(spec, 1.0);
    if (!out.bound.supported)
        throw std::invalid_argument("proof constants need the arrival-bound condition");
    out.gamma = out.bound.gamma;

    out.C2 = p.mu_ring_sum;
    out.C3 = 1.0 / (p.eps1 * p.mu_ring_sum);
    out.C1 = std::max(out.C3, out.C2 * out.C3 + 1.0);
    out.C4 = p.mu_ring_sum / p.mu_ring_min;
    out.C5 = 1.0 / (p.eps1 * p.eps2 * p.m_ring_min);
    out.C6 = p.eps1 * p.mu_ring_sum;
    out.log_C4_tail = p.log_L3_plus_1;  // log-domain stand-in for log L3

    // w/t/p recursion, saturating to +inf past double range
    const double ln2 = 0.6931471805599453;
    double t_prev = 2.0 * out.gamma;
    out.t_seq.push_back(t_prev);
    for (int i = 1; i <= depth; ++i) {
        double log_p_prev = std::isfinite(t_prev) ? out.bound.log_h(t_prev + 1.0) : -kInf;
        out.log_p_seq.push_back(log_p_prev);
        double log_target = std::log(out.C4) + (i + out.gamma + 2) * ln2 +
                            std::log1p(t_prev) - log_p_prev;
        double w = std::isfinite(log_target) ? 1.0 + p.psi_W->first_arg_slope_ge_log(log_target)
                                             : kInf;
        out.log_w_seq.push_back(std::log(w));
        t_prev = t_prev + w;
        out.t_seq.push_back(t_prev);
    }
    // p(depth) for completeness
    out.log_p_seq.push_back(std::isfinite(t_prev) ? out.bound.log_h(t_prev + 1.0) : -kInf);

    // M_L = m-ring-max L1 L2 L3 N, carried in log-domain because of L3
    out.log_M_L = std::log(p.m_ring_max * p.L1 * p.L2 * spec.N) + p.log_L3_plus_1;

    // y1 and M_A
    double target = 2.0 * p.mu_ring_sum;
    double denom = kInf;
    for (int k = 0; k < spec.K; ++k) {
        double alpha = spec.arrival_rate(k);
        try {
            for (auto& [s, pr] : enumerate_selection_sets(spec.selection[k], k, spec.N, 4096))
                if (pr > 0) denom = std::min(denom, alpha * spec.m_ring(k, s));
        } catch (const SubsetExplosion&) {
            // exchangeable rules carry a constant per-stream m-ring
            denom = std::min(denom, alpha * spec.m_ring(k, QueueSet{0}));
        }
    }
    out.y1 = std::max(p.psi_A->first_arg_slope_ge(target / denom), std::nextafter(p.M1, kInf));
    out.M_A = 2.0 * p.m_ring_max * p.L1 * spec.K * p.psi_A->eval(out.y1);

    // M_R and L4 need sums of w(i) out to floor(C5 M_L) and L3 terms; both
    // counts are astronomically large by construction, so these constants
    // saturate to +inf unless the materialized depth already covers them
    auto partial_wsum = [&](double count) -> double {
        if (!std::isfinite(count) || count > (double)depth) return kInf;
        double wsum = 0;
        for (long i = 0; i < (long)count && i < (long)out.log_w_seq.size(); ++i) {
            double w = std::exp(out.log_w_seq[i]);
            if (!std::isfinite(w)) return kInf;
            wsum += w;
        }
        return wsum;
    };
    double wsum_ml = partial_wsum(std::exp(std::log(out.C5) + out.log_M_L));
    out.log_M_R = std::isfinite(wsum_ml)
                      ? std::log(p.m_ring_max * spec.N) + std::log(p.psi_W->eval(wsum_ml))
                      : kInf;
    double wsum_l3 = partial_wsum(std::expm1(p.log_L3_plus_1));
    out.log_L4 = std::isfinite(wsum_l3) ? std::log(p.psi_W->eval(wsum_l3)) : kInf;
    return out;
}

}  // namespace jsqlab
