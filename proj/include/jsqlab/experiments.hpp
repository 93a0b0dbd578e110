#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "jsqlab/engine.hpp"
#include "jsqlab/lyapunov.hpp"
#include "jsqlab/stats.hpp"

namespace jsqlab {

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    return splitmix64(s);
}

// ---------------------------------------------------------------------------
// Mean-field reference tails: rho^{(D^{l+1}-1)/(D-1)}; the M/M/1 tail for D=1

inline double meanfield_tail_reference(double rho, int d, int ell) {
    if (!(rho > 0 && rho < 1) || d < 1 || ell < 0)
        throw std::invalid_argument("meanfield_tail_reference domain");
    if (d == 1) return std::pow(rho, ell + 1);
    double exponent = 0, power = 1;
    for (int j = 0; j <= ell; ++j) {
        exponent += power;
        power *= d;
    }
    return std::pow(rho, exponent);
}

// ---------------------------------------------------------------------------
// Equilibrium tail estimation with batch-means confidence intervals

struct TailConfig {
    double horizon = 0;
    double burn_in = -1;  // < 0: 20% of horizon
    int batches = 32;
    std::uint64_t seed = 1;
    std::optional<int> queue;  // empty: average over all queues
    std::vector<int> z_levels = {0, 1, 2, 3, 4};
    std::vector<double> workload_levels;
    std::vector<double> age_levels;
    std::vector<double> s_levels;
    bool stationarity_guard = true;
    int guard_samples = 512;
    std::uint64_t event_budget = 400000000;
};

struct TailEstimate {
    std::vector<int> z_levels;
    std::vector<Estimate> z_tail;  // P(Z_n > level)
    std::vector<double> workload_levels;
    std::vector<Estimate> workload_tail;  // weighted workload tails
    std::vector<double> age_levels;
    std::vector<Estimate> age_tail;  // maximum weighted age tails
    std::vector<double> s_levels;
    std::vector<Estimate> s_tail;  // weighted interarrival tails, worst stream
    double burn_in = 0, horizon = 0;
    int batches = 0;
    std::uint64_t seed = 0;
};

inline TailEstimate estimate_tail(const NetworkSpec& spec, const TailConfig& cfg) {
    spec.validate();
    auto ti = traffic_intensity(spec);
    if (ti.rho >= 1.0 - 1e-12) throw UnstableRun("network is not subcritical");
    double burn = cfg.burn_in >= 0 ? cfg.burn_in : 0.2 * cfg.horizon;
    if (!(cfg.horizon > burn)) throw std::invalid_argument("horizon must exceed the burn-in");
    LyapunovParams params = build_params(spec);

    const int B = cfg.batches;
    const double bin_len = (cfg.horizon - burn) / B;
    const bool all_queues = !cfg.queue.has_value();
    const int q0 = all_queues ? 0 : *cfg.queue;
    const int q1 = all_queues ? spec.N : *cfg.queue + 1;
    const int nq = q1 - q0;

    auto bins = [&](std::size_t levels) {
        return std::vector<std::vector<double>>(levels, std::vector<double>(B, 0.0));
    };
    auto z_abv = bins(cfg.z_levels.size());
    auto w_abv = bins(cfg.workload_levels.size());
    auto a_abv = bins(cfg.age_levels.size());
    std::vector<decltype(z_abv)> s_abv(spec.K, bins(cfg.s_levels.size()));

    auto add = [&](std::vector<std::vector<double>>& acc, std::size_t l, double a, double b) {
        a = std::max(a, burn);
        if (b <= a) return;
        spread_over_bins(a, b, burn, bin_len, B,
                         [&](int bin, double w) { acc[l][bin] += w; });
    };

    // per-queue marks: between events at a queue, z is constant and the
    // weighted workload decays at the served job's service rate; the maximum
    // weighted age is a max of increasing lines, so it exceeds a threshold
    // exactly from the earliest per-job crossing time onward
    std::vector<double> mark_t(spec.N, 0.0);
    std::vector<int> mark_z(spec.N, 0);
    std::vector<double> mark_w(spec.N, 0.0), mark_w_slope(spec.N, 0.0);
    std::vector<std::vector<double>> age_cross(spec.N,
                                               std::vector<double>(cfg.age_levels.size(), kInf));
    std::vector<double> stream_mark(spec.K, 0.0);

    auto settle_queue = [&](int n, double t) {
        double a = mark_t[n], b = t;
        if (b <= a || n < q0 || n >= q1) return;
        for (std::size_t l = 0; l < cfg.z_levels.size(); ++l)
            if (mark_z[n] > cfg.z_levels[l]) add(z_abv, l, a, b);
        if (mark_z[n] > 0) {
            for (std::size_t l = 0; l < cfg.workload_levels.size(); ++l) {
                double thr = cfg.workload_levels[l];
                if (mark_w[n] <= thr) continue;
                double cross = mark_w_slope[n] > 0 ? a + (mark_w[n] - thr) / mark_w_slope[n] : b;
                add(w_abv, l, a, std::min(b, cross));
            }
            for (std::size_t l = 0; l < cfg.age_levels.size(); ++l)
                add(a_abv, l, std::max(a, age_cross[n][l]), b);
        }
    };
    auto remark_queue = [&](SimState& st, int n, double t) {
        mark_t[n] = t;
        auto& q = st.queues[n];
        mark_z[n] = (int)q.jobs.size();
        double wsum = 0;
        for (auto& [id, job] : q.jobs) wsum += job.service_rate * job.residual;
        mark_w[n] = wsum;
        mark_w_slope[n] = 0;
        if (q.ps && !q.jobs.empty()) {
            double s = 0;
            for (auto& [id, job] : q.jobs) s += job.service_rate;
            mark_w_slope[n] = s / q.jobs.size();
        } else if (q.serving) {
            mark_w_slope[n] = q.jobs.at(q.serving).service_rate;
        }
        for (std::size_t l = 0; l < cfg.age_levels.size(); ++l) {
            double cross = kInf;
            for (auto& [id, job] : q.jobs)
                cross = std::min(cross,
                                 job.arrival_time + cfg.age_levels[l] / job.service_rate);
            age_cross[n][l] = cross;
        }
    };
    // weighted interarrival s(t) = alpha (t_fire - t) decreases to 0 at t_fire
    auto settle_stream = [&](int k, double t_end, double t_fire) {
        double a = stream_mark[k];
        if (t_end <= a) return;
        double alpha = spec.arrival_rate(k);
        for (std::size_t l = 0; l < cfg.s_levels.size(); ++l) {
            double tstar = t_fire - cfg.s_levels[l] / alpha;
            add(s_abv[k], l, a, std::min(t_end, tstar));
        }
    };

    std::vector<double> norm_samples;
    bool final_settled = false;
    RunHooks hooks;
    hooks.grid_dt = cfg.horizon / std::max(1, cfg.guard_samples);
    hooks.on_grid = [&](SimState& st, double t) {
        if (cfg.stationarity_guard) {
            auto x = snapshot(st, spec);
            norm_samples.push_back(norm(x, params).total);
        }
        if (t >= cfg.horizon * (1.0 - 1e-12) && !final_settled) {
            final_settled = true;
            for (int n = 0; n < spec.N; ++n) settle_queue(n, cfg.horizon);
            for (int k = 0; k < spec.K; ++k) settle_stream(k, cfg.horizon, st.next_arrival[k]);
        }
    };
    hooks.on_event = [&](SimState& st, const EventRecord& rec) {
        settle_queue(rec.queue, rec.t);
        remark_queue(st, rec.queue, rec.t);
        if (rec.kind == EventKind::Arrival) {
            int k = (int)rec.stream_or_job;
            settle_stream(k, rec.t, rec.t);
            stream_mark[k] = rec.t;
        }
    };

    RunConfig rc;
    rc.horizon = cfg.horizon;
    rc.seed = cfg.seed;
    rc.event_budget = cfg.event_budget;
    run(spec, rc, hooks);

    if (cfg.stationarity_guard && norm_samples.size() >= 32) {
        std::size_t half = norm_samples.size() / 2;
        std::vector<double> second(norm_samples.begin() + half, norm_samples.end());
        int gb = 16;
        std::vector<double> means(gb, 0.0);
        std::size_t per = second.size() / gb;
        for (int i = 0; i < gb; ++i) {
            for (std::size_t j = 0; j < per; ++j) means[i] += second[i * per + j];
            means[i] /= (double)per;
        }
        auto fit = linear_trend(means);
        if (fit.stderr_slope > 0 && fit.slope > 3.0 * fit.stderr_slope)
            throw UnstableRun("norm trend test failed: upward drift of " +
                              std::to_string(fit.slope) + " per batch");
    }

    TailEstimate est;
    est.z_levels = cfg.z_levels;
    est.workload_levels = cfg.workload_levels;
    est.age_levels = cfg.age_levels;
    est.s_levels = cfg.s_levels;
    est.burn_in = burn;
    est.horizon = cfg.horizon;
    est.batches = B;
    est.seed = cfg.seed;
    auto finish = [&](const std::vector<std::vector<double>>& acc, double denom) {
        std::vector<Estimate> out;
        for (auto& per_level : acc) {
            std::vector<double> fracs(per_level.size());
            for (std::size_t b = 0; b < per_level.size(); ++b) fracs[b] = per_level[b] / denom;
            out.push_back(batch_means(fracs));
        }
        return out;
    };
    est.z_tail = finish(z_abv, bin_len * nq);
    est.workload_tail = finish(w_abv, bin_len * nq);
    est.age_tail = finish(a_abv, bin_len * nq);
    // the interarrival estimand takes the worst stream per level
    est.s_tail.assign(cfg.s_levels.size(), Estimate{});
    for (int k = 0; k < spec.K; ++k) {
        auto per_stream = finish(s_abv[k], bin_len);
        for (std::size_t l = 0; l < per_stream.size(); ++l)
            if (k == 0 || per_stream[l].value > est.s_tail[l].value)
                est.s_tail[l] = per_stream[l];
    }
    return est;
}

// ---------------------------------------------------------------------------
// Hitting times of norm sublevel sets

struct HittingConfig {
    double horizon = 1e6;
    int reps = 200;
    std::uint64_t seed = 1;
    bool variant_t_ge_1 = false;  // tau_M(1) instead of tau_M
};

struct HittingTimeResult {
    Estimate mean_tau;
    double max_tau = 0;
    int finished = 0, exceeded = 0;
    double norm_x0 = 0;
    double c3_reference = 0;  // C3 * ||x0||
    std::vector<double> taus;
};

namespace detail {

inline std::vector<InitialJob> snapshot_to_initial_jobs(const StateSnapshot& x,
                                                        const NetworkSpec& spec) {
    std::vector<InitialJob> jobs;
    for (auto& j : x.jobs) {
        InitialJob ij;
        ij.queue = j.queue;
        ij.stream = j.stream;
        ij.selection = j.selection;
        double mu = 1.0 / spec.service_dist(j.stream, j.selection, j.queue).mean();
        ij.age = j.weighted_age / mu;
        ij.residual = j.weighted_residual / mu;
        ij.initial_service = ij.residual;
        jobs.push_back(std::move(ij));
    }
    return jobs;
}

// incrementally maintained norm along a run; exact at event epochs
class NormTracker {
  public:
    explicit NormTracker(const LyapunovParams& p) : p_(p) {}

    void reset(SimState& st, const NetworkSpec& spec) {
        const int N = spec.N;
        lsum_.assign(N, 0.0);
        rsum_.assign(N, 0.0);
        z_.assign(N, 0);
        serve_id_.assign(N, 0);
        serve_w_.assign(N, 0.0);
        serve_mr_.assign(N, 0.0);
        events_since_rebuild_ = 0;
        for (int n = 0; n < N; ++n) {
            detail::sync_queue(st, spec, n);
            rebuild_queue(st, spec, n);
        }
    }

    void note_departure_candidate(double mr) { departed_mr_ = mr; }

    void on_event(SimState& st, const NetworkSpec& spec, const EventRecord& rec) {
        for (int n = 0; n < spec.N; ++n) detail::sync_queue(st, spec, n);
        if (++events_since_rebuild_ >= 8192) {
            events_since_rebuild_ = 0;
            for (int n = 0; n < spec.N; ++n) rebuild_queue(st, spec, n);
            return;
        }
        for (int n = 0; n < spec.N; ++n) {
            auto& q = st.queues[n];
            if (q.ps) {
                rebuild_queue(st, spec, n);  // processor sharing: no cheap delta
                continue;
            }
            if (serve_id_[n] == 0) continue;
            auto it = q.jobs.find(serve_id_[n]);
            double w_now =
                it == q.jobs.end() ? 0.0 : it->second.service_rate * it->second.residual;
            apply_w_change(n, serve_mr_[n], serve_w_[n], w_now);
            serve_w_[n] = w_now;
        }
        int n = rec.queue;
        if (!st.queues[n].ps) {
            if (rec.kind == EventKind::Arrival) {
                auto& job = st.queues[n].jobs.rbegin()->second;
                double mr = p_.m_ring(job.stream, job.selection);
                double w = job.service_rate * job.residual;
                lsum_[n] += mr * std::min(w + p_.eps2, p_.L2);
                rsum_[n] += mr * p_.psi_W->eval(w);
                z_[n] += 1;
            } else {
                lsum_[n] -= departed_mr_ * std::min(p_.eps2, p_.L2);
                z_[n] -= 1;
            }
        }
        remark_serving(st, spec);
    }

    double value(SimState& st, const NetworkSpec& spec) const {
        double total = 0;
        std::vector<double> psi_z(spec.N);
        for (int n = 0; n < spec.N; ++n) {
            psi_z[n] = p_.psi_Z_of(z_[n]);
            total += lsum_[n] * psi_z[n] + rsum_[n];
        }
        for (int k = 0; k < spec.K; ++k) {
            double dot = 0;
            for (int n = 0; n < spec.N; ++n) dot += p_.g[k][n] * psi_z[n];
            double s = spec.arrival_rate(k) * std::max(st.next_arrival[k] - st.clock, 0.0);
            total += (1.0 + p_.eps1 / 2.0) * dot * p_.psi_A->eval(s);
        }
        return total;
    }

  private:
    void apply_w_change(int n, double mr, double w_old, double w_new) {
        lsum_[n] += mr * (std::min(w_new + p_.eps2, p_.L2) - std::min(w_old + p_.eps2, p_.L2));
        rsum_[n] += mr * (p_.psi_W->eval(w_new) - p_.psi_W->eval(w_old));
    }
    void remark_serving(SimState& st, const NetworkSpec& spec) {
        for (int n = 0; n < spec.N; ++n) {
            auto& q = st.queues[n];
            if (q.ps || q.serving == 0) {
                serve_id_[n] = 0;
                continue;
            }
            auto& job = q.jobs.at(q.serving);
            serve_id_[n] = q.serving;
            serve_w_[n] = job.service_rate * job.residual;
            serve_mr_[n] = p_.m_ring(job.stream, job.selection);
        }
    }
    void rebuild_queue(SimState& st, const NetworkSpec& spec, int n) {
        auto& q = st.queues[n];
        lsum_[n] = rsum_[n] = 0;
        z_[n] = (int)q.jobs.size();
        for (auto& [id, job] : q.jobs) {
            double mr = p_.m_ring(job.stream, job.selection);
            double w = job.service_rate * job.residual;
            lsum_[n] += mr * std::min(w + p_.eps2, p_.L2);
            rsum_[n] += mr * p_.psi_W->eval(w);
        }
        remark_serving(st, spec);
    }

    const LyapunovParams& p_;
    std::vector<double> lsum_, rsum_;
    std::vector<int> z_;
    std::vector<std::uint64_t> serve_id_;
    std::vector<double> serve_w_, serve_mr_;
    double departed_mr_ = 0;
    long events_since_rebuild_ = 0;
};

}  // namespace detail

inline HittingTimeResult estimate_hitting_time(const NetworkSpec& spec,
                                               const LyapunovParams& params, double M,
                                               const StateSnapshot& x0,
                                               const HittingConfig& cfg) {
    HittingTimeResult out;
    out.norm_x0 = norm(x0, params).total;
    out.c3_reference = out.norm_x0 / (params.eps1 * params.mu_ring_sum);
    auto initial = detail::snapshot_to_initial_jobs(x0, spec);
    std::vector<double> u0(spec.K);
    for (int k = 0; k < spec.K; ++k) u0[k] = x0.s[k] / spec.arrival_rate(k);

    for (int r = 0; r < cfg.reps; ++r) {
        SimState st = init_state(spec, initial, 0, &u0);
        st.rng = RngStream::seeded(cfg.seed, 1 + r);
        detail::NormTracker tracker(params);
        tracker.reset(st, spec);
        double tau = -1;
        double gate = cfg.variant_t_ge_1 ? 1.0 : 0.0;
        if (gate == 0.0 && tracker.value(st, spec) <= M) tau = 0.0;
        while (tau < 0) {
            NextEvent ev = next_event(st, spec);
            if (!std::isfinite(ev.t) || ev.t > cfg.horizon) break;
            if (ev.kind == EventKind::Departure) {
                auto& q = st.queues[ev.queue];
                if (!q.ps && q.serving) {
                    auto& job = q.jobs.at(q.serving);
                    tracker.note_departure_candidate(params.m_ring(job.stream, job.selection));
                }
            }
            EventRecord rec = step(st, spec);
            tracker.on_event(st, spec, rec);
            if (rec.t >= gate && tracker.value(st, spec) <= M) tau = rec.t;
        }
        if (tau >= 0) {
            out.taus.push_back(tau);
            ++out.finished;
        } else {
            ++out.exceeded;
        }
    }
    out.mean_tau = sample_mean(out.taus);
    for (double t : out.taus) out.max_tau = std::max(out.max_tau, t);
    return out;
}

// ---------------------------------------------------------------------------
// Drift audit along simulated trajectories

struct DriftAuditConfig {
    double horizon = 200;
    int flow_points = 1000;
    int jump_checks = 200;
    long mc_budget = 0;  // Monte Carlo budget per jump for continuous services
    int growth_reps = 500;
    double growth_t = 1.0;
    double tol = 1e-9;
    std::uint64_t seed = 1;
};

struct DriftViolation {
    double t = 0;
    double margin = 0;
    std::string what;
    StateSnapshot state;
};

struct DriftAuditReport {
    long flow_checked = 0;
    long jump_checked = 0;
    std::vector<DriftViolation> flow_violations;
    std::vector<DriftViolation> jump_violations;
    bool jump_exact = true;
    Estimate growth_rate;   // (E||X(t)|| - ||x||) / t
    double growth_upper = 0;  // one-sided 95% upper bound
    double c2 = 0;
    bool growth_ok = false;
    bool ok() const {
        return flow_violations.empty() && jump_violations.empty() && growth_ok;
    }
};

inline DriftAuditReport drift_audit(const NetworkSpec& spec, const LyapunovParams& params,
                                    const DriftAuditConfig& cfg) {
    DriftAuditReport rep;
    rep.c2 = params.mu_ring_sum;

    SimState st = init_state(spec, {}, cfg.seed);
    long flow_left = cfg.flow_points, jump_left = cfg.jump_checks;
    RngStream mc_rng = RngStream::seeded(cfg.seed, 999);
    double grid = cfg.horizon / std::max<long>(1, cfg.flow_points);
    double next_sample = grid;
    while (flow_left > 0 || jump_left > 0) {
        NextEvent ev = next_event(st, spec);
        if (!std::isfinite(ev.t) || ev.t > cfg.horizon) break;
        while (flow_left > 0 && next_sample < ev.t) {
            st.clock = next_sample;
            auto x = snapshot(st, spec);
            auto fd = flow_derivative(x, params, cfg.tol);
            --flow_left;
            ++rep.flow_checked;
            if (!fd.drain_ok || !fd.arrival_growth_ok || !fd.total_ok) {
                double m1 = fd.dL + fd.dR / 2 - fd.drain_bound;
                double m2 = fd.dA - fd.arrival_growth_bound;
                double m3 = fd.dL + fd.dR + fd.dA - fd.total_bound;
                rep.flow_violations.push_back(
                    {next_sample, std::max({m1, m2, m3}), "flow bound", x});
            }
            next_sample += grid;
        }
        if (ev.kind == EventKind::Arrival && jump_left > 0 &&
            (spec.assignment == AssignmentKind::Jsq ||
             spec.assignment == AssignmentKind::RandomD1)) {
            st.clock = ev.t;
            auto x = snapshot(st, spec);
            JumpExpectation je;
            bool have = true;
            try {
                je = arrival_jump_expectation(x, params, ev.stream);
            } catch (const ExactModeUnavailable&) {
                if (cfg.mc_budget > 0) {
                    je = arrival_jump_expectation(x, params, ev.stream, cfg.mc_budget, &mc_rng);
                    rep.jump_exact = false;
                } else {
                    have = false;
                }
            }
            if (have) {
                --jump_left;
                ++rep.jump_checked;
                double margin = je.exact ? je.value : je.value - 2.0 * je.std_error;
                if (margin > cfg.tol)
                    rep.jump_violations.push_back({ev.t, margin, "arrival jump", x});
            }
        }
        step(st, spec);
    }

    // growth bound from the empty state over [0, t]
    std::vector<double> growth;
    for (int r = 0; r < cfg.growth_reps; ++r) {
        SimState s2 = init_state(spec, {}, derive_seed(cfg.seed, 7000 + r));
        auto x0 = snapshot(s2, spec);
        double n0 = norm(x0, params).total;
        while (true) {
            NextEvent ev = next_event(s2, spec);
            if (!std::isfinite(ev.t) || ev.t > cfg.growth_t) break;
            step(s2, spec);
        }
        s2.clock = cfg.growth_t;
        auto x1 = snapshot(s2, spec);
        growth.push_back((norm(x1, params).total - n0) / cfg.growth_t);
    }
    rep.growth_rate = sample_mean(growth);
    double se = growth.size() > 1
                    ? rep.growth_rate.ci_half / t_quantile_975((int)growth.size() - 1)
                    : 0.0;
    rep.growth_upper = rep.growth_rate.value + 1.6448536269514722 * se;
    rep.growth_ok = rep.growth_upper <= rep.c2;
    return rep;
}

// ---------------------------------------------------------------------------
// The two-queue family with designated-queue service

struct LargeWorkloadParams {
    double gamma0 = 0.001;   // in (0, 1/200]
    double eta = 0.01;       // in (0, 1/100]
    long h2 = 1000;          // even; >= 100 in strict mode
    int depth = 4;           // ladder levels materialized (h_0 .. h_depth)
    double epsilon = 1e-46;  // family index
    bool strict = true;
    static constexpr double gamma1 = 1.0 / 2000.0;

    double delta() const { return gamma0 * epsilon; }
    // floor(gamma1 / epsilon); a double, since strict members push it far
    // beyond integer range
    double k_eps() const { return std::floor(gamma1 / epsilon); }

    // ladder in log-domain: h0 = delta, h1 = 1, h2, h3 = h2^3,
    // h_{i+1} = exp(sqrt(h_i)) afterwards
    std::vector<double> log_h() const {
        std::vector<double> lh(depth + 1);
        lh[0] = std::log(delta());
        if (depth >= 1) lh[1] = 0.0;
        if (depth >= 2) lh[2] = std::log((double)h2);
        if (depth >= 3) lh[3] = 3.0 * std::log((double)h2);
        for (int i = 4; i <= depth; ++i) {
            double h_prev = std::exp(lh[i - 1]);
            lh[i] = std::isfinite(h_prev) ? std::sqrt(h_prev) : kInf;
        }
        return lh;
    }
};

struct LargeWorkloadReport {
    double rho = 0;
    double rho_bound = 0;  // 1 - eta/2
    bool rho_ok = false;
    double eps_bound = 0;  // 1 / h(3)^5
    bool eps_ok = false;
    double delta = 0;
    double k_eps = 0;
    std::vector<double> log_h;
    bool simulatable = false;
    bool materializable = true;  // every ladder level fits in double range
    std::vector<std::string> violations;
};

struct LargeWorkloadMember {
    // absent when a ladder level is out of double range (strict members with
    // large h2 validate only; their event rates cannot be materialized)
    std::optional<NetworkSpec> spec;
    LargeWorkloadReport report;
};

inline LargeWorkloadMember build_large_workload_member(const LargeWorkloadParams& p) {
    if (!(p.gamma0 > 0 && p.gamma0 <= 1.0 / 200.0))
        throw std::invalid_argument("gamma0 must lie in (0, 1/200]");
    if (!(p.eta > 0 && p.eta <= 1.0 / 100.0))
        throw std::invalid_argument("eta must lie in (0, 1/100]");
    if (p.h2 < 2 || p.h2 % 2 != 0) throw std::invalid_argument("h2 must be an even count >= 2");
    if (p.depth < 3) throw std::invalid_argument("depth must be >= 3");
    if (!(p.epsilon > 0)) throw std::invalid_argument("epsilon must be > 0");

    LargeWorkloadReport rep;
    rep.log_h = p.log_h();
    rep.delta = p.delta();
    rep.k_eps = p.k_eps();
    rep.rho_bound = 1.0 - p.eta / 2.0;
    rep.eps_bound = std::exp(-15.0 * std::log((double)p.h2));  // 1 / h2^15 = 1 / h(3)^5

    // traffic intensity gamma0 + 1 - eta + sum_{i>=2} h_i^{1-i}
    rep.rho = p.gamma0 + 1.0 - p.eta;
    for (int i = 2; i <= p.depth; ++i) rep.rho += std::exp((1.0 - i) * rep.log_h[i]);
    rep.rho_ok = rep.rho <= rep.rho_bound;
    rep.eps_ok = p.epsilon <= rep.eps_bound;

    if (p.h2 < 100) rep.violations.push_back("h2 below the floor of 100");
    if (!rep.eps_ok) rep.violations.push_back("epsilon exceeds 1/h(3)^5");
    if (!rep.rho_ok) rep.violations.push_back("traffic intensity exceeds 1 - eta/2");
    if (p.strict && !rep.violations.empty()) {
        std::string msg = "strict family constraints violated:";
        for (auto& v : rep.violations) msg += " [" + v + "]";
        throw StrictViolation(msg);
    }
    // strict members validate only: their event rates are astronomically high
    rep.simulatable = !p.strict;

    LargeWorkloadMember out;
    out.report = rep;
    NetworkSpec spec;
    spec.N = 2;
    spec.K = p.depth + 1;
    StationIndependent service;
    bool materializable = true;
    for (int i = 0; i <= p.depth && materializable; ++i) {
        double rate;
        if (i == 0) rate = 2.0 / p.epsilon;
        else if (i == 1) rate = 2.0 * (1.0 - p.eta);
        else rate = 2.0 * std::exp(-(double)i * rep.log_h[i]);
        double h_i = std::exp(rep.log_h[i]);
        if (!(rate > 0) || !std::isfinite(rate) || !std::isfinite(h_i)) {
            materializable = false;
            break;
        }
        spec.interarrival.push_back(Distribution::exponential(rate));
        spec.selection.push_back(SelectionRule{ExplicitRule{{{QueueSet{0, 1}, 1.0}}}});
        service.per_stream.push_back(Distribution::deterministic(h_i));
    }
    if (materializable) {
        spec.service = std::move(service);
        spec.discipline = DisciplineKind::DesignatedQueue;
        spec.assignment = AssignmentKind::Jsq;
        spec.tie_break = TieBreak::UniformRandom;
        spec.validate();
        out.spec = std::move(spec);
    } else {
        out.report.simulatable = false;
        out.report.materializable = false;
    }
    return out;
}

// The same family member as one composite Poisson stream whose service law is
// the discrete mixture over the ladder atoms.  Distributionally identical to
// the superposed form; this is the view under which the family fails the
// service uniformity condition as epsilon shrinks.
inline NetworkSpec large_workload_composite_spec(const LargeWorkloadParams& p) {
    auto log_h = p.log_h();
    // levels whose rates or sizes leave double range carry no simulable mass
    std::vector<std::pair<int, double>> levels;  // (index, rate)
    double total_rate = 0;
    for (int i = 0; i <= p.depth; ++i) {
        double rate;
        if (i == 0) rate = 2.0 / p.epsilon;
        else if (i == 1) rate = 2.0 * (1.0 - p.eta);
        else rate = 2.0 * std::exp(-(double)i * log_h[i]);
        if (!(rate > 0) || !std::isfinite(std::exp(log_h[i]))) continue;
        levels.emplace_back(i, rate);
        total_rate += rate;
    }
    std::vector<std::pair<double, double>> masses;
    double acc = 0;
    std::size_t largest = 0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
        double prob = levels[j].second / total_rate;
        acc += prob;
        masses.emplace_back(std::exp(log_h[levels[j].first]), prob);
        if (prob > masses[largest].second) largest = j;
    }
    // the dominant atom absorbs the rounding so the weights sum to one exactly
    masses[largest].second += 1.0 - acc;
    NetworkSpec spec;
    spec.N = 2;
    spec.K = 1;
    spec.interarrival = {Distribution::exponential(total_rate)};
    spec.selection = {SelectionRule{ExplicitRule{{{QueueSet{0, 1}, 1.0}}}}};
    spec.service = ClassIndependent{{Distribution::discrete(masses),
                                     Distribution::discrete(masses)}};
    spec.discipline = DisciplineKind::DesignatedQueue;
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// Ladder statistics: a designated job starts at h(i); the episode is absorbed
// when the designated residual grinds down to h(i-1) or jumps to h(l), l >= i+1

struct LadderConfig {
    int reps = 100;
    std::uint64_t seed = 1;
    double horizon = 2000;
    std::uint64_t event_budget = 4000000;
};

struct LadderStats {
    long downs = 0, ups = 0, horizon_exceeded = 0;
    long lateral_resets = 0;  // designation takeovers that stay below h(i+1)
    WilsonInterval p_down, p_up;
    double mean_episode_time = 0;
};

inline LadderStats ladder_stats(const LargeWorkloadMember& net, int kappa, int level,
                                const LadderConfig& cfg) {
    if (level < 2 || level + 1 >= (int)net.report.log_h.size())
        throw std::invalid_argument("ladder level must satisfy 2 <= i <= depth - 1");
    if (!net.spec)
        throw std::invalid_argument("this family member is not desk-materializable");
    NetworkSpec spec = *net.spec;
    if (kappa > 0) {
        spec.assignment = AssignmentKind::JsqHandicap;
        spec.handicap_kappa = kappa;
    }
    double h_i = std::exp(net.report.log_h[level]);
    double h_down = std::exp(net.report.log_h[level - 1]);
    double h_up = std::exp(net.report.log_h[level + 1]);

    LadderStats out;
    double episode_time_sum = 0;
    for (int r = 0; r < cfg.reps; ++r) {
        std::vector<InitialJob> x0{{0, level, QueueSet{0, 1}, 0.0, h_i, h_i}};
        SimState st = init_state(spec, x0, derive_seed(cfg.seed, r));

        int outcome = 0;  // -1 down, +1 up
        double t_abs = 0;
        std::uint64_t events = 0;
        while (outcome == 0) {
            NextEvent ev = next_event(st, spec);
            if (!std::isfinite(ev.t) || ev.t > cfg.horizon || events >= cfg.event_budget) break;
            // grinding can cross h(i-1) inside the coming interval
            if (st.designated_queue && st.designated_job) {
                auto& q = st.queues[*st.designated_queue];
                if (!q.ps && q.serving == *st.designated_job) {
                    auto& job = q.jobs.at(*st.designated_job);
                    double y_next = job.residual - (ev.t - q.last_sync);
                    if (y_next <= h_down + 1e-12) {
                        outcome = -1;
                        t_abs = q.last_sync + (job.residual - h_down);
                        break;
                    }
                }
            }
            auto prev = st.designated_job;
            EventRecord rec = step(st, spec);
            ++events;
            if (st.designated_job != prev && st.designated_job) {
                double y_new =
                    st.queues[*st.designated_queue].jobs.at(*st.designated_job).residual;
                if (y_new >= h_up * (1.0 - 1e-12)) {
                    outcome = 1;
                    t_abs = rec.t;
                } else {
                    ++out.lateral_resets;
                }
            }
        }
        if (outcome == -1) {
            ++out.downs;
            episode_time_sum += t_abs;
        } else if (outcome == 1) {
            ++out.ups;
            episode_time_sum += t_abs;
        } else {
            ++out.horizon_exceeded;
        }
    }
    long completed = out.downs + out.ups;
    out.p_down = wilson(out.downs, completed);
    out.p_up = wilson(out.ups, completed);
    out.mean_episode_time = completed > 0 ? episode_time_sum / completed : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Stationary workload comparison between two networks

struct CompareConfig {
    double horizon = 2000;
    double burn_in = -1;  // < 0: 20%
    int reps = 16;
    std::uint64_t seed = 1;
    bool stationarity_guard = true;
    std::uint64_t event_budget = 400000000;
    int threads = 1;  // replications run in parallel; aggregation stays ordered
};

struct WorkloadComparison {
    Estimate mean_a, mean_b;          // time-average total residual work
    Estimate weighted_a, weighted_b;  // weighted workload analogues
    double ratio = 0;
    double ratio_lower_95 = 0;  // one-sided delta-method bounds
    double ratio_upper_95 = 0;
};

namespace detail {

struct WorkloadSample {
    double plain = 0;
    double weighted = 0;
};

inline WorkloadSample time_average_workload(const NetworkSpec& spec, double horizon, double burn,
                                            std::uint64_t seed, std::uint64_t event_budget) {
    // plain workload decays at rate 1 while busy, the weighted workload at the
    // served job's service rate; both are linear between re-marks
    int N = spec.N;
    std::vector<double> t_mark(N, 0.0), w_mark(N, 0.0), wt_mark(N, 0.0), slope(N, 0.0);
    std::vector<int> z_mark(N, 0);
    std::vector<long> since_rebuild(N, 0);
    double plain_int = 0, weighted_int = 0;

    auto settle = [&](int n, double t) {
        double a = std::max(t_mark[n], burn);
        if (t <= a || z_mark[n] == 0) return;
        double off = a - t_mark[n];
        double dt = t - a;
        plain_int += (w_mark[n] - off) * dt - 0.5 * dt * dt;
        weighted_int += (wt_mark[n] - slope[n] * off) * dt - 0.5 * slope[n] * dt * dt;
    };
    // the weighted sum advances incrementally; a periodic rebuild washes out
    // rounding drift
    auto remark = [&](SimState& st, int n, double t, double add_wt) {
        auto& q = st.queues[n];
        double dt = t - t_mark[n];
        t_mark[n] = t;
        z_mark[n] = (int)q.jobs.size();
        w_mark[n] = q.workload;
        if (++since_rebuild[n] >= 16384) {
            since_rebuild[n] = 0;
            double wt = 0;
            for (auto& [id, job] : q.jobs) wt += job.service_rate * job.residual;
            wt_mark[n] = wt;
        } else {
            wt_mark[n] = std::max(0.0, wt_mark[n] - slope[n] * dt + add_wt);
        }
        if (q.ps && !q.jobs.empty()) {
            double s = 0;
            for (auto& [id, job] : q.jobs) s += job.service_rate;
            slope[n] = s / q.jobs.size();
        } else if (q.serving) {
            slope[n] = q.jobs.at(q.serving).service_rate;
        } else {
            slope[n] = 0;
        }
    };

    bool settled_final = false;
    RunHooks hooks;
    hooks.on_event = [&](SimState& st, const EventRecord& rec) {
        double add_wt = 0;
        if (rec.kind == EventKind::Arrival) {
            auto& job = st.queues[rec.queue].jobs.rbegin()->second;
            add_wt = job.service_rate * job.residual;
        }
        settle(rec.queue, rec.t);
        remark(st, rec.queue, rec.t, add_wt);
        // a designated-role switch can change which job the other queues serve
        if (spec.discipline == DisciplineKind::DesignatedQueue &&
            rec.kind == EventKind::Departure) {
            for (int n = 0; n < N; ++n) {
                if (n == rec.queue) continue;
                detail::sync_queue(st, spec, n);
                settle(n, rec.t);
                remark(st, n, rec.t, 0);
            }
        }
    };
    hooks.grid_dt = horizon;
    hooks.on_grid = [&](SimState& st, double t) {
        if (t >= horizon * (1 - 1e-12) && !settled_final) {
            settled_final = true;
            for (int n = 0; n < N; ++n) settle(n, horizon);
        }
        (void)st;
    };
    RunConfig rc;
    rc.horizon = horizon;
    rc.seed = seed;
    rc.event_budget = event_budget;
    run(spec, rc, hooks);
    double window = horizon - burn;
    return {plain_int / window, weighted_int / window};
}

}  // namespace detail

inline WorkloadComparison workload_comparison(const NetworkSpec& spec_a,
                                              const NetworkSpec& spec_b,
                                              const CompareConfig& cfg) {
    double burn = cfg.burn_in >= 0 ? cfg.burn_in : 0.2 * cfg.horizon;
    if (cfg.stationarity_guard) {
        for (auto* s : {&spec_a, &spec_b})
            if (traffic_intensity(*s).rho >= 1.0 - 1e-12)
                throw UnstableRun("workload comparison guard: network is not subcritical");
    }
    std::vector<double> a_plain(cfg.reps), b_plain(cfg.reps), a_w(cfg.reps), b_w(cfg.reps);
    int workers = std::max(1, cfg.threads);
    std::atomic<int> next_rep{0};
    auto worker = [&]() {
        while (true) {
            int r = next_rep.fetch_add(1);
            if (r >= cfg.reps) break;
            auto sa = detail::time_average_workload(spec_a, cfg.horizon, burn,
                                                    derive_seed(cfg.seed, 2 * r),
                                                    cfg.event_budget);
            auto sb = detail::time_average_workload(spec_b, cfg.horizon, burn,
                                                    derive_seed(cfg.seed, 2 * r + 1),
                                                    cfg.event_budget);
            a_plain[r] = sa.plain;
            b_plain[r] = sb.plain;
            a_w[r] = sa.weighted;
            b_w[r] = sb.weighted;
        }
    };
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    WorkloadComparison out;
    out.mean_a = sample_mean(a_plain);
    out.mean_b = sample_mean(b_plain);
    out.weighted_a = sample_mean(a_w);
    out.weighted_b = sample_mean(b_w);
    out.ratio = out.mean_a.value / out.mean_b.value;
    double se_a = out.mean_a.ci_half / t_quantile_975(cfg.reps - 1);
    double se_b = out.mean_b.ci_half / t_quantile_975(cfg.reps - 1);
    double se_log = std::sqrt(se_a * se_a / (out.mean_a.value * out.mean_a.value) +
                              se_b * se_b / (out.mean_b.value * out.mean_b.value));
    out.ratio_lower_95 = out.ratio * std::exp(-1.6448536269514722 * se_log);
    out.ratio_upper_95 = out.ratio * std::exp(+1.6448536269514722 * se_log);
    return out;
}

}  // namespace jsqlab
