#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "jsqlab/errors.hpp"
#include "jsqlab/network.hpp"
#include "jsqlab/rng.hpp"
#include "jsqlab/state.hpp"

namespace jsqlab {

struct SimJob {
    std::uint64_t id = 0;
    int stream = 0;
    QueueSet selection;
    double arrival_time = 0;  // at this queue; ages are clock - arrival_time
    double initial_service = 0;
    double residual = 0;
    double service_rate = 1;  // mu_j = 1 / mean of its service law
};

enum class EventKind { Arrival, Departure };

struct EventRecord {
    std::uint64_t seq = 0;
    double t = 0;
    EventKind kind = EventKind::Arrival;
    std::int64_t stream_or_job = 0;  // stream for arrivals, job id for departures
    int queue = 0;
    QueueSet selection;  // arrivals only
    std::vector<int> z;  // post-event counts, filled only when requested
};

struct InitialJob {
    int queue = 0;
    int stream = 0;
    QueueSet selection;
    double age = 0;
    double initial_service = 0;
    double residual = 0;
};

namespace detail {

struct QueueState {
    std::map<std::uint64_t, SimJob> jobs;  // ids increase with arrival, so map order is rank order
    std::set<std::pair<double, std::uint64_t>> by_residual;  // only for residual-driven disciplines
    double last_sync = 0;
    double workload = 0;             // sum of residuals
    std::uint64_t serving = 0;       // 0: none (or PS, which serves everyone)
    bool ps = false;
    double next_completion = kInf;
    std::uint64_t epoch = 0;
    double last_change = 0;          // for z time averages
};

}  // namespace detail

struct SimState {
    double clock = 0;
    std::vector<detail::QueueState> queues;
    std::vector<double> next_arrival;  // absolute times
    std::optional<int> designated_queue;
    std::optional<std::uint64_t> designated_job;
    RngStream rng;
    std::uint64_t next_job_id = 1;
    std::uint64_t seq = 0;

    // (completion time, queue, epoch) with lazy invalidation
    std::priority_queue<std::tuple<double, int, std::uint64_t>,
                        std::vector<std::tuple<double, int, std::uint64_t>>, std::greater<>>
        completion_heap;

    int z(int n) const { return (int)queues[n].jobs.size(); }
    bool network_empty() const {
        for (auto& q : queues)
            if (!q.jobs.empty()) return false;
        return true;
    }
};

namespace detail {

inline bool uses_residual_order(DisciplineKind d) {
    return d == DisciplineKind::DesignatedQueue || d == DisciplineKind::PriorityShortestResidual ||
           d == DisciplineKind::PriorityLongestResidual;
}

inline void sync_queue(SimState& st, const NetworkSpec& spec, int n) {
    auto& q = st.queues[n];
    double dt = st.clock - q.last_sync;
    if (dt > 0 && !q.jobs.empty()) {
        if (q.ps) {
            double share = dt / q.jobs.size();
            for (auto& [id, job] : q.jobs) job.residual = std::max(0.0, job.residual - share);
        } else if (q.serving) {
            auto& job = q.jobs.at(q.serving);
            if (uses_residual_order(spec.discipline)) {
                q.by_residual.erase({job.residual, job.id});
                job.residual = std::max(0.0, job.residual - dt);
                q.by_residual.insert({job.residual, job.id});
            } else {
                job.residual = std::max(0.0, job.residual - dt);
            }
        }
        q.workload = std::max(0.0, q.workload - dt);
    }
    q.last_sync = st.clock;
}

// pick the served job(s) per the discipline and refresh the completion time
inline void reassign(SimState& st, const NetworkSpec& spec, int n) {
    auto& q = st.queues[n];
    q.ps = false;
    q.serving = 0;
    q.next_completion = kInf;
    if (!q.jobs.empty()) {
        switch (spec.discipline) {
            case DisciplineKind::Fifo:
                q.serving = q.jobs.begin()->first;
                break;
            case DisciplineKind::LifoPreemptive:
                q.serving = q.jobs.rbegin()->first;
                break;
            case DisciplineKind::ProcessorSharing: {
                q.ps = true;
                double vmin = kInf;
                for (auto& [id, job] : q.jobs) vmin = std::min(vmin, job.residual);
                q.next_completion = st.clock + vmin * q.jobs.size();
                break;
            }
            case DisciplineKind::PriorityShortestResidual:
                q.serving = q.by_residual.begin()->second;
                break;
            case DisciplineKind::PriorityLongestResidual:
                q.serving = q.by_residual.rbegin()->second;
                break;
            case DisciplineKind::DesignatedQueue: {
                if (st.designated_queue && *st.designated_queue == n) {
                    // shortest nondesignated job; the designated job is served
                    // only when alone
                    q.serving = 0;
                    for (auto it = q.by_residual.begin(); it != q.by_residual.end(); ++it) {
                        if (st.designated_job && it->second == *st.designated_job) continue;
                        q.serving = it->second;
                        break;
                    }
                    if (!q.serving) q.serving = q.jobs.begin()->first;  // designated alone
                } else {
                    q.serving = q.by_residual.rbegin()->second;  // longest residual
                }
                break;
            }
        }
        if (!q.ps) q.next_completion = st.clock + q.jobs.at(q.serving).residual;
    }
    ++q.epoch;
    if (std::isfinite(q.next_completion))
        st.completion_heap.push({q.next_completion, n, q.epoch});
}

inline void insert_job(SimState& st, const NetworkSpec& spec, int n, SimJob job) {
    auto& q = st.queues[n];
    q.workload += job.residual;
    if (uses_residual_order(spec.discipline)) q.by_residual.insert({job.residual, job.id});
    q.jobs.emplace(job.id, std::move(job));
}

inline void erase_job(SimState& st, const NetworkSpec& spec, int n, std::uint64_t id) {
    auto& q = st.queues[n];
    auto it = q.jobs.find(id);
    if (uses_residual_order(spec.discipline)) q.by_residual.erase({it->second.residual, id});
    q.jobs.erase(it);
}

// largest residual, oldest on ties
inline std::uint64_t largest_residual_job(const QueueState& q) {
    double best = -1;
    std::uint64_t pick = 0;
    for (auto& [id, job] : q.jobs)
        if (job.residual > best + 1e-15) {
            best = job.residual;
            pick = id;
        }
    return pick;
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline SimState init_state(const NetworkSpec& spec, const std::vector<InitialJob>& initial_jobs,
                           std::uint64_t seed,
                           const std::vector<double>* residual_interarrivals = nullptr) {
    spec.validate();
    SimState st;
    st.rng = RngStream::seeded(seed, 0);
    st.queues.resize(spec.N);
    st.next_arrival.resize(spec.K);
    for (int k = 0; k < spec.K; ++k)
        st.next_arrival[k] = residual_interarrivals ? (*residual_interarrivals)[k]
                                                    : spec.interarrival[k].sample(st.rng);

    std::vector<double> last_age(spec.N, kInf);
    for (auto& ij : initial_jobs) {
        if (ij.queue < 0 || ij.queue >= spec.N) throw InvalidInitialState("queue out of range");
        if (ij.stream < 0 || ij.stream >= spec.K) throw InvalidInitialState("stream out of range");
        if (!(ij.residual > 0) || ij.residual > ij.initial_service + 1e-12)
            throw InvalidInitialState("residual must lie in (0, initial_service]");
        if (ij.age < 0) throw InvalidInitialState("age must be >= 0");
        if (ij.age > last_age[ij.queue] + 1e-12)
            throw InvalidInitialState("jobs must be listed in rank order (ages nonincreasing)");
        last_age[ij.queue] = ij.age;
        SimJob job;
        job.id = st.next_job_id++;
        job.stream = ij.stream;
        job.selection = ij.selection.empty() ? QueueSet{ij.queue} : ij.selection;
        job.arrival_time = -ij.age;
        job.initial_service = ij.initial_service;
        job.residual = ij.residual;
        job.service_rate = 1.0 / spec.service_dist(job.stream, job.selection, ij.queue).mean();
        detail::insert_job(st, spec, ij.queue, std::move(job));
    }
    if (spec.discipline == DisciplineKind::DesignatedQueue && !st.network_empty()) {
        for (int n = 0; n < spec.N; ++n)
            if (!st.queues[n].jobs.empty()) {
                st.designated_queue = n;
                st.designated_job = detail::largest_residual_job(st.queues[n]);
                break;
            }
    }
    for (int n = 0; n < spec.N; ++n) detail::reassign(st, spec, n);
    return st;
}

struct NextEvent {
    double t = kInf;
    EventKind kind = EventKind::Arrival;
    int queue = -1;        // departures
    std::uint64_t job = 0; // departures
    int stream = -1;       // arrivals
};

inline NextEvent next_event(SimState& st, const NetworkSpec& spec) {
    NextEvent ev;
    // stale heap entries are dropped lazily; rebuild when they pile up
    if (st.completion_heap.size() > std::max<std::size_t>(1024, 16 * st.queues.size())) {
        decltype(st.completion_heap) fresh;
        for (int n = 0; n < (int)st.queues.size(); ++n)
            if (std::isfinite(st.queues[n].next_completion))
                fresh.push({st.queues[n].next_completion, n, st.queues[n].epoch});
        st.completion_heap = std::move(fresh);
    }
    while (!st.completion_heap.empty()) {
        auto [t, n, epoch] = st.completion_heap.top();
        if (epoch != st.queues[n].epoch) {
            st.completion_heap.pop();
            continue;
        }
        ev.t = t;
        ev.kind = EventKind::Departure;
        ev.queue = n;
        break;
    }
    double arr_t = kInf;
    int arr_k = -1;
    for (int k = 0; k < spec.K; ++k)
        if (st.next_arrival[k] < arr_t) {
            arr_t = st.next_arrival[k];
            arr_k = k;
        }
    // departures take precedence inside the clock tolerance
    if (arr_k >= 0 && arr_t < ev.t - 1e-12) {
        ev.t = arr_t;
        ev.kind = EventKind::Arrival;
        ev.stream = arr_k;
        ev.queue = -1;
    }
    if (ev.kind == EventKind::Departure && ev.queue >= 0) {
        const auto& q = st.queues[ev.queue];
        ev.job = q.ps ? 0 : q.serving;  // resolved after sync for PS
    }
    return ev;
}

// queue choice for an arriving stream-k job offered the selection set B
inline int assign_arriving_job(SimState& st, const NetworkSpec& spec, [[maybe_unused]] int k,
                               const QueueSet& B) {
    auto pick_min = [&](auto key) {
        std::vector<int> mins;
        auto best = key(B.front());
        mins.push_back(B.front());
        for (std::size_t i = 1; i < B.size(); ++i) {
            auto v = key(B[i]);
            if (v < best) {
                best = v;
                mins.assign(1, B[i]);
            } else if (v == best) {
                mins.push_back(B[i]);
            }
        }
        if (mins.size() == 1 || spec.tie_break == TieBreak::MinIndex) return mins.front();
        return mins[st.rng.below(mins.size())];
    };
    switch (spec.assignment) {
        case AssignmentKind::Jsq:
            return pick_min([&](int n) { return st.z(n); });
        case AssignmentKind::Jllq: {
            for (int n : B) detail::sync_queue(st, spec, n);
            return pick_min([&](int n) { return st.queues[n].workload; });
        }
        case AssignmentKind::RandomD1:
            return B.size() == 1 ? B.front() : B[st.rng.below(B.size())];
        case AssignmentKind::JsqHandicap: {
            if (!st.designated_queue) return pick_min([&](int n) { return st.z(n); });
            return pick_min([&](int n) {
                return st.z(n) + (n == *st.designated_queue ? spec.handicap_kappa : 0);
            });
        }
    }
    return B.front();
}

// advance past exactly one event; returns its record
inline EventRecord step(SimState& st, const NetworkSpec& spec, bool record_z = false) {
    NextEvent ev = next_event(st, spec);
    if (!std::isfinite(ev.t)) throw std::logic_error("no next event");
    st.clock = ev.t;

    EventRecord rec;
    rec.seq = ++st.seq;
    rec.t = st.clock;

    if (ev.kind == EventKind::Departure) {
        int n = ev.queue;
        detail::sync_queue(st, spec, n);
        auto& q = st.queues[n];
        std::uint64_t id = q.ps ? 0 : q.serving;
        if (q.ps) {
            double vmin = kInf;
            for (auto& [jid, job] : q.jobs)
                if (job.residual < vmin) {
                    vmin = job.residual;
                    id = jid;
                }
        }
        // departures fire exactly at zero residual; keep the residual index in step
        auto& leaving = q.jobs.at(id);
        if (detail::uses_residual_order(spec.discipline)) {
            q.by_residual.erase({leaving.residual, id});
            q.by_residual.insert({0.0, id});
        }
        leaving.residual = 0;
        bool was_designated = st.designated_job && *st.designated_job == id &&
                              st.designated_queue && *st.designated_queue == n;
        detail::erase_job(st, spec, n, id);
        q.workload = q.jobs.empty() ? 0.0 : q.workload;
        if (spec.discipline == DisciplineKind::DesignatedQueue && was_designated) {
            // the service rules empty the queue before its designated job can
            // finish, so the roles switch here, atomically within the event
            st.designated_queue.reset();
            st.designated_job.reset();
            for (int m = 0; m < spec.N; ++m)
                if (!st.queues[m].jobs.empty()) {
                    detail::sync_queue(st, spec, m);
                    st.designated_queue = m;
                    st.designated_job = detail::largest_residual_job(st.queues[m]);
                    break;
                }
            for (int m = 0; m < spec.N; ++m) detail::reassign(st, spec, m);
        } else {
            detail::reassign(st, spec, n);
        }
        rec.kind = EventKind::Departure;
        rec.stream_or_job = (std::int64_t)id;
        rec.queue = n;
    } else {
        int k = ev.stream;
        QueueSet B = sample_selection(spec, k, st.rng);
        int n = assign_arriving_job(st, spec, k, B);
        detail::sync_queue(st, spec, n);
        bool was_empty_network = st.network_empty();

        SimJob job;
        job.id = st.next_job_id++;
        job.stream = k;
        job.selection = B;
        job.arrival_time = st.clock;
        job.initial_service = spec.service_dist(k, B, n).sample(st.rng);
        job.residual = job.initial_service;
        job.service_rate = 1.0 / spec.service_dist(k, B, n).mean();
        std::uint64_t id = job.id;
        double v = job.initial_service;
        detail::insert_job(st, spec, n, std::move(job));

        if (spec.discipline == DisciplineKind::DesignatedQueue) {
            if (was_empty_network || !st.designated_queue) {
                st.designated_queue = n;
                st.designated_job = id;
            } else if (*st.designated_queue == n) {
                double y = st.queues[n].jobs.at(*st.designated_job).residual;
                if (v >= y) st.designated_job = id;
            }
        }
        st.next_arrival[k] = st.clock + spec.interarrival[k].sample(st.rng);
        detail::reassign(st, spec, n);
        rec.kind = EventKind::Arrival;
        rec.stream_or_job = k;
        rec.queue = n;
        rec.selection = B;
    }
    if (record_z) {
        rec.z.resize(spec.N);
        for (int n = 0; n < spec.N; ++n) rec.z[n] = st.z(n);
    }
    return rec;
}

// ---------------------------------------------------------------------------

inline StateSnapshot snapshot(SimState& st, const NetworkSpec& spec) {
    for (int n = 0; n < spec.N; ++n) detail::sync_queue(st, spec, n);
    StateSnapshot x;
    x.N = spec.N;
    x.K = spec.K;
    for (int n = 0; n < spec.N; ++n) {
        auto& q = st.queues[n];
        for (auto& [id, job] : q.jobs) {
            SnapshotJob sj;
            sj.queue = n;
            sj.stream = job.stream;
            sj.selection = job.selection;
            sj.weighted_age = job.service_rate * (st.clock - job.arrival_time);
            sj.weighted_residual = job.service_rate * std::max(job.residual, 1e-300);
            sj.effort = q.ps ? 1.0 / q.jobs.size() : (q.serving == id ? 1.0 : 0.0);
            x.jobs.push_back(std::move(sj));
        }
    }
    x.s.resize(spec.K);
    for (int k = 0; k < spec.K; ++k)
        x.s[k] = spec.arrival_rate(k) * std::max(st.next_arrival[k] - st.clock, 1e-300);
    return x;
}

struct RunHooks {
    std::function<void(SimState&, const EventRecord&)> on_event;
    double grid_dt = 0;
    std::function<void(SimState&, double)> on_grid;
};

struct RunMetrics {
    double horizon = 0;
    std::uint64_t events = 0, arrivals = 0, departures = 0;
    std::vector<double> mean_z;         // time averages
    std::vector<double> mean_workload;  // time averages of residual work
    double mean_total_workload = 0;
    double final_total_workload = 0;
};

struct RunResult {
    RunMetrics metrics;
    std::vector<EventRecord> log;  // kept only when requested
};

struct RunConfig {
    double horizon = 0;
    std::uint64_t seed = 1;
    std::uint64_t event_budget = 400000000;
    bool keep_log = false;
    bool record_z = false;
    std::vector<InitialJob> initial_jobs;
    const std::vector<double>* residual_interarrivals = nullptr;
};

inline RunResult run(const NetworkSpec& spec, const RunConfig& cfg, const RunHooks& hooks = {}) {
    if (!(cfg.horizon >= 0)) throw std::invalid_argument("horizon must be >= 0");
    SimState st = init_state(spec, cfg.initial_jobs, cfg.seed, cfg.residual_interarrivals);
    RunResult out;
    out.metrics.mean_z.assign(spec.N, 0.0);
    out.metrics.mean_workload.assign(spec.N, 0.0);

    // between events at a queue, z is constant and the workload (if the queue
    // is busy) decays at rate exactly 1; marks hold the post-event values
    std::vector<double> z_int(spec.N, 0.0), w_int(spec.N, 0.0);
    std::vector<int> z_mark(spec.N);
    std::vector<double> w_mark(spec.N), t_mark(spec.N, 0.0);
    for (int n = 0; n < spec.N; ++n) {
        z_mark[n] = st.z(n);
        w_mark[n] = st.queues[n].workload;
    }
    auto settle = [&](int n, double t) {
        double dt = t - t_mark[n];
        if (dt <= 0) return;
        z_int[n] += (double)z_mark[n] * dt;
        if (z_mark[n] > 0) w_int[n] += w_mark[n] * dt - 0.5 * dt * dt;
    };

    double next_grid = hooks.grid_dt > 0 ? hooks.grid_dt : kInf;
    while (true) {
        NextEvent ev = next_event(st, spec);
        double stop = std::min(ev.t, cfg.horizon);
        while (next_grid <= stop && next_grid <= cfg.horizon) {
            st.clock = next_grid;
            if (hooks.on_grid) hooks.on_grid(st, next_grid);
            next_grid += hooks.grid_dt;
        }
        if (ev.t > cfg.horizon || !std::isfinite(ev.t)) break;
        if (out.metrics.events >= cfg.event_budget)
            throw EventBudgetExceeded("event budget exhausted at t=" + std::to_string(st.clock));
        EventRecord rec = step(st, spec, cfg.record_z || cfg.keep_log);
        int n = rec.queue;
        settle(n, rec.t);
        z_mark[n] = st.z(n);
        w_mark[n] = st.queues[n].workload;
        t_mark[n] = rec.t;
        ++out.metrics.events;
        if (rec.kind == EventKind::Arrival) ++out.metrics.arrivals;
        else ++out.metrics.departures;
        if (hooks.on_event) hooks.on_event(st, rec);
        if (cfg.keep_log) out.log.push_back(rec);
    }
    st.clock = cfg.horizon;
    out.metrics.horizon = cfg.horizon;
    double total_w = 0;
    for (int n = 0; n < spec.N; ++n) {
        settle(n, cfg.horizon);
        out.metrics.mean_z[n] = cfg.horizon > 0 ? z_int[n] / cfg.horizon : 0.0;
        out.metrics.mean_workload[n] = cfg.horizon > 0 ? w_int[n] / cfg.horizon : 0.0;
        out.metrics.mean_total_workload += out.metrics.mean_workload[n];
        detail::sync_queue(st, spec, n);
        total_w += st.queues[n].workload;
    }
    out.metrics.final_total_workload = total_w;
    return out;
}

}  // namespace jsqlab
