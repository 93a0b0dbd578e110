#pragma once

#include <vector>

#include "jsqlab/engine.hpp"
#include "jsqlab/lyapunov.hpp"
#include "jsqlab/network.hpp"

namespace jsqlab::test {

inline NetworkSpec symmetric_meanfield(int n, double rho, int d,
                                       Distribution service = Distribution::exponential(1.0),
                                       DisciplineKind disc = DisciplineKind::Fifo) {
    NetworkSpec spec;
    spec.N = n;
    spec.K = 1;
    double alpha = rho * n / service.mean();
    spec.interarrival = {Distribution::exponential(alpha)};
    spec.selection = {SelectionRule{MeanFieldChoose{d}}};
    spec.service = ClassIndependent{std::vector<Distribution>((std::size_t)n, service)};
    spec.discipline = disc;
    spec.assignment = d == 1 ? AssignmentKind::RandomD1 : AssignmentKind::Jsq;
    spec.validate();
    return spec;
}

// a random explicit subcritical spec with N <= 4, K <= 2
inline NetworkSpec random_small_spec(RngStream& rng, bool discrete_services = false,
                                     bool station_independent = false) {
    NetworkSpec spec;
    spec.N = 1 + (int)rng.below(4);
    spec.K = 1 + (int)rng.below(2);
    for (int k = 0; k < spec.K; ++k) {
        spec.interarrival.push_back(Distribution::exponential(0.3 + rng.u01()));
        ExplicitRule rule;
        int sets = 1 + (int)rng.below(3);
        std::vector<double> w(sets);
        double total = 0;
        for (int s = 0; s < sets; ++s) total += (w[s] = 0.1 + rng.u01());
        for (int s = 0; s < sets; ++s) {
            QueueSet set;
            for (int n = 0; n < spec.N; ++n)
                if (rng.u01() < 0.5) set.push_back(n);
            if (set.empty()) set.push_back((int)rng.below(spec.N));
            double p = w[s] / total;
            bool merged = false;
            for (auto& [s2, p2] : rule.sets)
                if (s2 == set) {
                    p2 += p;
                    merged = true;
                }
            if (!merged) rule.sets.emplace_back(set, p);
        }
        // exact unit mass
        double acc = 0;
        for (auto& [s2, p2] : rule.sets) acc += p2;
        rule.sets.back().second += 1.0 - acc;
        spec.selection.push_back(SelectionRule{std::move(rule)});
    }
    auto random_service = [&]() {
        if (discrete_services) {
            double v1 = 0.2 + rng.u01(), v2 = v1 + 0.2 + rng.u01();
            double p = 0.2 + 0.6 * rng.u01();
            return Distribution::discrete({{v1, p}, {v2, 1.0 - p}});
        }
        return Distribution::exponential(0.5 + rng.u01());
    };
    if (station_independent) {
        StationIndependent si;
        for (int k = 0; k < spec.K; ++k) si.per_stream.push_back(random_service());
        spec.service = std::move(si);
    } else {
        ClassIndependent ci;
        for (int n = 0; n < spec.N; ++n) ci.per_queue.push_back(random_service());
        spec.service = std::move(ci);
    }
    spec.validate();
    // rescale the arrival rates until comfortably subcritical
    auto ti = traffic_intensity(spec);
    double target = 0.35 + 0.5 * rng.u01();
    double scale = target / ti.rho;
    for (int k = 0; k < spec.K; ++k) {
        double alpha = spec.arrival_rate(k) * scale;
        spec.interarrival[k] = Distribution::exponential(alpha);
    }
    return spec;
}

// random effort-assigned state for a spec; efforts follow the discipline
inline StateSnapshot random_state(const NetworkSpec& spec, RngStream& rng,
                                  DisciplineKind discipline, int max_jobs_per_queue = 6) {
    StateSnapshot x;
    x.N = spec.N;
    x.K = spec.K;
    for (int n = 0; n < spec.N; ++n) {
        int z = (int)rng.below(max_jobs_per_queue + 1);
        std::vector<SnapshotJob> queue_jobs;
        double age = 4.0 + 3.0 * rng.u01();
        for (int i = 0; i < z; ++i) {
            SnapshotJob j;
            j.queue = n;
            j.stream = (int)rng.below(spec.K);
            j.selection = sample_selection(spec, j.stream, rng);
            if (!std::binary_search(j.selection.begin(), j.selection.end(), n)) {
                j.selection.push_back(n);
                std::sort(j.selection.begin(), j.selection.end());
            }
            const auto& f = spec.service_dist(j.stream, j.selection, n);
            double mu = 1.0 / f.mean();
            double v = f.sample(rng) * (0.05 + 0.95 * rng.u01());
            j.weighted_residual = std::max(1e-9, mu * v);
            age *= 0.3 + 0.65 * rng.u01();  // ranks are ordered by arrival
            j.weighted_age = mu * age;
            j.effort = 0;
            queue_jobs.push_back(std::move(j));
        }
        if (!queue_jobs.empty()) {
            switch (discipline) {
                case DisciplineKind::Fifo:
                    queue_jobs.front().effort = 1;
                    break;
                case DisciplineKind::LifoPreemptive:
                    queue_jobs.back().effort = 1;
                    break;
                case DisciplineKind::ProcessorSharing:
                    for (auto& j : queue_jobs) j.effort = 1.0 / queue_jobs.size();
                    break;
                default: {
                    std::size_t pick = rng.below(queue_jobs.size());
                    queue_jobs[pick].effort = 1;
                    break;
                }
            }
        }
        for (auto& j : queue_jobs) x.jobs.push_back(std::move(j));
    }
    x.s.resize(spec.K);
    for (int k = 0; k < spec.K; ++k)
        x.s[k] = spec.arrival_rate(k) * spec.interarrival[k].sample(rng) * (0.1 + rng.u01());
    x.validate();
    return x;
}

}  // namespace jsqlab::test
