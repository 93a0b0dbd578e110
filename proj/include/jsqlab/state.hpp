#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "jsqlab/network.hpp"

namespace jsqlab {

// One job of a state snapshot.  Ages and residuals are weighted by the job's
// service rate; efforts at a nonempty queue sum to 1.
struct SnapshotJob {
    int queue = 0;
    int stream = 0;
    QueueSet selection;
    double weighted_age = 0;       // mu_j * o
    double weighted_residual = 0;  // mu_j * v, > 0
    double effort = 0;             // r in [0,1]
};

// A point of the state space: per-job tuples plus the weighted residual
// interarrival times.  Jobs of the same queue appear in rank order.
struct StateSnapshot {
    int N = 0;
    int K = 0;
    std::vector<SnapshotJob> jobs;
    std::vector<double> s;  // alpha_k * u_k, per stream

    std::vector<int> z() const {
        std::vector<int> out(N, 0);
        for (auto& j : jobs) ++out[j.queue];
        return out;
    }

    std::vector<std::vector<int>> jobs_by_queue() const {
        std::vector<std::vector<int>> out(N);
        for (int i = 0; i < (int)jobs.size(); ++i) out[jobs[i].queue].push_back(i);
        return out;
    }

    void validate() const {
        if ((int)s.size() != K) throw std::invalid_argument("snapshot: s must have K entries");
        for (double v : s)
            if (!(v > 0)) throw std::invalid_argument("snapshot: weighted interarrivals must be > 0");
        std::vector<double> effort(N, 0.0);
        std::vector<int> count(N, 0);
        for (auto& j : jobs) {
            if (j.queue < 0 || j.queue >= N) throw std::invalid_argument("snapshot: queue index");
            if (!(j.weighted_residual > 0))
                throw std::invalid_argument("snapshot: weighted residuals must be > 0");
            if (j.effort < -1e-12 || j.effort > 1 + 1e-12)
                throw std::invalid_argument("snapshot: effort out of [0,1]");
            effort[j.queue] += j.effort;
            ++count[j.queue];
        }
        for (int n = 0; n < N; ++n)
            if (count[n] > 0 && std::abs(effort[n] - 1.0) > 1e-12)
                throw std::invalid_argument("snapshot: efforts at a nonempty queue must sum to 1");
    }
};

// projection onto the first Nprime queues; stream coordinates are all kept
inline StateSnapshot project(const StateSnapshot& x, int n_prime) {
    if (n_prime < 1 || n_prime > x.N) throw std::invalid_argument("projection range");
    StateSnapshot out;
    out.N = n_prime;
    out.K = x.K;
    out.s = x.s;
    for (auto& j : x.jobs)
        if (j.queue < n_prime) out.jobs.push_back(j);
    return out;
}

// the local norm |x|_n: job count plus maximum weighted age plus weighted workload
inline double local_norm(const StateSnapshot& x, int n) {
    double z = 0, age = 0, work = 0;
    for (auto& j : x.jobs)
        if (j.queue == n) {
            z += 1;
            age = std::max(age, j.weighted_age);
            work += j.weighted_residual;
        }
    return z + age + work;
}

// metric on the state space: capped per-job discrepancies, class/selection-set
// mismatch indicators, job-count gaps, interarrival gaps
inline double metric_distance(const StateSnapshot& a, const StateSnapshot& b) {
    if (a.N != b.N || a.K != b.K) throw std::invalid_argument("metric: dimension mismatch");
    auto qa = a.jobs_by_queue(), qb = b.jobs_by_queue();
    double d = 0;
    for (int n = 0; n < a.N; ++n) {
        std::size_t za = qa[n].size(), zb = qb[n].size();
        std::size_t common = std::min(za, zb);
        for (std::size_t i = 0; i < std::max(za, zb); ++i) {
            if (i < common) {
                const auto& ja = a.jobs[qa[n][i]];
                const auto& jb = b.jobs[qb[n][i]];
                d += std::min(1.0, std::abs(ja.weighted_age - jb.weighted_age) +
                                       std::abs(ja.weighted_residual - jb.weighted_residual) +
                                       std::abs(ja.effort - jb.effort));
                d += (ja.stream != jb.stream) + (ja.selection != jb.selection);
            } else {
                // unmatched job against the zero 7-tuple
                const auto& j = i < za ? a.jobs[qa[n][i]] : b.jobs[qb[n][i]];
                d += std::min(1.0, j.weighted_age + j.weighted_residual + j.effort);
                d += 2;  // stream and selection-set indicators both differ
            }
        }
        d += std::abs((double)za - (double)zb);
    }
    for (int k = 0; k < a.K; ++k) d += std::abs(a.s[k] - b.s[k]);
    return d;
}

}  // namespace jsqlab
