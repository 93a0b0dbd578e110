#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <utility>
#include <vector>

#include "jsqlab/distributions.hpp"

namespace jsqlab {

// Convex piecewise-linear weight function with dyadically growing slopes.
//
// The function is zero at `origin` and climbs with slope `init_slope` until
// the first ladder knot; the slope then gains 2^j at knot j, so it diverges.
// Knot j is placed where the worst weighted tail first moment
//    max_i  weight_i * tail_first_moment(F_i, y / weight_i)
// drops below exp(budget_log0 - j * budget_step), which is what makes the
// integral bounds of the construction hold.  An optional affine head with
// slope -1 covers [0, origin) (used by the interarrival weight function).
//
// Knot positions are a pure function of the index, so the slope staircase can
// be inverted at targets far beyond anything worth materializing; evaluation
// materializes knots on demand, under a lock, up to a fixed index cap.
class PsiLadder {
  public:
    PsiLadder() = default;

    PsiLadder(double origin, bool affine_head, double init_slope, double budget_log0,
              double budget_step, std::vector<std::pair<Distribution, double>> tails)
        : origin_(origin),
          affine_head_(affine_head),
          init_slope_(init_slope),
          budget_log0_(budget_log0),
          budget_step_(budget_step),
          tails_(std::move(tails)),
          knots_(cap_ + 1, 0.0),
          values_(cap_ + 1, 0.0) {}

    PsiLadder(const PsiLadder&) = delete;
    PsiLadder& operator=(const PsiLadder&) = delete;

    double origin() const { return origin_; }
    double init_slope() const { return init_slope_; }

    // max_i log( weight_i * tail_first_moment(F_i, y / weight_i) )
    double log_tail_max(double y) const {
        double worst = -kInf;
        for (auto& [d, w] : tails_)
            worst = std::max(worst, std::log(w) + d.log_tail_first_moment(y / w));
        return worst;
    }

    // smallest y >= max(1, origin) with log_tail_max(y) <= log_budget
    double tail_point(double log_budget) const {
        double lo = std::max(1.0, origin_);
        if (log_tail_max(lo) <= log_budget) return lo;
        double hi = lo;
        bool found = false;
        for (int it = 0; it < 2400; ++it) {
            hi *= 2.0;
            if (!std::isfinite(hi)) return kInf;
            if (log_tail_max(hi) <= log_budget) {
                found = true;
                break;
            }
            lo = hi;
        }
        if (!found) return kInf;
        for (int it = 0; it < 200; ++it) {
            double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (log_tail_max(mid) <= log_budget) hi = mid;
            else lo = mid;
        }
        return hi;
    }

    // absolute knot positions, strictly increasing in j
    double knot_position(long j) const {
        double base = tail_point(budget_log0_ - (double)j * budget_step_);
        if (!std::isfinite(base)) return kInf;
        base = std::max(base, origin_);
        return base * (1.0 + (double)j * 1e-12) + (double)j * 1e-9;
    }

    // slope on [knot_j, knot_{j+1}); index -1 names the initial segment
    double slope_after(long j) const {
        if (j < 0) return init_slope_;
        if (j > 1020) return kInf;
        return init_slope_ + std::ldexp(1.0, (int)j + 1) - 1.0;
    }

    double eval(double y) const {
        if (y < origin_) return affine_head_ ? origin_ - y : 0.0;
        long m = ensure_cover(y);
        if (m == 0 || y < knots_[0]) return init_slope_ * (y - origin_);
        long j = segment_index(y, m);
        if (j + 1 == m && y > knots_[m - 1] && m > cap_) return kInf;
        return values_[j] + slope_after(j) * (y - knots_[j]);
    }

    double deriv_right(double y) const {
        if (y < origin_) return affine_head_ ? -1.0 : init_slope_;
        long m = ensure_cover(y);
        if (m == 0 || y < knots_[0]) return init_slope_;
        long j = segment_index(y, m);
        if (j + 1 == m && y > knots_[m - 1] && m > cap_) return kInf;
        return slope_after(j);
    }

    double deriv_left(double y) const {
        if (y <= origin_) return affine_head_ ? -1.0 : init_slope_;
        long m = ensure_cover(y);
        if (m == 0 || y <= knots_[0]) return init_slope_;
        long j = segment_index(y, m);
        if (y == knots_[j]) return slope_after(j - 1);
        if (j + 1 == m && y > knots_[m - 1] && m > cap_) return kInf;
        return slope_after(j);
    }

    // first y whose right slope reaches `target`
    double first_arg_slope_ge(double target) const {
        if (target <= init_slope_) return origin_;
        long j = ladder_index(std::log(target - init_slope_ + 1.0));
        return knot_position(j);
    }

    // same, for a log-domain target (log of the required slope)
    double first_arg_slope_ge_log(double log_target) const {
        if (!std::isfinite(log_target)) return log_target > 0 ? kInf : origin_;
        if (log_target < 700.0) return first_arg_slope_ge(std::exp(log_target));
        double idx = log_target / 0.6931471805599453 - 1.0;
        if (idx >= 9.0e15) return kInf;
        return knot_position((long)std::ceil(idx - 1e-9));
    }

  private:
    // smallest j with init + 2^{j+1} - 1 >= init + exp(log_excess_plus1) - 1
    long ladder_index(double log_excess_plus1) const {
        double idx = log_excess_plus1 / 0.6931471805599453 - 1.0;
        long j = (long)std::ceil(idx - 1e-12);
        return j < 0 ? 0 : j;
    }

    // Publication scheme: slots below `count_` are immutable; growth happens
    // under the mutex and is published with a release store, so readers on
    // the covered fast path never lock.
    long ensure_cover(double y) const {
        long m = count_.load(std::memory_order_acquire);
        if (m > 0 && (knots_[m - 1] >= y || m > cap_)) return m;
        std::lock_guard<std::mutex> lock(mu_);
        m = count_.load(std::memory_order_relaxed);
        while ((m == 0 || knots_[m - 1] < y) && m <= cap_) {
            double pos = knot_position(m);
            double val = m == 0 ? init_slope_ * (pos - origin_)
                                : values_[m - 1] + slope_after(m - 1) * (pos - knots_[m - 1]);
            knots_[m] = pos;
            values_[m] = val;
            ++m;
            count_.store(m, std::memory_order_release);
            if (!std::isfinite(pos)) break;
        }
        return m;
    }

    long segment_index(double y, long m) const {
        auto it = std::upper_bound(knots_.begin(), knots_.begin() + m, y);
        return std::max<long>(0, (long)(it - knots_.begin()) - 1);
    }

    double origin_ = 0;
    bool affine_head_ = false;
    double init_slope_ = 1;
    double budget_log0_ = 0;
    double budget_step_ = 2 * 0.6931471805599453;
    std::vector<std::pair<Distribution, double>> tails_;
    long cap_ = 900;
    mutable std::mutex mu_;
    mutable std::atomic<long> count_{0};
    mutable std::vector<double> knots_;
    mutable std::vector<double> values_;
};

}  // namespace jsqlab
