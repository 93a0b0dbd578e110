#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace jsqlab {

// two-sided 97.5% Student-t quantile (normal past df 120)
inline double t_quantile_975(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306,
                                   2.262,  2.228, 2.201, 2.179, 2.160, 2.145, 2.131, 2.120,
                                   2.110,  2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
                                   2.060,  2.056, 2.052, 2.048, 2.045, 2.042};
    if (df <= 0) return std::nan("");
    if (df <= 30) return table[df - 1];
    if (df <= 40) return 2.021;
    if (df <= 60) return 2.000;
    if (df <= 120) return 1.980;
    return 1.960;
}

struct Estimate {
    double value = 0;
    double ci_half = 0;  // 95% half width
    double lo() const { return value - ci_half; }
    double hi() const { return value + ci_half; }
};

inline Estimate batch_means(const std::vector<double>& batches) {
    Estimate e;
    std::size_t b = batches.size();
    if (b == 0) return e;
    double mean = 0;
    for (double v : batches) mean += v;
    mean /= (double)b;
    e.value = mean;
    if (b < 2) return e;
    double var = 0;
    for (double v : batches) var += (v - mean) * (v - mean);
    var /= (double)(b - 1);
    e.ci_half = t_quantile_975((int)b - 1) * std::sqrt(var / (double)b);
    return e;
}

inline Estimate sample_mean(const std::vector<double>& xs) { return batch_means(xs); }

struct WilsonInterval {
    double p = 0, lo = 0, hi = 0;
};

inline WilsonInterval wilson(long successes, long trials, double z = 1.959963984540054) {
    WilsonInterval w;
    if (trials <= 0) return w;
    double n = (double)trials;
    double phat = (double)successes / n;
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double center = (phat + z2 / (2 * n)) / denom;
    double half = z * std::sqrt(phat * (1 - phat) / n + z2 / (4 * n * n)) / denom;
    w.p = phat;
    w.lo = std::max(0.0, center - half);
    w.hi = std::min(1.0, center + half);
    return w;
}

// least-squares slope and its standard error
struct TrendFit {
    double slope = 0;
    double stderr_slope = 0;
};

inline TrendFit linear_trend(const std::vector<double>& ys) {
    TrendFit fit;
    std::size_t n = ys.size();
    if (n < 3) return fit;
    double xbar = (n - 1) / 2.0, ybar = 0;
    for (double y : ys) ybar += y;
    ybar /= (double)n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = (double)i - xbar;
        sxx += dx * dx;
        sxy += dx * (ys[i] - ybar);
    }
    fit.slope = sxy / sxx;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = ybar + fit.slope * ((double)i - xbar);
        ss_res += (ys[i] - pred) * (ys[i] - pred);
    }
    double sigma2 = ss_res / (double)(n - 2);
    fit.stderr_slope = std::sqrt(sigma2 / sxx);
    return fit;
}

// splits the value of a constant segment [a,b) across equal-width time bins
template <typename Acc>
inline void spread_over_bins(double a, double b, double bins_start, double bin_len, int bins,
                             Acc&& add) {
    if (b <= a || bin_len <= 0) return;
    int i0 = (int)std::floor((a - bins_start) / bin_len);
    int i1 = (int)std::floor((b - bins_start) / bin_len - 1e-12);
    for (int i = std::max(0, i0); i <= std::min(bins - 1, i1); ++i) {
        double lo = bins_start + i * bin_len;
        double hi = lo + bin_len;
        double overlap = std::min(b, hi) - std::max(a, lo);
        if (overlap > 0) add(i, overlap);
    }
}

}  // namespace jsqlab
