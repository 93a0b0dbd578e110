#pragma once

#include <cmath>
#include <cstddef>
#include <functional>

namespace jsqlab {

// Adaptive Gauss-Kronrod 15(7) panels.  Tolerances are relative with a small
// absolute floor; tail integrals over [a, inf) proceed by doubling segments
// until two consecutive segments are negligible against the accumulated mass.

namespace gk {

// 15-point Kronrod nodes/weights on [-1,1] and the embedded 7-point Gauss weights.
inline constexpr double nodes[15] = {
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144838258730, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245,  0.405845151377397166906606412076961,
    0.586087235467691130294144838258730,  0.741531185599394439863864773280788,
    0.864864423359769072789712788640926,  0.949107912342758524526189684047851,
    0.991455371120812639206854697526329};

inline constexpr double kronrod_w[15] = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970};

inline constexpr double gauss_w[7] = {
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
    0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
    0.129484966168869693270611432679082};

struct Panel {
    double value;
    double error;
};

template <typename F>
Panel panel(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    double k = 0, g = 0;
    for (int i = 0; i < 15; ++i) {
        double fv = f(c + h * nodes[i]);
        k += kronrod_w[i] * fv;
        if (i % 2 == 1) g += gauss_w[i / 2] * fv;
    }
    return {k * h, std::abs((k - g) * h)};
}

}  // namespace gk

template <typename F>
double integrate(const F& f, double a, double b, double rel_tol = 1e-10,
                 double abs_floor = 1e-300, int max_depth = 48) {
    if (!(b > a)) return 0.0;
    struct Seg {
        double a, b;
        int depth;
    };
    // crude first estimate for the relative-tolerance scale
    double scale = std::abs(gk::panel(f, a, b).value);
    double total = 0.0;
    Seg stack[2048];
    int top = 0;
    stack[top++] = {a, b, 0};
    while (top > 0) {
        Seg s = stack[--top];
        auto p = gk::panel(f, s.a, s.b);
        double tol = std::max(abs_floor, rel_tol * std::max(scale, std::abs(total)));
        if (p.error <= tol * std::max(1e-6, (s.b - s.a) / (b - a)) || s.depth >= max_depth ||
            top > 2000) {
            total += p.value;
        } else {
            double m = 0.5 * (s.a + s.b);
            stack[top++] = {s.a, m, s.depth + 1};
            stack[top++] = {m, s.b, s.depth + 1};
        }
    }
    return total;
}

// integral over [a, inf); `scale` sets the first segment length
template <typename F>
double integrate_upper(const F& f, double a, double scale, double rel_tol = 1e-10) {
    if (scale <= 0 || !std::isfinite(scale)) scale = 1.0;
    double total = 0.0;
    double lo = a;
    double len = scale;
    int quiet = 0;
    bool seen_mass = false;
    for (int seg = 0; seg < 256; ++seg) {
        double hi = lo + len;
        double piece = integrate(f, lo, hi, rel_tol);
        total += piece;
        if (std::abs(piece) > rel_tol * std::max(1.0e-300, std::abs(total))) {
            seen_mass = true;
            quiet = 0;
        } else if (seen_mass || seg > 64) {
            if (++quiet >= 2) break;
        }
        lo = hi;
        len *= 2.0;
    }
    return total;
}

}  // namespace jsqlab
