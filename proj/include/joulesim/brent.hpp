#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "joulesim/errors.hpp"

namespace joulesim {

/// Brent's method: root of f on [lo, hi] with f(lo), f(hi) of opposite sign.
/// Combines bisection, secant and inverse quadratic interpolation; converges
/// for any continuous f on the bracket. Returns x once the bracket width
/// falls below tol (plus machine precision slack).
template <class F>
double brent_root(F&& f, double lo, double hi, double tol, int max_iter = 200) {
    if (!(tol > 0.0)) throw std::domain_error("brent_root: tol must be positive");
    double a = lo, b = hi;
    double fa = f(a), fb = f(b);
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0))
        throw numerical_error("brent_root: no sign change on [" +
                              std::to_string(lo) + ", " + std::to_string(hi) +
                              "]");
    double c = a, fc = fa;
    double d = b - a, e = d;
    const double eps = std::numeric_limits<double>::epsilon();

    for (int iter = 0; iter < max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        double tol1 = 2.0 * eps * std::abs(b) + 0.5 * tol;
        double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || fb == 0.0) return b;

        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double s = fb / fa;
            double p, q;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                double q0 = fa / fc, r = fb / fc;
                p = s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0));
                q = (q0 - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q),
                                   std::abs(e * q))) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if (std::abs(d) > tol1)
            b += d;
        else
            b += (xm > 0.0 ? tol1 : -tol1);
        fb = f(b);
    }
    throw numerical_error("brent_root: no convergence within iteration limit");
}

} // namespace joulesim
