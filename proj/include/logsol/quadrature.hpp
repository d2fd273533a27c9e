#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <cmath>
#include <cstdio>
#include <string>

#include "logsol/errors.hpp"

namespace logsol {

inline std::string fmt_sci(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

// Adaptive Gauss-Kronrod (7/15) on [a, b]; `rel_tol` is relative to the L1 norm of the
// integrand, `abs_tol` is an absolute floor below which refinement is not demanded.
template <class F>
double integrate_gk(F&& f, double a, double b, double rel_tol, double abs_tol = 0.0,
                    unsigned max_depth = 30) {
    if (a == b) return 0.0;
    double err = 0.0;
    double l1 = 0.0;
    double val = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
        f, a, b, max_depth, rel_tol, &err, &l1);
    if (!std::isfinite(val) || err > 10.0 * rel_tol * l1 + abs_tol)
        throw QuadratureFailure("error estimate " + fmt_sci(err) + " vs L1 " + fmt_sci(l1) + " on [" +
                                std::to_string(a) + ", " + std::to_string(b) + "]");
    return val;
}

}  // namespace logsol
