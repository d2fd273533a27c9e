#pragma once

#include <cmath>
#include <vector>

#include "logsol/errors.hpp"
#include "logsol/grid.hpp"

namespace logsol {

struct Observables {
    double mass = 0;
    double energy = 0;
    Vec momentum{0.0, 0.0};
    double variance = 0;
    double h1 = 0;
};

/// Mass, energy, momentum, variance and H^1 norm of u for the focusing power p.
inline Observables observables(const ComplexField& u, double p) {
    const Grid& g = u.grid;
    const int N = g.N();
    const double dV = g.cell_volume();
    Observables ob;
    double pot = 0;
    for (std::size_t n = 0; n < u.size(); ++n) {
        double a2 = std::norm(u.values[n]);
        ob.mass += a2;
        pot += std::pow(a2, 0.5 * (p + 1));
        Vec x = g.point(n);
        ob.variance += dot(x, x) * a2;
    }
    ob.mass *= dV;
    pot *= dV;
    ob.variance *= dV;

    std::vector<cplx> uh = u.values;
    fft_forward(g, uh);
    double kin = 0;
    Vec mom{0.0, 0.0};
    const double norm = dV / static_cast<double>(uh.size());
    for (std::size_t n = 0; n < uh.size(); ++n) {
        double w = std::norm(uh[n]);
        kin += g.k2()[n] * w;
        if (g.d() == 1) {
            mom[0] += g.k_odd(static_cast<int>(n)) * w;
        } else {
            mom[0] += g.k_odd(static_cast<int>(n / N)) * w;
            mom[1] += g.k_odd(static_cast<int>(n % N)) * w;
        }
    }
    kin *= norm;
    ob.momentum = norm * mom;
    ob.energy = 0.5 * kin - pot / (p + 1);
    ob.h1 = std::sqrt(ob.mass + kin);
    return ob;
}

struct PropagateOptions {
    int order = 2;               // 2: Strang; 4: triple-jump composition of Strang steps
    double blowup_factor = 1e3;  // Overflow when sup|u| exceeds this multiple of sup|u_0|
};

namespace detail {

inline void nonlinear_phase(std::vector<cplx>& v, double tau, double p, double guard) {
    for (auto& x : v) {
        double a = std::abs(x);
        if (!(a <= guard)) throw Overflow("sup-norm exceeded blow-up guard");
        x *= std::polar(1.0, tau * std::pow(a, p - 1));
    }
}

inline void linear_step(const Grid& g, std::vector<cplx>& v, double tau) {
    fft_forward(g, v);
    const auto& k2 = g.k2();
    for (std::size_t n = 0; n < v.size(); ++n) v[n] *= std::polar(1.0, -tau * k2[n]);
    fft_inverse(g, v);
}

// One Strang step of length tau; nonlinear half-steps are not fused here.
inline void strang_step(const Grid& g, std::vector<cplx>& v, double tau, double p, double guard) {
    nonlinear_phase(v, 0.5 * tau, p, guard);
    linear_step(g, v, tau);
    nonlinear_phase(v, 0.5 * tau, p, guard);
}

}  // namespace detail

/// Split-step Fourier evolution of i u_t = -Delta u - |u|^{p-1} u over n_steps steps of dt.
inline ComplexField propagate(const ComplexField& u0, double dt, long n_steps, double p,
                              const PropagateOptions& opt = {}) {
    const Grid& g = u0.grid;
    const double sup0 = sup_norm(u0);
    if (std::abs(dt) * std::pow(sup0, p - 1) >= 1.0) throw StepTooLarge("per-step nonlinear phase >= 1");
    const double guard = opt.blowup_factor * sup0;
    ComplexField u = u0;
    auto& v = u.values;
    if (n_steps <= 0) return u;
    if (opt.order == 4) {
        const double c = std::cbrt(2.0);
        const double w1 = 1.0 / (2.0 - c), w0 = -c / (2.0 - c);
        for (long s = 0; s < n_steps; ++s) {
            detail::strang_step(g, v, w1 * dt, p, guard);
            detail::strang_step(g, v, w0 * dt, p, guard);
            detail::strang_step(g, v, w1 * dt, p, guard);
        }
        return u;
    }
    // Consecutive nonlinear half-steps commute and are fused into full steps.
    detail::nonlinear_phase(v, 0.5 * dt, p, guard);
    for (long s = 0; s < n_steps; ++s) {
        detail::linear_step(g, v, dt);
        detail::nonlinear_phase(v, s + 1 < n_steps ? dt : 0.5 * dt, p, guard);
    }
    return u;
}

/// Backward evolution by time reversal: conj, forward propagation, conj.
inline ComplexField propagate_backward(const ComplexField& u0, double dt, long n_steps, double p,
                                       const PropagateOptions& opt = {}) {
    return conj(propagate(conj(u0), std::abs(dt), n_steps, p, opt));
}

}  // namespace logsol
