#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "logsol/errors.hpp"
#include "logsol/grid.hpp"
#include "logsol/groundstate.hpp"
#include "logsol/quadrature.hpp"

namespace logsol {

/// Symmetric two-bubble parameters: z_1 = -z_2 = z/2, v_1 = -v_2 = v/2.
struct BubbleParams {
    double lambda = 1.0;
    Vec z{0.0, 0.0};
    double gamma = 0.0;
    Vec v{0.0, 0.0};

    Vec z_k(int k) const { return (k == 1 ? 0.5 : -0.5) * z; }
    Vec v_k(int k) const { return (k == 1 ? 0.5 : -0.5) * v; }
};

/// Time derivatives (in s) supplied by the caller; lambda_rate is lambda'/lambda.
struct ParamRates {
    double lambda_rate = 0.0;
    Vec zdot{0.0, 0.0};
    double gammadot = 0.0;
    Vec vdot{0.0, 0.0};
};

struct ModulationVector {
    double m_scale = 0;
    Vec m_translation{0.0, 0.0};
    double m_phase = 0;
    Vec m_velocity{0.0, 0.0};
};

inline ModulationVector modulation_vector(const BubbleParams& q, const ParamRates& r, int k) {
    const double sgn = k == 1 ? 0.5 : -0.5;
    const Vec zk = q.z_k(k), vk = q.v_k(k);
    const Vec zkdot = sgn * r.zdot, vkdot = sgn * r.vdot;
    ModulationVector m;
    m.m_scale = r.lambda_rate;
    m.m_translation = zkdot - 2.0 * vk + r.lambda_rate * zk;
    m.m_phase = r.gammadot - 1.0 + dot(vk, vk) - r.lambda_rate * dot(vk, zk) - dot(vk, zkdot);
    m.m_velocity = vkdot - r.lambda_rate * vk;
    return m;
}

/// Rates for which both modulation vectors vanish at the given parameters.
inline ParamRates exact_flow_rates(const BubbleParams& q) {
    ParamRates r;
    r.zdot = 2.0 * q.v;
    const Vec v1 = q.v_k(1);
    r.gammadot = 1.0 - dot(v1, v1) + dot(v1, 0.5 * r.zdot);
    return r;
}

/// |u|^{p-1} u, with the value 0 at u = 0.
inline cplx power_nl(cplx u, double p) {
    double a = std::abs(u);
    return a == 0.0 ? cplx(0.0, 0.0) : std::pow(a, p - 1) * u;
}

namespace detail {

inline void check_grid_room(const BubbleParams& q, const Grid& g) {
    if (q.lambda * (0.5 * norm(q.z) + 10.0) >= g.L())
        throw GridTooSmall("lambda (|z|/2 + 10) = " + std::to_string(q.lambda * (0.5 * norm(q.z) + 10.0)) +
                           " >= L = " + std::to_string(g.L()));
}

inline cplx bubble_at(const GroundState& gs, const Vec& y, const Vec& zk, const Vec& vk) {
    Vec yk = y - zk;
    return std::polar(gs.value(norm(yk)), dot(vk, yk));
}

}  // namespace detail

/// P(y) = sum_k e^{i v_k.(y - z_k)} Q(y - z_k) sampled with grid points read as rescaled coordinates.
inline ComplexField two_bubble_profile(const BubbleParams& q, const GroundState& gs, const Grid& g) {
    detail::check_grid_room(BubbleParams{1.0, q.z, 0.0, q.v}, g);
    const Vec z1 = q.z_k(1), z2 = q.z_k(2), v1 = q.v_k(1), v2 = q.v_k(2);
    return ComplexField::sample(g, [&](const Vec& y) {
        return detail::bubble_at(gs, y, z1, v1) + detail::bubble_at(gs, y, z2, v2);
    });
}

/// Lab-frame field u(x) = e^{i gamma} lambda^{-2/(p-1)} P(x / lambda).
inline ComplexField build_two_bubble(const BubbleParams& q, const GroundState& gs, const Grid& g) {
    detail::check_grid_room(q, g);
    const Vec z1 = q.z_k(1), z2 = q.z_k(2), v1 = q.v_k(1), v2 = q.v_k(2);
    const cplx pre = std::polar(std::pow(q.lambda, -2.0 / (gs.p() - 1)), q.gamma);
    return ComplexField::sample(g, [&](const Vec& x) {
        Vec y = (1.0 / q.lambda) * x;
        return pre * (detail::bubble_at(gs, y, z1, v1) + detail::bubble_at(gs, y, z2, v2));
    });
}

/// G = |P|^{p-1}P - |P_1|^{p-1}P_1 - |P_2|^{p-1}P_2 in the rescaled frame.
inline ComplexField interaction_G(const BubbleParams& q, const GroundState& gs, const Grid& g) {
    detail::check_grid_room(BubbleParams{1.0, q.z, 0.0, q.v}, g);
    const double p = gs.p();
    const Vec z1 = q.z_k(1), z2 = q.z_k(2), v1 = q.v_k(1), v2 = q.v_k(2);
    return ComplexField::sample(g, [&](const Vec& y) {
        cplx a = detail::bubble_at(gs, y, z1, v1), b = detail::bubble_at(gs, y, z2, v2);
        return power_nl(a + b, p) - power_nl(a, p) - power_nl(b, p);
    });
}

/// Interaction force: two half-space integrals split at y.zhat = -|z|/2, evaluated in
/// coordinates rotated so that z is along e_1.
inline Vec interaction_force_H(const Vec& z, const GroundState& gs, double quad_tol = 1e-11) {
    const double a = norm(z);
    if (a < 5.0) throw CollisionDetected("|z| = " + std::to_string(a) + " < 5");
    const double p = gs.p();
    const int d = gs.d();
    const Vec zhat = unit_or_e1(z);
    const double far = gs.r_max() + 30.0;
    double h1 = 0;
    if (d == 1) {
        auto dQ = [&](double y) { return y == 0.0 ? 0.0 : (y > 0 ? 1.0 : -1.0) * gs.deriv(std::abs(y)); };
        auto first = [&](double y) { return std::pow(gs.value(y), p - 1) * dQ(y) * gs.value(y + a); };
        auto second = [&](double y) { return std::pow(gs.value(y + a), p - 1) * dQ(y) * gs.value(y); };
        h1 = integrate_gk(first, -a / 2, 0.0, quad_tol, 1e-300) + integrate_gk(first, 0.0, far, quad_tol, 1e-300) +
             integrate_gk(second, -a / 2 - far, -a, quad_tol, 1e-300) +
             integrate_gk(second, -a, -a / 2, quad_tol, 1e-300);
    } else {
        // Transverse variable integrated over [0, far] and doubled (integrands even in y_2).
        auto inner = [&](double y1, bool first) {
            return 2.0 * integrate_gk(
                             [&](double y2) {
                                 double r = std::hypot(y1, y2);
                                 double rs = std::hypot(y1 + a, y2);
                                 double d1Q = r > 0 ? gs.deriv(r) * y1 / r : 0.0;
                                 if (first) return std::pow(gs.value(r), p - 1) * d1Q * gs.value(rs);
                                 return std::pow(gs.value(rs), p - 1) * d1Q * gs.value(r);
                             },
                             0.0, far, quad_tol, 1e-300);
        };
        auto first = [&](double y1) { return inner(y1, true); };
        auto second = [&](double y1) { return inner(y1, false); };
        h1 = integrate_gk(first, -a / 2, 0.0, quad_tol, 1e-300) + integrate_gk(first, 0.0, far, quad_tol, 1e-300) +
             integrate_gk(second, -a / 2 - far, -a, quad_tol, 1e-300) +
             integrate_gk(second, -a, -a / 2, quad_tol, 1e-300);
    }
    return (p * h1) * zhat;
}

/// Leading-order law C_p zhat |z|^{-(d-1)/2} e^{-|z|}.
inline Vec interaction_force_asymptotic(const Vec& z, double C_p, int d) {
    const double a = norm(z);
    return (C_p * std::pow(a, -0.5 * (d - 1)) * std::exp(-a)) * unit_or_e1(z);
}

/// Flow residual assembled from the modulation vectors and G.
inline ComplexField ansatz_residual(const BubbleParams& q, const ParamRates& rates, const GroundState& gs,
                                    const Grid& g) {
    ComplexField E = interaction_G(q, gs, g);
    const double alpha = 2.0 / (gs.p() - 1);
    const int d = gs.d();
    for (int k = 1; k <= 2; ++k) {
        const ModulationVector m = modulation_vector(q, rates, k);
        const Vec zk = q.z_k(k), vk = q.v_k(k);
        for (std::size_t n = 0; n < g.size(); ++n) {
            Vec yk = g.point(n) - zk;
            double r = norm(yk);
            RadialValue Q = gs.eval(r);
            Vec gradQ = r > 0 ? (Q.dq / r) * yk : Vec{0.0, 0.0};
            if (d == 1) gradQ[1] = 0.0;
            double LQ = alpha * Q.q + dot(yk, gradQ);
            const cplx I(0.0, 1.0);
            cplx mq = m.m_scale * (-I * LQ) + dot(m.m_translation, gradQ) * (-I) - m.m_phase * Q.q -
                      dot(m.m_velocity, yk) * Q.q;
            E.values[n] += std::polar(1.0, dot(vk, yk)) * mq;
        }
    }
    return E;
}

/// Flow residual evaluated directly: i dP/ds + Delta P - P + |P|^{p-1}P - i (lambda'/lambda) Lambda P
/// + (1 - gamma') P, with spectral derivatives and a fourth-order difference in s.
inline ComplexField ansatz_residual_direct(const BubbleParams& q, const ParamRates& rates, const GroundState& gs,
                                           const Grid& g, double ds = 1e-3) {
    const double p = gs.p();
    const double alpha = 2.0 / (p - 1);
    auto at = [&](double tau) {
        BubbleParams b = q;
        b.z = q.z + tau * rates.zdot;
        b.v = q.v + tau * rates.vdot;
        return two_bubble_profile(b, gs, g);
    };
    ComplexField P = two_bubble_profile(q, gs, g);
    ComplexField Pp1 = at(ds), Pm1 = at(-ds), Pp2 = at(2 * ds), Pm2 = at(-2 * ds);
    ComplexField lap = laplacian(P);
    ComplexField dP0 = partial(P, 0);
    ComplexField dP1 = g.d() == 2 ? partial(P, 1) : ComplexField(g);
    ComplexField E(g);
    const cplx I(0.0, 1.0);
    for (std::size_t n = 0; n < g.size(); ++n) {
        cplx Pdot = (8.0 * (Pp1[n] - Pm1[n]) - (Pp2[n] - Pm2[n])) / (12.0 * ds);
        Vec y = g.point(n);
        cplx LP = alpha * P[n] + y[0] * dP0[n] + (g.d() == 2 ? y[1] * dP1[n] : cplx(0.0, 0.0));
        E[n] = I * Pdot + lap[n] - P[n] + power_nl(P[n], p) - I * rates.lambda_rate * LP +
               (1.0 - rates.gammadot) * P[n];
    }
    return E;
}

struct RefinedCorrection {
    int j = 0;
    ComplexField field;   // R_j
    ComplexField source;  // A~_j, so that (1 - Delta) R_j = A~_j
    double sup_norm = 0;
    double h1_norm = 0;
};

/// Smallest J >= 0 with p > (J + 3) / (J + 2).
inline int refined_iteration_count(double p) {
    if (!(p > 1.0) || p > 2.0) throw InvalidExponent("refined corrections need 1 < p <= 2");
    int J = 0;
    while (!(p > (J + 3.0) / (J + 2.0))) ++J;
    return J;
}

/// Quintic smoothstep: 0 on (-inf, -1], 1 on [0, inf).
inline double smoothstep_cutoff(double t) {
    if (t <= -1.0) return 0.0;
    if (t >= 0.0) return 1.0;
    double x = t + 1.0;
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x);
}

/// Removes from f its components along the translation modes grad Q centered at +-z/2.
inline ComplexField remove_translation_modes(const ComplexField& f, const Vec& z, const GroundState& gs,
                                             double grad_norm2_per_component) {
    const Grid& g = f.grid;
    ComplexField out = f;
    for (int i = 1; i <= 2; ++i) {
        const Vec c = (i == 1 ? 0.5 : -0.5) * z;
        for (int j = 0; j < g.d(); ++j) {
            ComplexField mode = ComplexField::sample(g, [&](const Vec& y) {
                Vec yc = y - c;
                double r = norm(yc);
                return cplx(r > 0 ? gs.deriv(r) * yc[j] / r : 0.0, 0.0);
            });
            double coef = inner(f, mode) / grad_norm2_per_component;
            for (std::size_t n = 0; n < g.size(); ++n) out.values[n] -= coef * mode.values[n];
        }
    }
    return out;
}

/// Corrections R_0..R_J = (1 - Delta)^{-1} A~_j for 1 < p <= 2.
inline std::vector<RefinedCorrection> refined_corrections(const BubbleParams& q, const GroundState& gs,
                                                          const Grid& g) {
    const double p = gs.p();
    const int J = refined_iteration_count(p);
    detail::check_grid_room(BubbleParams{1.0, q.z, 0.0, q.v}, g);
    const int d = gs.d();
    const double grad2 =
        sphere_area(d) *
        integrate_gk([&](double r) { double dq = gs.deriv(r); return dq * dq * std::pow(r, d - 1); }, 0.0,
                     gs.r_max() + 20.0, 1e-10, 1e-300) /
        d;
    const double zn = norm(q.z);
    const Vec zh = 0.5 * q.z;
    ComplexField P = two_bubble_profile(q, gs, g);
    ComplexField A = interaction_G(q, gs, g);
    for (std::size_t n = 0; n < g.size(); ++n) {
        Vec y = g.point(n);
        A.values[n] *= smoothstep_cutoff(zn - norm(y + zh)) * smoothstep_cutoff(zn - norm(y - zh));
    }
    std::vector<RefinedCorrection> out;
    ComplexField partial_sum(g);  // sum_{k<j} R_k
    ComplexField prev_sum(g);     // sum_{k<j-1} R_k
    for (int j = 0; j <= J; ++j) {
        if (j > 0) {
            A = ComplexField(g);
            for (std::size_t n = 0; n < g.size(); ++n)
                A.values[n] = power_nl(P[n] + partial_sum[n], p) - power_nl(P[n] + prev_sum[n], p);
        }
        RefinedCorrection rc;
        rc.j = j;
        rc.source = remove_translation_modes(A, q.z, gs, grad2);
        rc.field = helmholtz_inverse(rc.source);
        rc.sup_norm = sup_norm(rc.field);
        rc.h1_norm = h1_norm(rc.field);
        prev_sum = partial_sum;
        partial_sum += rc.field;
        out.push_back(std::move(rc));
    }
    return out;
}

}  // namespace logsol
