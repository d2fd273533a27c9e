#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "logsol/ansatz.hpp"
#include "logsol/errors.hpp"
#include "logsol/groundstate.hpp"
#include "logsol/ode.hpp"
#include "logsol/vec.hpp"

namespace logsol {

struct ReducedState {
    double s = 1.0;
    double lambda = 1.0;
    Vec z{0.0, 0.0};
    double gamma = 0.0;  // unwrapped
    Vec v{0.0, 0.0};
};

enum class ForceMode { quadrature, asymptotic, none };

struct ReducedOptions {
    ForceMode mode = ForceMode::asymptotic;
    double tol = 1e-12;
    double collision_radius = 5.0;
    std::vector<double> outputs;  // if empty, every accepted step is recorded
};

/// Ground state and constants driving the reduced system.
struct ReducedModel {
    GroundState gs;
    StructureConstants sc;
};

namespace detail {

using ReducedVec = std::array<double, 6>;  // lambda, z1, z2, gamma, v1, v2

inline ReducedVec pack(const ReducedState& st) {
    return {st.lambda, st.z[0], st.z[1], st.gamma, st.v[0], st.v[1]};
}

inline ReducedState unpack(double s, const ReducedVec& x) {
    return {s, x[0], {x[1], x[2]}, x[3], {x[4], x[5]}};
}

}  // namespace detail

/// Force H(z) under the chosen mode.
inline Vec reduced_force(const Vec& z, const ReducedModel& m, ForceMode mode) {
    switch (mode) {
        case ForceMode::none: return {0.0, 0.0};
        case ForceMode::asymptotic: return interaction_force_asymptotic(z, m.sc.C_p, m.gs.d());
        case ForceMode::quadrature: break;
    }
    // Trial stages may dip below the collision radius; accepted states are checked separately.
    if (norm(z) < 5.0) return interaction_force_asymptotic(z, m.sc.C_p, m.gs.d());
    return interaction_force_H(z, m.gs);
}

/// Potential V(|z|) = (2/c2) int_{|z|}^inf |H|, so that v^2 - V(z) is conserved along the reduced flow.
inline double reduced_potential(double z, const ReducedModel& m, ForceMode mode, double tol = 1e-10) {
    const int d = m.gs.d();
    if (mode == ForceMode::none) return 0.0;
    auto h = [&](double a) { return norm(reduced_force({a, 0.0}, m, mode)); };
    if (mode == ForceMode::asymptotic && d == 1) return m.sc.c * std::exp(-z);
    return 2.0 / m.sc.c2 * integrate_gk(h, z, z + 45.0, tol, 1e-300);
}

/// Zero-energy speed at separation |z| for the chosen force mode; v0 = sqrt(V(z)).
inline double matched_speed(double z, const ReducedModel& m, ForceMode mode) {
    return std::sqrt(reduced_potential(z, m, mode));
}

/// Reduced modulation system with vanishing modulation vectors:
/// lambda' = 0, z' = 2v, gamma' = 1 - |v_1|^2 + v_1.z_1' = 1 + |v|^2/4, v' = -(2/c2) H(z).
/// s_end may lie before state0.s.
inline std::vector<ReducedState> integrate_reduced(const ReducedState& state0, double s_end, const ReducedModel& m,
                                                   const ReducedOptions& opt = {}) {
    if (norm(state0.z) < opt.collision_radius)
        throw CollisionDetected("|z0| = " + std::to_string(norm(state0.z)));
    const int d = m.gs.d();
    const double c2 = m.sc.c2;
    auto rhs = [&](const detail::ReducedVec& x, detail::ReducedVec& dx, double) {
        Vec z{x[1], d == 2 ? x[2] : 0.0}, v{x[4], d == 2 ? x[5] : 0.0};
        Vec H = reduced_force(z, m, opt.mode);
        dx[0] = 0.0;
        dx[1] = 2.0 * v[0];
        dx[2] = 2.0 * v[1];
        dx[3] = 1.0 + 0.25 * dot(v, v);
        dx[4] = -2.0 / c2 * H[0];
        dx[5] = -2.0 / c2 * H[1];
    };
    OdeOptions oo;
    oo.abs_tol = opt.tol;
    oo.rel_tol = opt.tol;
    oo.h_initial = 1e-2 * (s_end >= state0.s ? 1.0 : -1.0);
    detail::ReducedVec x = detail::pack(state0);
    std::vector<ReducedState> traj;
    const bool every = opt.outputs.empty();
    if (every) traj.push_back(state0);
    auto check = [&](double s, const detail::ReducedVec& y) {
        ReducedState st = detail::unpack(s, y);
        if (norm(st.z) < opt.collision_radius)
            throw CollisionDetected("|z| = " + std::to_string(norm(st.z)) + " at s = " + std::to_string(s));
        if (every) traj.push_back(st);
        return true;
    };
    integrate_rk78(
        rhs, x, state0.s, s_end, opt.outputs, oo,
        [&](double s, const detail::ReducedVec& y) {
            if (!every) traj.push_back(detail::unpack(s, y));
            return true;
        },
        check);
    return traj;
}

/// Model regime: lambda = 1, v = 1/s, and z solving |z|^{(d-1)/2} e^{|z|} = c s^2 along e_1.
inline ReducedState model_solution(double s, double c, int d) {
    const double target = std::log(c * s * s);
    const double a = 0.5 * (d - 1);
    double z = std::max(target, 1.0);
    for (int it = 0; it < 60; ++it) {
        double f = z + a * std::log(z) - target;
        double step = f / (1.0 + a / z);
        z -= step;
        if (std::abs(step) < 1e-15 * z) break;
    }
    ReducedState st;
    st.s = s;
    st.z = {z, 0.0};
    st.v = {1.0 / s, 0.0};
    return st;
}

/// Derivative of the model separation: z' = 2 / (s (1 + (d-1)/(2z))).
inline double model_zdot(double s, double c, int d) {
    const double z = model_solution(s, c, d).z[0];
    return 2.0 / (s * (1.0 + 0.5 * (d - 1) / z));
}

struct ToyState {
    double t;
    double z;
    double zdot;
    double energy;  // zdot^2/2 - e^{-2z}/2
};

inline double toy_energy(double z, double zdot) { return 0.5 * zdot * zdot - 0.5 * std::exp(-2.0 * z); }

/// z'' = -e^{-2z} from t = 1, with steps capped at max_step.
inline std::vector<ToyState> toy_double_pole(double z0, double zdot0, double t_end, double tol = 1e-10,
                                             const std::vector<double>& outputs = {}, double max_step = 0.1) {
    using S = std::array<double, 2>;
    auto rhs = [](const S& x, S& dx, double) {
        dx[0] = x[1];
        dx[1] = -std::exp(-2.0 * x[0]);
    };
    OdeOptions oo;
    oo.abs_tol = tol;
    oo.rel_tol = tol;
    oo.h_max = max_step;
    S x{z0, zdot0};
    std::vector<ToyState> traj;
    const bool every = outputs.empty();
    auto rec = [&](double t, const S& y) {
        traj.push_back({t, y[0], y[1], toy_energy(y[0], y[1])});
        return true;
    };
    if (every) rec(1.0, x);
    integrate_rk78(
        rhs, x, 1.0, t_end, outputs, oo,
        [&](double t, const S& y) { return every ? true : rec(t, y); },
        [&](double t, const S& y) { return every ? rec(t, y) : true; });
    return traj;
}

/// Closed-form solution of v'' = 2v/t^2, v(1) = 1, v'(1) = 0.
inline double linearized_closed_form(double t) { return t * t / 3.0 + 2.0 / (3.0 * t); }

struct InstabilityReport {
    std::vector<double> t;
    std::vector<double> closed_form;
    std::vector<double> linear_numeric;  // v'' = 2v/t^2 integrated numerically
    std::vector<double> deviation;  // (z_eps - z_{-eps}) / (2 eps)
    double max_rel_error = 0;
    double growth_exponent = 0;  // slope of log deviation vs log t on the second half of [1, t_end]
};

/// Perturbs z(1) = 0 of the log t orbit by +-eps and compares the nonlinear deviation with the
/// linearized solution.
inline InstabilityReport linearized_instability(double eps, double t_end, int n_samples = 200,
                                                double tol = 1e-13) {
    if (!(t_end > 1.0)) throw InvalidConfig("t_end must exceed 1");
    std::vector<double> nodes(n_samples);
    for (int i = 0; i < n_samples; ++i) nodes[i] = 1.0 + (t_end - 1.0) * (i + 1) / n_samples;
    auto plus = toy_double_pole(eps, 1.0, t_end, tol, nodes);
    auto minus = toy_double_pole(-eps, 1.0, t_end, tol, nodes);
    InstabilityReport rep;
    {
        using S = std::array<double, 2>;
        S x{1.0, 0.0};
        OdeOptions oo;
        oo.abs_tol = oo.rel_tol = tol;
        integrate_rk78([](const S& y, S& dy, double t) { dy[0] = y[1]; dy[1] = 2.0 * y[0] / (t * t); }, x, 1.0,
                       t_end, nodes, oo, [&](double, const S& y) { rep.linear_numeric.push_back(y[0]); return true; });
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int m = 0;
    for (std::size_t i = 0; i < plus.size(); ++i) {
        double t = plus[i].t;
        double dev = (plus[i].z - minus[i].z) / (2.0 * eps);
        double cf = linearized_closed_form(t);
        rep.t.push_back(t);
        rep.closed_form.push_back(cf);
        rep.deviation.push_back(dev);
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(dev / cf - 1.0));
        if (t >= 0.5 * (1.0 + t_end) && dev > 0) {
            double lx = std::log(t), ly = std::log(dev);
            sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
            ++m;
        }
    }
    if (m >= 2) rep.growth_exponent = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    return rep;
}

}  // namespace logsol
