#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "logsol/ansatz.hpp"
#include "logsol/errors.hpp"
#include "logsol/grid.hpp"
#include "logsol/groundstate.hpp"
#include "logsol/io.hpp"
#include "logsol/modulation.hpp"
#include "logsol/nls.hpp"
#include "logsol/ode.hpp"
#include "logsol/reduced.hpp"

namespace logsol {

struct ShootConfig {
    double p = 3.0;
    int d = 1;
    double s_in = 300.0;
    double s0 = 30.0;
    int N = 2048;
    double L = 64.0;
    double dt = 1e-2;
    int order = 4;
    double C_star = 10.0;
    double zeta_lo = -1.0;
    double zeta_hi = 1.0;
    double zeta_sharp = 0.0;  // used by single shots and sweeps
    double fit_interval = 0.5;
    ForceMode force = ForceMode::quadrature;
    double chi_radius_scale = 1.0;
    int max_bisections = 40;
    double collision_radius = 5.0;
};

inline std::string to_string(ForceMode m) {
    switch (m) {
        case ForceMode::quadrature: return "quadrature";
        case ForceMode::asymptotic: return "asymptotic";
        case ForceMode::none: return "none";
    }
    return "quadrature";
}

inline ForceMode force_mode_from(const std::string& s) {
    if (s == "quadrature" || s == "full") return ForceMode::quadrature;
    if (s == "asymptotic") return ForceMode::asymptotic;
    if (s == "none") return ForceMode::none;
    throw InvalidConfig("unknown force mode '" + s + "'");
}

inline nlohmann::json to_json(const ShootConfig& c) {
    return {{"p", c.p},
            {"d", c.d},
            {"s_in", c.s_in},
            {"s0", c.s0},
            {"N", c.N},
            {"L", c.L},
            {"dt", c.dt},
            {"order", c.order},
            {"C_star", c.C_star},
            {"zeta_bracket", {c.zeta_lo, c.zeta_hi}},
            {"zeta_sharp", c.zeta_sharp},
            {"fit_interval", c.fit_interval},
            {"force", to_string(c.force)},
            {"chi_radius_scale", c.chi_radius_scale},
            {"max_bisections", c.max_bisections},
            {"collision_radius", c.collision_radius}};
}

inline void validate(const ShootConfig& c) {
    if (!(c.s_in > c.s0 && c.s0 > 1.0)) throw InvalidConfig("need s_in > s0 > 1");
    if (!(c.C_star > 1.0)) throw InvalidConfig("need C_star > 1");
    if (!(c.zeta_lo >= -1.0 && c.zeta_hi <= 1.0 && c.zeta_lo < c.zeta_hi))
        throw InvalidConfig("zeta_bracket must be an interval inside [-1, 1]");
    if (!(c.dt > 0) || !(c.fit_interval > 0)) throw InvalidConfig("dt and fit_interval must be positive");
    if (c.order != 2 && c.order != 4) throw InvalidConfig("order must be 2 or 4");
}

inline ShootConfig shoot_config_from_json(const nlohmann::json& j) {
    ShootConfig c;
    try {
        c.p = j.value("p", c.p);
        c.d = j.value("d", c.d);
        c.s_in = j.value("s_in", c.s_in);
        c.s0 = j.value("s0", c.s0);
        c.N = j.value("N", c.N);
        c.L = j.value("L", c.L);
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            c.d = g.value("d", c.d);
            c.N = g.value("N", c.N);
            c.L = g.value("L", c.L);
        }
        c.dt = j.value("dt", c.dt);
        c.order = j.value("order", c.order);
        c.C_star = j.value("C_star", c.C_star);
        if (j.contains("zeta_bracket")) {
            c.zeta_lo = j.at("zeta_bracket").at(0).get<double>();
            c.zeta_hi = j.at("zeta_bracket").at(1).get<double>();
        }
        c.zeta_sharp = j.value("zeta_sharp", c.zeta_sharp);
        c.fit_interval = j.value("fit_interval", c.fit_interval);
        c.force = force_mode_from(j.value("force", to_string(c.force)));
        c.chi_radius_scale = j.value("chi_radius_scale", c.chi_radius_scale);
        c.max_bisections = j.value("max_bisections", c.max_bisections);
        c.collision_radius = j.value("collision_radius", c.collision_radius);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(e.what());
    }
    validate(c);
    return c;
}

inline ShootConfig load_shoot_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(path + ": " + e.what());
    }
    return shoot_config_from_json(j);
}

/// Hash of the canonical JSON form of the config.
inline std::string config_hash(const ShootConfig& c) { return hex64(fnv1a(to_json(c).dump())); }

enum class Exit { reached_s0, exited_zeta_high, exited_zeta_low, exited_eps, collision, blowup };

inline std::string to_string(Exit e) {
    switch (e) {
        case Exit::reached_s0: return "reached_s0";
        case Exit::exited_zeta_high: return "exited_zeta_high";
        case Exit::exited_zeta_low: return "exited_zeta_low";
        case Exit::exited_eps: return "exited_eps";
        case Exit::collision: return "collision";
        case Exit::blowup: return "blowup";
    }
    return "?";
}

inline Exit exit_from(const std::string& s) {
    for (Exit e : {Exit::reached_s0, Exit::exited_zeta_high, Exit::exited_zeta_low, Exit::exited_eps,
                   Exit::collision, Exit::blowup})
        if (to_string(e) == s) return e;
    throw InvalidConfig("unknown exit '" + s + "'");
}

struct DiagnosticSample {
    double s = 0;
    double t = 0;
    BubbleParams params;  // gamma unwrapped
    double zeta = 0;
    double xi = 0;
    double eps_h1 = 0;
    double eps_s = 0;        // eps_h1 * s
    double proj_igrad = 0;   // |<eta1, i grad Q>| s^2
    double W = 0;
    double mass = 0;
    Vec momentum{0.0, 0.0};
};

struct RunRecord {
    ShootConfig config;
    double zeta_sharp = 0;
    std::vector<DiagnosticSample> samples;
    Exit exit = Exit::reached_s0;
    int phi = 0;  // +1 / -1 exit sign, 0 when s0 was reached
    double s_reached = 0;
    double wall_time = 0;
    std::string note;
};

/// zeta = c^{-1/2} |z|^{(d-1)/4} e^{|z|/2}.
inline double zeta_of(const Vec& z, double c, int d) {
    const double a = norm(z);
    return std::pow(c, -0.5) * std::pow(a, 0.25 * (d - 1)) * std::exp(0.5 * a);
}

/// xi = (zeta - s)^2 s^{-2} log s.
inline double xi_of(double zeta, double s) { return (zeta - s) * (zeta - s) / (s * s) * std::log(s); }

/// |z| with zeta(|z|) = target (Newton on the logarithm).
inline double separation_for_zeta(double target, double c, int d) {
    const double rhs = std::log(target) + 0.5 * std::log(c);
    double a = 2.0 * rhs;
    for (int it = 0; it < 60; ++it) {
        double f = 0.5 * a + 0.25 * (d - 1) * std::log(a) - rhs;
        double step = f / (0.5 + 0.25 * (d - 1) / a);
        a -= step;
        if (std::abs(step) < 1e-15 * a) break;
    }
    return a;
}

/// Final-time parameters: lambda = 1, gamma = 0, z = z_in e_1 with zeta(z_in) = zeta_in and
/// v = c^{1/2} z_in^{-(d-1)/4} e^{-z_in/2} e_1 = e_1 / zeta_in.
inline BubbleParams initial_params(const ShootConfig& cfg, double zeta_sharp, double c) {
    const double zeta_in = cfg.s_in + zeta_sharp * cfg.s_in / std::sqrt(std::log(cfg.s_in));
    if (!(zeta_in > 0)) throw InvalidConfig("zeta_in must be positive");
    BubbleParams q;
    q.z = {separation_for_zeta(zeta_in, c, cfg.d), 0.0};
    q.v = {std::sqrt(c) * std::pow(q.z[0], -0.25 * (cfg.d - 1)) * std::exp(-0.5 * q.z[0]), 0.0};
    return q;
}

/// Ground state and constants shared across runs of one (p, d).
struct ShootContext {
    GroundState gs;
    StructureConstants sc;
};

inline ShootContext make_context(double p, int d) {
    GroundState gs = solve_profile(p, d);
    return {gs, structure_constants(gs)};
}

namespace detail {

inline int phi_of(Exit e, double zeta, double s) {
    if (e == Exit::exited_zeta_high) return 1;
    if (e == Exit::exited_zeta_low) return -1;
    if (e == Exit::reached_s0) return 0;
    return zeta >= s ? 1 : -1;
}

// v(s - ds) from v(s) by integrating v' = -(2/c2) H(z(sigma)) with z linear between the two fits.
inline Vec carry_velocity(const Vec& v, const Vec& z_hi, const Vec& z_lo, double s_hi, double s_lo,
                          const ReducedModel& m, ForceMode mode) {
    using S = std::array<double, 2>;
    S x{v[0], v[1]};
    const double c2 = m.sc.c2;
    auto rhs = [&](const S&, S& dx, double s) {
        double w = (s - s_lo) / (s_hi - s_lo);
        Vec z = w * z_hi + (1.0 - w) * z_lo;
        Vec H = reduced_force(z, m, mode);
        dx[0] = -2.0 / c2 * H[0];
        dx[1] = -2.0 / c2 * H[1];
    };
    OdeOptions oo;
    oo.abs_tol = 1e-14;
    oo.rel_tol = 1e-10;
    oo.h_initial = -(s_hi - s_lo);
    integrate_rk78(rhs, x, s_hi, s_lo, {}, oo, [](double, const S&) { return true; });
    return {x[0], x[1]};
}

}  // namespace detail

/// Backward evolution from u(T) = P^in (T = s_in), fitting parameters every fit_interval in time.
inline RunRecord backward_shoot(const ShootConfig& cfg, double zeta_sharp, const ShootContext& ctx) {
    validate(cfg);
    const auto wall0 = std::chrono::steady_clock::now();
    const GroundState& gs = ctx.gs;
    const ReducedModel model{ctx.gs, ctx.sc};
    const double c = ctx.sc.c;
    const double p = cfg.p;
    const int d = cfg.d;
    Grid g = make_grid(d, cfg.N, cfg.L);

    RunRecord rec;
    rec.config = cfg;
    rec.zeta_sharp = zeta_sharp;
    BubbleParams q = initial_params(cfg, zeta_sharp, c);
    ComplexField u = build_two_bubble(q, gs, g);

    double s = cfg.s_in, t = cfg.s_in;
    double gamma_unwrapped = 0.0;
    PropagateOptions popt;
    popt.order = cfg.order;

    auto record = [&](const DecompResult& fit) {
        DiagnosticSample ds;
        ds.s = s;
        ds.t = t;
        ds.params = fit.params;
        ds.params.gamma = gamma_unwrapped;
        ds.zeta = zeta_of(fit.params.z, c, d);
        ds.xi = xi_of(ds.zeta, s);
        ds.eps_h1 = fit.eps_h1;
        ds.eps_s = fit.eps_h1 * s;
        ds.proj_igrad = 0;
        for (int j = 0; j < d; ++j)
            ds.proj_igrad = std::max(ds.proj_igrad, std::abs(fit.projections[2 + d + j]) * s * s);
        ds.W = energy_functional(fit.eps, fit.params, gs, s, cfg.chi_radius_scale).W;
        Observables ob = observables(u, p);
        ds.mass = ob.mass;
        ds.momentum = ob.momentum;
        rec.samples.push_back(ds);
    };
    auto finish = [&](Exit e) {
        rec.exit = e;
        const auto& last = rec.samples.back();
        rec.phi = detail::phi_of(e, last.zeta, last.s);
        rec.s_reached = last.s;
        rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
        return rec;
    };
    auto fit_at = [&](const BubbleParams& guess, const Vec& v) {
        DecompOptions o;
        o.mode = FitMode::tracking;
        o.v_override = v;
        try {
            return decompose(u, guess, gs, o);
        } catch (const NoConvergence& e) {
            throw FitLost(std::string("at s = ") + std::to_string(s) + ": " + e.what());
        } catch (const OutOfBasin& e) {
            throw FitLost(std::string("at s = ") + std::to_string(s) + ": " + e.what());
        }
    };

    DecompResult fit = fit_at(q, q.v);
    record(fit);

    while (s > cfg.s0 + 1e-12) {
        const double lam2 = fit.params.lambda * fit.params.lambda;
        double dT = cfg.fit_interval * lam2;
        // Last chunk lands on s0 at the current scale.
        if (s - cfg.fit_interval < cfg.s0) dT = (s - cfg.s0) * lam2;
        const long steps = std::max(1L, static_cast<long>(std::ceil(dT / cfg.dt - 1e-9)));
        const double dt = dT / steps;
        try {
            u = propagate_backward(u, dt, steps, p, popt);
        } catch (const Overflow&) {
            return finish(Exit::blowup);
        }
        t -= dT;
        const BubbleParams prev = fit.params;
        const double s_prev = s;
        const Vec z_pred = prev.z - (2.0 * dT / lam2) * prev.v;
        // Predictor: lambda' = 0, z' = 2v, gamma' = 1 + |v|^2/4 in s.
        double s_new = s_prev - dT / lam2;
        BubbleParams guess = prev;
        guess.z = z_pred;
        guess.gamma = prev.gamma - (s_prev - s_new) * (1.0 + 0.25 * dot(prev.v, prev.v));
        if (norm(z_pred) < cfg.collision_radius) {
            s = s_new;
            return finish(Exit::collision);
        }
        Vec v_new = detail::carry_velocity(prev.v, prev.z, z_pred, s_prev, s_new, model, cfg.force);
        guess.v = v_new;
        DecompResult f1 = fit_at(guess, v_new);
        // Corrector: s from the trapezoid of lambda^{-2}, v re-integrated along the fitted z.
        const double lam_new = f1.params.lambda;
        s_new = s_prev - 0.5 * dT * (1.0 / lam2 + 1.0 / (lam_new * lam_new));
        if (norm(f1.params.z) >= cfg.collision_radius) {
            v_new = detail::carry_velocity(prev.v, prev.z, f1.params.z, s_prev, s_new, model, cfg.force);
            f1 = fit_at(f1.params, v_new);
        }
        fit = f1;
        s = s_new;
        gamma_unwrapped += detail::wrap_phase(fit.params.gamma - detail::wrap_phase(gamma_unwrapped));
        record(fit);
        const DiagnosticSample& last = rec.samples.back();
        if (last.xi > 1.0) return finish(last.zeta > s ? Exit::exited_zeta_high : Exit::exited_zeta_low);
        if (last.eps_s > cfg.C_star) return finish(Exit::exited_eps);
        if (norm(fit.params.z) < cfg.collision_radius) return finish(Exit::collision);
    }
    return finish(Exit::reached_s0);
}

inline RunRecord backward_shoot(const ShootConfig& cfg, double zeta_sharp) {
    return backward_shoot(cfg, zeta_sharp, make_context(cfg.p, cfg.d));
}

struct BisectionStep {
    double zeta_sharp = 0;
    double width = 0;  // bracket width after this step
    Exit exit = Exit::reached_s0;
    int phi = 0;
    double s_reached = 0;
};

struct BisectResult {
    double zeta_sharp_star = 0;
    RunRecord record;  // deepest-reaching run
    RunRecord lo_record, hi_record;
    std::vector<BisectionStep> steps;
};

/// Bisection over zeta_sharp using the exit sign; stops once a run reaches s0.
inline BisectResult bisect_zeta(const ShootConfig& cfg, const ShootContext& ctx) {
    BisectResult res;
    double lo = cfg.zeta_lo, hi = cfg.zeta_hi;
    res.lo_record = backward_shoot(cfg, lo, ctx);
    res.hi_record = backward_shoot(cfg, hi, ctx);
    const int phi_lo = res.lo_record.phi, phi_hi = res.hi_record.phi;
    auto deeper = [](const RunRecord& a, const RunRecord& b) { return a.s_reached < b.s_reached; };
    res.record = deeper(res.lo_record, res.hi_record) ? res.lo_record : res.hi_record;
    res.zeta_sharp_star = res.record.zeta_sharp;
    for (const RunRecord* r : {&res.lo_record, &res.hi_record})
        if (r->exit == Exit::reached_s0) return res;
    if (phi_lo == phi_hi)
        throw NoSignChange("both endpoints exit with sign " + std::to_string(phi_lo) + " (" +
                           to_string(res.lo_record.exit) + " at s = " + std::to_string(res.lo_record.s_reached) +
                           ", " + to_string(res.hi_record.exit) + " at s = " +
                           std::to_string(res.hi_record.s_reached) + ")");
    for (int k = 0; k < cfg.max_bisections; ++k) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        RunRecord r = backward_shoot(cfg, mid, ctx);
        if (r.phi == phi_lo)
            lo = mid;
        else
            hi = mid;
        res.steps.push_back({mid, hi - lo, r.exit, r.phi, r.s_reached});
        if (!deeper(res.record, r)) {
            res.record = r;
            res.zeta_sharp_star = mid;
        }
        if (r.exit == Exit::reached_s0) break;
    }
    return res;
}

inline BisectResult bisect_zeta(const ShootConfig& cfg) { return bisect_zeta(cfg, make_context(cfg.p, cfg.d)); }

struct RegimeReport {
    double slope = 0;      // coefficient of log t
    double C = 0;          // |dx| ~ slope log t - ((d-1)/2) log log t - C
    double residual = 0;   // RMS of the fit
    double sup_lambda = 0; // sup |1/lambda - 1| t
    double sup_v = 0;      // sup |v| t
    double sup_eps = 0;    // sup eps_h1 t
    double tube = 0;       // sup | |z|^{(d-1)/2} e^{|z|} / (c s^2) - 1 | sqrt(log s)
    std::size_t n = 0;
};

/// Trajectory in lab time, t(s) = T - int_s^{s_in} lambda^2 with T = s_in (trapezoid in s).
inline std::vector<double> lab_times(const std::vector<DiagnosticSample>& smp) {
    std::vector<double> t(smp.size());
    if (smp.empty()) return t;
    t[0] = smp[0].s;
    for (std::size_t i = 1; i < smp.size(); ++i) {
        const double l0 = smp[i - 1].params.lambda, l1 = smp[i].params.lambda;
        t[i] = t[i - 1] + 0.5 * (l0 * l0 + l1 * l1) * (smp[i].s - smp[i - 1].s);
    }
    return t;
}

/// Fits |dx(t)| = lambda |z| against a log t - ((d-1)/2) log log t - C.
inline RegimeReport verify_regime(const std::vector<DiagnosticSample>& smp, double c, int d) {
    if (smp.size() < 5) throw WindowTooShort("need at least 5 samples, got " + std::to_string(smp.size()));
    std::vector<double> t = lab_times(smp);
    double tmin = *std::min_element(t.begin(), t.end()), tmax = *std::max_element(t.begin(), t.end());
    if (!(tmin > 1.0) || std::log(tmax / tmin) < 0.5)
        throw WindowTooShort("log-time window " + std::to_string(std::log(tmax / tmin)) + " too short");
    Eigen::MatrixXd A(smp.size(), 2);
    Eigen::VectorXd b(smp.size());
    RegimeReport rep;
    rep.n = smp.size();
    for (std::size_t i = 0; i < smp.size(); ++i) {
        const auto& sm = smp[i];
        const double dx = sm.params.lambda * norm(sm.params.z);
        A(i, 0) = std::log(t[i]);
        A(i, 1) = 1.0;
        b(i) = dx + 0.5 * (d - 1) * std::log(std::log(t[i]));
        rep.sup_lambda = std::max(rep.sup_lambda, std::abs(1.0 / sm.params.lambda - 1.0) * t[i]);
        rep.sup_v = std::max(rep.sup_v, norm(sm.params.v) * t[i]);
        rep.sup_eps = std::max(rep.sup_eps, sm.eps_h1 * t[i]);
        const double a = norm(sm.params.z);
        const double ratio = std::pow(a, 0.5 * (d - 1)) * std::exp(a) / (c * sm.s * sm.s);
        rep.tube = std::max(rep.tube, std::abs(ratio - 1.0) * std::sqrt(std::log(sm.s)));
    }
    Eigen::Vector2d x = A.colPivHouseholderQr().solve(b);
    rep.slope = x(0);
    rep.C = -x(1);
    rep.residual = std::sqrt((A * x - b).squaredNorm() / static_cast<double>(smp.size()));
    return rep;
}

inline RegimeReport verify_regime(const RunRecord& rec, double c) {
    if (rec.exit != Exit::reached_s0) throw WindowTooShort("record did not reach s0");
    return verify_regime(rec.samples, c, rec.config.d);
}

/// Samples of the reduced trajectory presented as diagnostics, for regime checks on the ODE alone.
inline std::vector<DiagnosticSample> samples_from_reduced(const std::vector<ReducedState>& traj, double c, int d) {
    std::vector<DiagnosticSample> out;
    for (const auto& st : traj) {
        DiagnosticSample ds;
        ds.s = st.s;
        ds.params.lambda = st.lambda;
        ds.params.z = st.z;
        ds.params.gamma = st.gamma;
        ds.params.v = st.v;
        ds.zeta = zeta_of(st.z, c, d);
        ds.xi = xi_of(ds.zeta, st.s);
        out.push_back(ds);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.s < b.s; });
    return out;
}

// ---- persistence ----

inline nlohmann::json to_json(const DiagnosticSample& d) {
    return {{"s", d.s},
            {"t", d.t},
            {"lambda", d.params.lambda},
            {"z", {d.params.z[0], d.params.z[1]}},
            {"gamma", d.params.gamma},
            {"v", {d.params.v[0], d.params.v[1]}},
            {"zeta", d.zeta},
            {"xi", d.xi},
            {"eps_h1", d.eps_h1},
            {"eps_s", d.eps_s},
            {"proj_igrad_s2", d.proj_igrad},
            {"W", d.W},
            {"mass", d.mass},
            {"momentum", {d.momentum[0], d.momentum[1]}}};
}

inline DiagnosticSample sample_from_json(const nlohmann::json& j) {
    DiagnosticSample d;
    d.s = j.at("s");
    d.t = j.at("t");
    d.params.lambda = j.at("lambda");
    d.params.z = {j.at("z").at(0), j.at("z").at(1)};
    d.params.gamma = j.at("gamma");
    d.params.v = {j.at("v").at(0), j.at("v").at(1)};
    d.zeta = j.at("zeta");
    d.xi = j.at("xi");
    d.eps_h1 = j.at("eps_h1");
    d.eps_s = j.at("eps_s");
    d.proj_igrad = j.at("proj_igrad_s2");
    d.W = j.at("W");
    d.mass = j.at("mass");
    d.momentum = {j.at("momentum").at(0), j.at("momentum").at(1)};
    return d;
}

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : r.samples) samples.push_back(to_json(s));
    return {{"config", to_json(r.config)},
            {"config_hash", config_hash(r.config)},
            {"zeta_sharp", r.zeta_sharp},
            {"exit", to_string(r.exit)},
            {"phi", r.phi},
            {"s_reached", r.s_reached},
            {"wall_time", r.wall_time},
            {"note", r.note},
            {"samples", samples}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord r;
    try {
        r.config = shoot_config_from_json(j.at("config"));
        r.zeta_sharp = j.at("zeta_sharp");
        r.exit = exit_from(j.at("exit"));
        r.phi = j.at("phi");
        r.s_reached = j.at("s_reached");
        r.wall_time = j.at("wall_time");
        r.note = j.value("note", "");
        for (const auto& s : j.at("samples")) r.samples.push_back(sample_from_json(s));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("run record: ") + e.what());
    }
    return r;
}

inline RunRecord load_record(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoFailure("cannot open " + path);
    std::string line;
    std::getline(f, line);
    try {
        return record_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(path + ": " + e.what());
    }
}

/// CSV columns: s, t, lambda, z..., gamma, v..., eps_h1, zeta, xi, W.
inline void write_trajectory_csv(const std::string& path, const RunRecord& r) {
    const int d = r.config.d;
    std::vector<std::string> header{"s", "t", "lambda"};
    for (int j = 0; j < d; ++j) header.push_back("z" + std::to_string(j + 1));
    header.push_back("gamma");
    for (int j = 0; j < d; ++j) header.push_back("v" + std::to_string(j + 1));
    for (const char* h : {"eps_h1", "zeta", "xi", "W"}) header.push_back(h);
    std::vector<std::vector<double>> rows;
    for (const auto& s : r.samples) {
        std::vector<double> row{s.s, s.t, s.params.lambda};
        for (int j = 0; j < d; ++j) row.push_back(s.params.z[j]);
        row.push_back(s.params.gamma);
        for (int j = 0; j < d; ++j) row.push_back(s.params.v[j]);
        for (double x : {s.eps_h1, s.zeta, s.xi, s.W}) row.push_back(x);
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

/// Append-only JSON-lines registry keyed by config hash.
class Registry {
public:
    explicit Registry(std::string path) : path_(std::move(path)) {
        std::ifstream f(path_);
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                hashes_.insert(j.at("config_hash").get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                throw IoFailure(path_ + ": malformed registry line: " + e.what());
            }
        }
    }

    bool contains(const std::string& hash) const {
        std::lock_guard<std::mutex> lock(mutex_);
        return hashes_.count(hash) > 0;
    }

    /// Returns false if a record with the same config hash is already present.
    bool append(const RunRecord& r) {
        const std::string h = config_hash(r.config);
        std::lock_guard<std::mutex> lock(mutex_);
        if (hashes_.count(h)) return false;
        std::ofstream f(path_, std::ios::app);
        if (!f) throw IoFailure("cannot open " + path_);
        f << to_json(r).dump() << '\n';
        f.flush();
        if (!f) throw IoFailure("write failed: " + path_);
        hashes_.insert(h);
        return true;
    }

private:
    std::string path_;
    mutable std::mutex mutex_;
    std::set<std::string> hashes_;
};

struct SweepEntry {
    std::string config_hash;
    bool duplicate = false;
    RunRecord record;  // empty samples when duplicate
};

/// Runs single shots at each config's zeta_sharp in parallel and appends new records to the registry.
inline std::vector<SweepEntry> run_sweep(const std::vector<ShootConfig>& configs, const std::string& registry_path,
                                         unsigned threads = 0) {
    Registry reg(registry_path);
    std::vector<SweepEntry> out(configs.size());
    std::set<std::string> claimed;
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        validate(configs[i]);
        out[i].config_hash = config_hash(configs[i]);
        out[i].record.config = configs[i];
        if (reg.contains(out[i].config_hash) || !claimed.insert(out[i].config_hash).second)
            out[i].duplicate = true;
        else
            todo.push_back(i);
    }
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            std::size_t k = next++;
            if (k >= todo.size()) return;
            const ShootConfig& cfg = configs[todo[k]];
            try {
                RunRecord r = backward_shoot(cfg, cfg.zeta_sharp);
                reg.append(r);
                out[todo[k]].record = std::move(r);
            } catch (...) {
                std::lock_guard<std::mutex> lock(err_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < std::min<std::size_t>(threads, todo.size()); ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

}  // namespace logsol
