#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "logsol/errors.hpp"
#include "logsol/ode.hpp"
#include "logsol/quadrature.hpp"

namespace logsol {

struct ProfileOptions {
    double r_max = 25.0;
    double mesh_step = 1e-3;
    // The interpolation table continues past r_max so far-field evaluations stay nonlinear-exact.
    double tail_extension = 60.0;
    double match_radius = 2.0;
};

/// Normalized decaying solution of q'' + (d-1)/r q' - q = 0, behaving like r^{-(d-1)/2} e^{-r}.
inline double radial_decay(int d, double r) {
    if (d == 1) return std::exp(-r);
    if (r > 700.0) return 0.0;
    const double nu = 0.5 * d - 1.0;
    return std::pow(r, -nu) * std::cyl_bessel_k(std::abs(nu), r) / std::sqrt(std::numbers::pi / 2);
}

/// Logarithmic derivative of radial_decay.
inline double radial_decay_logderiv(int d, double r) {
    if (d == 1) return -1.0;
    const double nu = 0.5 * d - 1.0;
    return -std::cyl_bessel_k(std::abs(nu + 1.0), r) / std::cyl_bessel_k(std::abs(nu), r);
}

inline double sphere_area(int d) {
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

struct RadialValue {
    double q;
    double dq;
    double d2q;
};

/// Radial ground state of q'' + (d-1)/r q' - q + q^p = 0, sampled on a uniform mesh and
/// interpolated by cubic Hermite splines. Immutable and cheap to copy.
class GroundState {
public:
    double p() const { return data_->p; }
    int d() const { return data_->d; }
    double q0() const { return data_->q[0]; }
    double r_max() const { return data_->r_max; }
    double mesh_step() const { return data_->h; }
    double tail_amplitude() const { return data_->tail_amp; }
    std::size_t sample_count() const { return data_->n_samples; }
    double sample_r(std::size_t i) const { return static_cast<double>(i) * data_->h; }
    double sample_q(std::size_t i) const { return data_->q[i]; }
    double sample_dq(std::size_t i) const { return data_->dq[i]; }
    double bracket_width() const { return data_->bracket_width; }

    double value(double r) const { return eval(r).q; }
    double deriv(double r) const { return eval(r).dq; }

    RadialValue eval(double r) const {
        const Data& D = *data_;
        r = std::abs(r);
        if (r >= D.r_ext) {
            double q = D.q.back() * radial_decay(D.d, r) / radial_decay(D.d, D.r_ext);
            double dq = q * radial_decay_logderiv(D.d, r);
            double d2q = q - std::pow(q, D.p) - (D.d - 1) * dq / r;
            return {q, dq, d2q};
        }
        double x = r / D.h;
        std::size_t i = std::min(static_cast<std::size_t>(x), D.q.size() - 2);
        double t = x - static_cast<double>(i);
        double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
        double h10 = t * (1 - t) * (1 - t);
        double h01 = t * t * (3 - 2 * t);
        double h11 = t * t * (t - 1);
        double q = h00 * D.q[i] + h10 * D.h * D.dq[i] + h01 * D.q[i + 1] + h11 * D.h * D.dq[i + 1];
        double dq = h00 * D.dq[i] + h10 * D.h * D.d2q[i] + h01 * D.dq[i + 1] + h11 * D.h * D.d2q[i + 1];
        double d2q;
        if (D.d == 1 || r > 1e-6)
            d2q = q - std::pow(std::max(q, 0.0), D.p) - (D.d == 1 ? 0.0 : (D.d - 1) * dq / r);
        else
            d2q = D.d2q[0];
        return {q, dq, d2q};
    }

private:
    struct Data {
        double p = 0;
        int d = 0;
        double h = 0;
        double r_max = 0;
        double r_ext = 0;
        std::size_t n_samples = 0;
        double tail_amp = 0;
        double bracket_width = 0;
        std::vector<double> q, dq, d2q;
    };
    std::shared_ptr<const Data> data_;

    friend GroundState solve_profile(double p, int d, double tol, const ProfileOptions& opt);
};

namespace detail {

using RadialState = std::array<double, 2>;

struct RadialOde {
    double p;
    int d;
    void operator()(const RadialState& y, RadialState& dy, double r) const {
        dy[0] = y[1];
        double nl = std::copysign(std::pow(std::abs(y[0]), p), y[0]);
        dy[1] = y[0] - nl - (d - 1) * y[1] / r;
    }
};

inline RadialState series_start(double q0, double p, int d, double r) {
    double a2 = (q0 - std::pow(q0, p)) / (2.0 * d);
    double a4 = (1.0 - p * std::pow(q0, p - 1)) * a2 / (4.0 * (d + 2));
    return {q0 + a2 * r * r + a4 * r * r * r * r, 2 * a2 * r + 4 * a4 * r * r * r};
}

// +1 overshoot (crosses zero), -1 undershoot (turns upward), 0 undecided by r_end.
inline int classify_shot(double q0, double p, int d, double r0, double r_end) {
    RadialState y = series_start(q0, p, d, r0);
    int verdict = 0;
    OdeOptions opt;
    opt.abs_tol = 1e-14;
    opt.rel_tol = 1e-13;
    opt.h_initial = 1e-3;
    opt.h_max = 0.05;
    integrate_rk78(
        RadialOde{p, d}, y, r0, r_end, {}, opt, [](double, const RadialState&) { return true; },
        [&](double, const RadialState& s) {
            if (s[0] < 0) {
                verdict = 1;
                return false;
            }
            if (s[1] > 0) {
                verdict = -1;
                return false;
            }
            return true;
        });
    return verdict;
}

}  // namespace detail

inline bool exponent_admissible(double p, int d) {
    if (!(p > 1.0) || d < 1) return false;
    if (d >= 3 && !(p < (d + 2.0) / (d - 2.0))) return false;
    return true;
}

/// Bisection shooting on q(0), then a two-sided matching refinement that integrates the
/// decaying tail inward so the sampled profile stays accurate where forward shots diverge.
inline GroundState solve_profile(double p, int d, double tol = 1e-12, const ProfileOptions& opt = {}) {
    if (!exponent_admissible(p, d))
        throw InvalidExponent("p = " + std::to_string(p) + " not admissible for d = " + std::to_string(d));
    if (!(tol > 0)) throw InvalidExponent("tol must be positive");
    using detail::RadialState;
    const double h = opt.mesh_step;
    const double r0 = h;
    const double r_class = opt.r_max;

    double guess = std::pow((p + 1) / 2, 1 / (p - 1)) * (1.0 + 0.5 * (d - 1));
    double lo = std::max(1.0, guess / 1.5), hi = guess * 1.5;
    int expand = 0;
    while (detail::classify_shot(lo, p, d, r0, r_class) > 0) {
        lo = 1.0 + (lo - 1.0) / 2.0;
        if (++expand > 60) throw NonConvergence("no undershooting lower bracket");
    }
    expand = 0;
    while (detail::classify_shot(hi, p, d, r0, r_class) <= 0) {
        lo = std::max(lo, hi);
        hi *= 2.0;
        if (++expand > 60) throw NonConvergence("no overshooting upper bracket");
    }
    while (hi - lo > tol) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        int c = detail::classify_shot(mid, p, d, r0, r_class);
        if (c > 0)
            hi = mid;
        else if (c < 0)
            lo = mid;
        else {
            lo = hi = mid;
            break;
        }
    }
    double q0 = 0.5 * (lo + hi);
    double width = hi - lo;

    const std::size_t n_max = static_cast<std::size_t>(std::llround(opt.r_max / h));
    const std::size_t n_ext = static_cast<std::size_t>(std::llround((opt.r_max + opt.tail_extension) / h));
    const std::size_t n_match = static_cast<std::size_t>(std::llround(opt.match_radius / h));
    const double r_ext = static_cast<double>(n_ext) * h;
    const double r_m = static_cast<double>(n_match) * h;

    OdeOptions ode;
    ode.abs_tol = 1e-300;
    ode.rel_tol = 1e-13;
    ode.h_initial = h;
    ode.h_max = h;
    auto noop = [](double, const RadialState&) { return true; };

    // Matching and tabulation share one node-clamped step pattern so the junction is seamless.
    std::vector<double> nodes_fwd, nodes_bwd;
    for (std::size_t i = 1; i <= n_match; ++i) nodes_fwd.push_back(static_cast<double>(i) * h);
    for (std::size_t i = n_ext; i > n_match; --i) nodes_bwd.push_back(static_cast<double>(i) * h);
    nodes_bwd.push_back(r_m);
    auto forward = [&](double a0, auto&& store) {
        RadialState y = detail::series_start(a0, p, d, r0);
        integrate_rk78(detail::RadialOde{p, d}, y, r0, r_m, nodes_fwd, ode, store);
        return y;
    };
    auto backward = [&](double amp_, auto&& store) {
        double t = radial_decay(d, r_ext);
        RadialState y{amp_ * t, amp_ * t * radial_decay_logderiv(d, r_ext)};
        integrate_rk78(detail::RadialOde{p, d}, y, r_ext, r_m, nodes_bwd, ode, store);
        return y;
    };

    // Tail amplitude guess from a forward shot at moderate radius.
    double amp;
    {
        OdeOptions coarse = ode;
        coarse.h_max = 0.05;
        RadialState y = detail::series_start(q0, p, d, r0);
        const double r_probe = std::min(8.0, opt.r_max / 2);
        integrate_rk78(detail::RadialOde{p, d}, y, r0, r_probe, {}, coarse, noop);
        amp = y[0] / radial_decay(d, r_probe);
    }
    // Newton on (q0, amp); the mismatch bottoms out at roundoff, so keep the best iterate.
    double best_F = std::numeric_limits<double>::infinity(), best_q0 = q0, best_amp = amp;
    double prev_F = best_F;
    for (int it = 0; it < 12; ++it) {
        RadialState f = forward(q0, noop), b = backward(amp, noop);
        Eigen::Vector2d F(f[0] - b[0], f[1] - b[1]);
        if (F.norm() < best_F) {
            best_F = F.norm();
            best_q0 = q0;
            best_amp = amp;
        }
        if (best_F < 1e-15 || (best_F < 1e-13 && F.norm() > 0.1 * prev_F)) break;
        prev_F = F.norm();
        double dq0 = 1e-7 * q0, damp = 1e-7 * amp;
        RadialState f1 = forward(q0 + dq0, noop), b1 = backward(amp + damp, noop);
        Eigen::Matrix2d J;
        J << (f1[0] - f[0]) / dq0, -(b1[0] - b[0]) / damp, (f1[1] - f[1]) / dq0, -(b1[1] - b[1]) / damp;
        Eigen::Vector2d step = J.partialPivLu().solve(F);
        q0 -= step[0];
        amp -= step[1];
    }
    if (!(best_F < 1e-12)) throw NonConvergence("profile matching did not converge");
    q0 = best_q0;
    amp = best_amp;

    auto data = std::make_shared<GroundState::Data>();
    data->p = p;
    data->d = d;
    data->h = h;
    data->r_max = static_cast<double>(n_max) * h;
    data->r_ext = r_ext;
    data->n_samples = n_max + 1;
    data->tail_amp = amp;
    data->bracket_width = width;
    data->q.assign(n_ext + 1, 0.0);
    data->dq.assign(n_ext + 1, 0.0);
    data->q[0] = q0;
    {
        std::size_t k = 1;
        forward(q0, [&](double, const RadialState& s) {
            data->q[k] = s[0];
            data->dq[k] = s[1];
            ++k;
            return true;
        });
    }
    {
        std::size_t k = n_ext;
        backward(amp, [&](double, const RadialState& s) {
            if (k > n_match) {
                data->q[k] = s[0];
                data->dq[k] = s[1];
            }
            --k;
            return true;
        });
    }
    data->d2q.resize(n_ext + 1);
    data->d2q[0] = (q0 - std::pow(q0, p)) / d;
    for (std::size_t i = 1; i <= n_ext; ++i) {
        double r = static_cast<double>(i) * h;
        data->d2q[i] = data->q[i] - std::pow(data->q[i], p) - (d - 1) * data->dq[i] / r;
    }
    GroundState gs;
    gs.data_ = std::move(data);
    return gs;
}

struct AsymptoticFit {
    double c_Q = 0;
    double residual = 0;  // max relative deviation of the fitted model on the window
    double r_a = 0;
    double r_b = 0;
};

/// Least-squares fit of q(r) r^{(d-1)/2} e^r over [r_a, r_b] by c_Q (1 + a_1/r + a_2/r^2) plus the
/// leading nonlinear tail correction proportional to q^{p-1}.
inline AsymptoticFit asymptotic_constant(const GroundState& gs, double r_a = -1, double r_b = -1,
                                         double threshold = 1e-4) {
    if (r_a < 0) r_a = gs.r_max() - 10;
    if (r_b < 0) r_b = gs.r_max() - 2;
    const int d = gs.d();
    const double h = gs.mesh_step();
    const int stride = std::max(1, static_cast<int>(std::lround(0.01 / h)));
    std::vector<double> rs, gv;
    for (std::size_t i = 0; i < gs.sample_count(); i += stride) {
        double r = gs.sample_r(i);
        if (r < r_a - 1e-12 || r > r_b + 1e-12) continue;
        rs.push_back(r);
        gv.push_back(gs.sample_q(i) * std::pow(r, 0.5 * (d - 1)) * std::exp(r));
    }
    auto nonlinear = [&](double r) { return std::pow(std::pow(r, -0.5 * (d - 1)) * std::exp(-r), gs.p() - 1); };
    const double nl_scale = nonlinear(r_a);
    const bool with_nl = nl_scale > 1e-12;
    const int powers = d == 1 ? 1 : 3;
    const int basis = powers + (with_nl ? 1 : 0);
    Eigen::MatrixXd A(rs.size(), basis);
    Eigen::VectorXd b(rs.size());
    for (std::size_t k = 0; k < rs.size(); ++k) {
        for (int j = 0; j < powers; ++j) A(k, j) = std::pow(rs[k], -j);
        if (with_nl) A(k, powers) = nonlinear(rs[k]) / nl_scale;
        b(k) = gv[k];
    }
    Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    AsymptoticFit fit;
    fit.c_Q = coef(0);
    fit.r_a = r_a;
    fit.r_b = r_b;
    for (std::size_t k = 0; k < rs.size(); ++k) {
        double model = (A.row(k) * coef)(0);
        fit.residual = std::max(fit.residual, std::abs(model - gv[k]) / std::abs(gv[k]));
    }
    if (rs.size() < static_cast<std::size_t>(2 * basis) || !(fit.c_Q > 0) || fit.residual > threshold)
        throw WindowTooNoisy("relative fit residual " + std::to_string(fit.residual));
    return fit;
}

struct StructureConstants {
    double c_Q = 0;
    double I_Q = 0;
    double c1 = 0;
    double c2 = 0;
    double C_p = 0;
    double c = 0;
    double mass = 0;  // ||Q||^2
};

/// Scalar constants from quadrature of the Cartesian extension of the profile.
inline StructureConstants structure_constants(const GroundState& gs, double quad_tol = 1e-10) {
    const int d = gs.d();
    const double p = gs.p();
    const double alpha = 2.0 / (p - 1.0);
    const double R = gs.r_max() + 20.0;
    StructureConstants sc;
    sc.c_Q = asymptotic_constant(gs).c_Q;

    auto radial = [&](auto&& f) {
        return sphere_area(d) * integrate_gk(
                                    [&](double r) {
                                        RadialValue v = gs.eval(r);
                                        return f(r, v) * std::pow(r, d - 1);
                                    },
                                    0.0, R, quad_tol, 1e-300);
    };
    sc.mass = radial([](double, const RadialValue& v) { return v.q * v.q; });
    sc.c1 = radial([&](double r, const RadialValue& v) { return (alpha * v.q + r * v.dq) * v.q; });

    // Cartesian pieces; the integrands are even in the transverse variable.
    const double R_I = std::min(40.0 / (p - 1.0) + 10.0, 700.0);
    if (d == 1) {
        sc.c2 = 2.0 * integrate_gk([&](double y) { RadialValue v = gs.eval(y); return -y * v.q * v.dq; },
                                   0.0, R, quad_tol, 1e-300);
        auto iq = [&](double x) { return std::pow(gs.value(x), p) * std::exp(-x); };
        sc.I_Q = integrate_gk(iq, -R_I, 0.0, quad_tol, 1e-300) + integrate_gk(iq, 0.0, R, quad_tol, 1e-300);
    } else if (d == 2) {
        auto c2_inner = [&](double y1) {
            return 2.0 * integrate_gk(
                             [&](double y2) {
                                 double r = std::hypot(y1, y2);
                                 RadialValue v = gs.eval(r);
                                 return r > 0 ? -y1 * y1 * v.q * v.dq / r : 0.0;
                             },
                             0.0, R, quad_tol, 1e-300);
        };
        sc.c2 = 2.0 * integrate_gk(c2_inner, 0.0, R, quad_tol, 1e-300);
        auto iq_inner = [&](double x1) {
            return std::exp(-x1) * 2.0 *
                   integrate_gk([&](double x2) { return std::pow(gs.value(std::hypot(x1, x2)), p); }, 0.0, R,
                                quad_tol, 1e-300);
        };
        sc.I_Q = integrate_gk(iq_inner, -R_I, 0.0, quad_tol, 1e-300) +
                 integrate_gk(iq_inner, 0.0, R, quad_tol, 1e-300);
    } else {
        // Higher dimensions fall back on the symmetric reductions of the same integrals.
        sc.c2 = -radial([](double r, const RadialValue& v) { return r * v.q * v.dq; }) / d;
        auto inner = [&](double x1) {
            double w = sphere_area(d - 1);
            return std::exp(-x1) * w *
                   integrate_gk(
                       [&](double rho) { return std::pow(gs.value(std::hypot(x1, rho)), p) * std::pow(rho, d - 2); },
                       0.0, R, quad_tol, 1e-300);
        };
        sc.I_Q = integrate_gk(inner, -R_I, 0.0, quad_tol, 1e-300) + integrate_gk(inner, 0.0, R, quad_tol, 1e-300);
    }
    sc.C_p = sc.c_Q * sc.I_Q;
    sc.c = 2.0 * sc.C_p / sc.c2;
    return sc;
}

}  // namespace logsol
