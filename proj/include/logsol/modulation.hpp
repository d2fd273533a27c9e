#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "logsol/ansatz.hpp"
#include "logsol/errors.hpp"
#include "logsol/grid.hpp"
#include "logsol/groundstate.hpp"

namespace logsol {

enum class Linearized { plus, minus };

/// L+ f = -Delta f + f - p Q^{p-1} f and L- f = -Delta f + f - Q^{p-1} f, Q centered at the origin.
inline ComplexField apply_linearized(Linearized which, const ComplexField& f, const GroundState& gs) {
    const double c = which == Linearized::plus ? gs.p() : 1.0;
    ComplexField out = laplacian(f);
    for (std::size_t n = 0; n < f.size(); ++n) {
        double q = gs.value(norm(f.grid.point(n)));
        out.values[n] = -out.values[n] + (1.0 - c * std::pow(q, gs.p() - 1)) * f.values[n];
    }
    return out;
}

/// <L+ Re eta, Re eta> + <L- Im eta, Im eta>.
inline double quadratic_form(const ComplexField& eta, const GroundState& gs) {
    ComplexField re(eta.grid), im(eta.grid);
    for (std::size_t n = 0; n < eta.size(); ++n) {
        re.values[n] = eta.values[n].real();
        im.values[n] = eta.values[n].imag();
    }
    return inner(apply_linearized(Linearized::plus, re, gs), re) + inner(apply_linearized(Linearized::minus, im, gs), im);
}

/// Orthogonality directions around a bubble at the origin: Q, y_k Q, i Lambda Q, i d_k Q.
inline std::vector<ComplexField> orthogonality_directions(const GroundState& gs, const Grid& g) {
    const int d = g.d();
    const double alpha = 2.0 / (gs.p() - 1);
    std::vector<ComplexField> dirs;
    auto add = [&](auto&& f) { dirs.push_back(ComplexField::sample(g, f)); };
    add([&](const Vec& y) { return cplx(gs.value(norm(y)), 0.0); });
    for (int k = 0; k < d; ++k) add([&, k](const Vec& y) { return cplx(y[k] * gs.value(norm(y)), 0.0); });
    add([&](const Vec& y) {
        RadialValue v = gs.eval(norm(y));
        return cplx(0.0, alpha * v.q + norm(y) * v.dq);
    });
    for (int k = 0; k < d; ++k)
        add([&, k](const Vec& y) {
            double r = norm(y);
            return cplx(0.0, r > 0 ? gs.deriv(r) * y[k] / r : 0.0);
        });
    return dirs;
}

struct DecompResult {
    BubbleParams params;
    ComplexField eta1;     // e^{-i v_1.y} eps(y + z_1), rescaled frame
    ComplexField eps;      // rescaled eps(y) = e^{-i gamma} lambda^alpha u(lambda y) - P(y)
    ComplexField eps_lab;  // u - e^{i gamma} lambda^{-alpha} P(x / lambda)
    double eps_h1 = 0;
    std::vector<double> projections;  // <eta1, Q>, <eta1, y_k Q>, <eta1, i Lambda Q>, <eta1, i d_k Q>
    int newton_iters = 0;
    std::vector<double> step_history;  // max-norm of each Newton step
};

enum class FitMode { snapshot, tracking };

struct DecompOptions {
    FitMode mode = FitMode::snapshot;
    std::optional<Vec> v_override;  // required in tracking mode
    int max_iter = 30;
    double trust_radius = 1.0;  // bound on the first step (log lambda, z, gamma, v)
    double step_tol = 1e-13;
};

namespace detail {

// Test functions S_A(y) = e^{i v_1.y} A(y) and their gradients at one point.
struct TestValues {
    std::vector<cplx> S;
    std::vector<std::array<cplx, 2>> dS;
};

inline void test_values(const GroundState& gs, int d, double alpha, const Vec& y, const Vec& v1, bool with_grad,
                        int n_eq, TestValues& out) {
    const double r = norm(y);
    const RadialValue R = gs.eval(r);
    const Vec e = r > 0 ? (1.0 / r) * y : Vec{0.0, 0.0};
    Vec gradQ = R.dq * e;
    // Hessian of Q
    double hess[2][2];
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            double dl = j == k ? 1.0 : 0.0;
            hess[j][k] = r > 1e-8 ? R.d2q * e[j] * e[k] + R.dq / r * (dl - e[j] * e[k]) : R.d2q * dl;
        }
    if (d == 1) {
        gradQ[1] = 0;
        hess[0][1] = hess[1][0] = hess[1][1] = 0;
    }
    const cplx I(0.0, 1.0);
    const double LQ = alpha * R.q + r * R.dq;
    std::vector<cplx> A(n_eq);
    std::vector<std::array<cplx, 2>> dA(n_eq);
    int m = 0;
    A[m] = R.q;
    dA[m] = {gradQ[0], gradQ[1]};
    ++m;
    for (int k = 0; k < d; ++k, ++m) {
        A[m] = y[k] * R.q;
        for (int j = 0; j < 2; ++j) dA[m][j] = (j == k ? R.q : 0.0) + y[k] * gradQ[j];
    }
    A[m] = I * LQ;
    for (int j = 0; j < 2; ++j) dA[m][j] = I * (e[j] * ((alpha + 1) * R.dq + r * R.d2q));
    if (d == 1) dA[m][1] = 0;
    ++m;
    for (int k = 0; k < d && m < n_eq; ++k, ++m) {
        A[m] = I * gradQ[k];
        for (int j = 0; j < 2; ++j) dA[m][j] = I * hess[j][k];
    }
    const cplx ph = std::polar(1.0, dot(v1, y));
    out.S.resize(n_eq);
    out.dS.resize(n_eq);
    for (int a = 0; a < n_eq; ++a) {
        out.S[a] = ph * A[a];
        if (with_grad)
            for (int j = 0; j < 2; ++j) out.dS[a][j] = ph * (I * v1[j] * A[a] + dA[a][j]);
    }
}

inline double wrap_phase(double g) {
    double w = std::remainder(g, 2 * std::numbers::pi);
    if (w <= -std::numbers::pi) w += 2 * std::numbers::pi;
    return w;
}

}  // namespace detail

/// Rescaled error on the grid Grid(d, N, L / lambda): samples of e^{-i gamma} lambda^alpha eps_lab.
inline ComplexField rescale_error(const ComplexField& eps_lab, const BubbleParams& q, double p) {
    const Grid& g = eps_lab.grid;
    Grid gr = make_grid(g.d(), g.N(), g.L() / q.lambda);
    ComplexField e(gr, eps_lab.values);
    e *= std::polar(std::pow(q.lambda, 2.0 / (p - 1)), -q.gamma);
    return e;
}

/// eta_1(y) = e^{-i v_1.y} eps(y + z_1).
inline ComplexField recentered_error(const ComplexField& eps, const BubbleParams& q) {
    ComplexField eta = translate(eps, -1.0 * q.z_k(1));
    const Vec v1 = q.v_k(1);
    for (std::size_t n = 0; n < eta.size(); ++n) eta.values[n] *= std::polar(1.0, -dot(v1, eta.grid.point(n)));
    return eta;
}

/// Fits (lambda, z, gamma[, v]) so that eta_1 is orthogonal to Q, y Q, i Lambda Q (and i grad Q in
/// snapshot mode). Newton iteration with the analytic Jacobian.
inline DecompResult decompose(const ComplexField& u, const BubbleParams& guess, const GroundState& gs,
                              const DecompOptions& opt = {}) {
    const Grid& g = u.grid;
    const int d = g.d();
    if (d != gs.d()) throw InvalidConfig("field and ground state dimensions differ");
    const double p = gs.p();
    const double alpha = 2.0 / (p - 1);
    const bool snap = opt.mode == FitMode::snapshot;
    if (!snap && !opt.v_override) throw InvalidConfig("tracking mode requires v_override");
    const int n_eq = snap ? 2 + 2 * d : 2 + d;
    const int n_all = 2 + 2 * d;
    const double dV = g.cell_volume();
    const cplx I(0.0, 1.0);

    BubbleParams q = guess;
    if (!snap) q.v = *opt.v_override;
    if (d == 1) q.z[1] = q.v[1] = 0.0;

    DecompResult res;
    detail::TestValues tv;
    Eigen::VectorXd F(n_eq);
    Eigen::MatrixXd J(n_eq, n_eq);
    bool converged = false;
    double prev_step = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iter; ++it) {
        detail::check_grid_room(q, g);
        F.setZero();
        J.setZero();
        const double lam = q.lambda;
        const cplx pref = std::polar(std::pow(lam, alpha - d), -q.gamma);
        const cplx upre = std::polar(std::pow(lam, -alpha), q.gamma);
        const Vec z1 = q.z_k(1), v1 = q.v_k(1);
        for (std::size_t n = 0; n < g.size(); ++n) {
            const Vec x = g.point(n);
            const Vec Y = (1.0 / lam) * x;
            // Ansatz and its parameter derivatives.
            cplx P = 0, LP = 0;
            std::array<cplx, 2> dPz{0.0, 0.0}, dPv{0.0, 0.0};
            for (int k = 1; k <= 2; ++k) {
                const double sg = k == 1 ? 0.5 : -0.5;
                const Vec yk = Y - q.z_k(k), vk = q.v_k(k);
                const double r = norm(yk);
                const RadialValue R = gs.eval(r);
                const cplx ph = std::polar(1.0, dot(vk, yk));
                const cplx b = ph * R.q;
                P += b;
                std::array<cplx, 2> grad;
                for (int j = 0; j < d; ++j) {
                    double gq = r > 0 ? R.dq * yk[j] / r : 0.0;
                    grad[j] = ph * (I * vk[j] * R.q + gq);
                    dPz[j] += -sg * grad[j];
                    dPv[j] += sg * I * yk[j] * b;
                }
                for (int j = 0; j < d; ++j) LP += Y[j] * grad[j];
            }
            LP += alpha * P;
            const cplx U = upre * P;
            const cplx eps = u.values[n] - U;
            // Columns: log lambda, z_j, gamma, v_j.
            std::array<cplx, 6> dU{};
            dU[0] = -upre * LP;
            for (int j = 0; j < d; ++j) dU[1 + j] = upre * dPz[j];
            dU[1 + d] = I * U;
            if (snap)
                for (int j = 0; j < d; ++j) dU[2 + d + j] = upre * dPv[j];

            const Vec y = Y - z1;
            detail::test_values(gs, d, alpha, y, v1, true, n_eq, tv);
            for (int a = 0; a < n_eq; ++a) {
                const cplx T = pref * std::conj(tv.S[a]);
                F[a] += (eps * T).real();
                std::array<cplx, 6> dT{};
                cplx ydS = 0;
                for (int j = 0; j < d; ++j) ydS += (y[j] + z1[j]) * tv.dS[a][j];
                dT[0] = pref * std::conj((alpha - d) * tv.S[a] - ydS);
                for (int j = 0; j < d; ++j) dT[1 + j] = pref * std::conj(-0.5 * tv.dS[a][j]);
                dT[1 + d] = -I * T;
                if (snap)
                    for (int j = 0; j < d; ++j) dT[2 + d + j] = pref * std::conj(0.5 * I * y[j] * tv.S[a]);
                for (int c = 0; c < n_eq; ++c) J(a, c) += (eps * dT[c] - dU[c] * T).real();
            }
        }
        F *= dV;
        J *= dV;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        if (!(sv(n_eq - 1) > 1e-12 * sv(0)))
            throw NoConvergence("singular modulation Jacobian (condition " +
                                std::to_string(sv(0) / sv(n_eq - 1)) + ")");
        Eigen::VectorXd delta = -svd.solve(F);
        const double step = delta.cwiseAbs().maxCoeff();
        if (!std::isfinite(step)) throw NoConvergence("non-finite Newton step");
        if (it == 0 && step > opt.trust_radius)
            throw OutOfBasin("first Newton step " + fmt_sci(step) + " exceeds trust radius " +
                             fmt_sci(opt.trust_radius));
        q.lambda *= std::exp(delta[0]);
        for (int j = 0; j < d; ++j) q.z[j] += delta[1 + j];
        q.gamma += delta[1 + d];
        if (snap)
            for (int j = 0; j < d; ++j) q.v[j] += delta[2 + d + j];
        res.step_history.push_back(step);
        res.newton_iters = it + 1;
        // Converged once steps reach the tolerance or stall at the roundoff floor.
        if (step < opt.step_tol || (step < 1e-9 && step > 0.5 * prev_step)) {
            converged = true;
            break;
        }
        prev_step = step;
    }
    if (!converged) throw NoConvergence("decompose: no convergence in " + std::to_string(opt.max_iter) + " iterations");

    q.gamma = detail::wrap_phase(q.gamma);
    res.params = q;
    res.eps_lab = u - build_two_bubble(q, gs, g);
    ComplexField eps_r = rescale_error(res.eps_lab, q, p);
    res.eps = eps_r;
    res.eps_h1 = h1_norm(eps_r);
    res.eta1 = recentered_error(eps_r, q);
    auto dirs = orthogonality_directions(gs, res.eta1.grid);
    res.projections.resize(n_all);
    for (int a = 0; a < n_all; ++a) res.projections[a] = inner(res.eta1, dirs[a]);
    return res;
}

struct CoercivityReport {
    double min_ratio = 0;
    double mean_ratio = 0;
    int samples = 0;
};

/// Random smooth fields (sums of complex Gaussians), projected off span{Q, yQ, i Lambda Q, i grad Q}
/// in the real L^2 pairing; returns the minimum of the quadratic form over ||eta||_{H^1}^2.
inline CoercivityReport coercivity_check(const GroundState& gs, const Grid& g, int n_samples, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::uniform_real_distribution<double> W(0.3, 3.0);
    const int d = g.d();
    // Orthonormal basis of the projection span.
    std::vector<ComplexField> basis;
    for (auto f : orthogonality_directions(gs, g)) {
        for (const auto& b : basis) {
            double c = inner(f, b);
            for (std::size_t n = 0; n < f.size(); ++n) f.values[n] -= c * b.values[n];
        }
        double nn = l2_norm(f);
        if (nn > 1e-12) {
            f *= 1.0 / nn;
            basis.push_back(std::move(f));
        }
    }
    CoercivityReport rep;
    rep.min_ratio = std::numeric_limits<double>::infinity();
    for (int s = 0; s < n_samples; ++s) {
        const int terms = 1 + static_cast<int>(rng() % 4);
        struct Bump { Vec c; double w; cplx a; };
        std::vector<Bump> bumps;
        for (int t = 0; t < terms; ++t)
            bumps.push_back({{3.0 * U(rng), d == 2 ? 3.0 * U(rng) : 0.0}, W(rng), cplx(U(rng), U(rng))});
        ComplexField eta = ComplexField::sample(g, [&](const Vec& y) {
            cplx v = 0;
            for (const auto& b : bumps) {
                Vec r = y - b.c;
                v += b.a * std::exp(-dot(r, r) / (b.w * b.w));
            }
            return v;
        });
        for (const auto& b : basis) {
            double c = inner(eta, b);
            for (std::size_t n = 0; n < eta.size(); ++n) eta.values[n] -= c * b.values[n];
        }
        double h1 = h1_norm(eta);
        double ratio = quadratic_form(eta, gs) / (h1 * h1);
        rep.min_ratio = std::min(rep.min_ratio, ratio);
        rep.mean_ratio += ratio;
        ++rep.samples;
    }
    if (rep.samples > 0) rep.mean_ratio /= rep.samples;
    return rep;
}

struct EnergyParts {
    double W = 0;
    double H = 0;
    double J = 0;
};

/// chi(rho): 1 on [0, 1/10], 0 on [1/8, inf), quintic smoothstep in between.
inline double localization_chi(double rho) { return smoothstep_cutoff((0.1 - rho) / 0.025); }

/// W = H - J for the rescaled error eps (on its own grid) around the ansatz with parameters q.
/// The localization radius of J is log(s) * chi_radius_scale.
inline EnergyParts energy_functional(const ComplexField& eps, const BubbleParams& q, const GroundState& gs, double s,
                                     double chi_radius_scale = 1.0) {
    const Grid& g = eps.grid;
    const double p = gs.p();
    const int d = g.d();
    BubbleParams qr = q;
    qr.lambda = 1.0;
    qr.gamma = 0.0;
    ComplexField P = two_bubble_profile(qr, gs, g);
    std::vector<cplx> eh = eps.values;
    fft_forward(g, eh);
    double grad2 = 0;
    for (std::size_t n = 0; n < eh.size(); ++n) grad2 += g.k2()[n] * std::norm(eh[n]);
    grad2 *= g.cell_volume() / static_cast<double>(eh.size());
    double mass = 0, pot = 0;
    for (std::size_t n = 0; n < g.size(); ++n) {
        const cplx Pn = P[n], e = eps[n];
        const double aP = std::abs(Pn);
        mass += std::norm(e);
        pot += std::pow(std::abs(Pn + e), p + 1) - std::pow(aP, p + 1) -
               (p + 1) * std::pow(aP, p - 1) * (e * std::conj(Pn)).real();
    }
    mass *= g.cell_volume();
    pot *= g.cell_volume();
    EnergyParts out;
    out.H = 0.5 * (grad2 + mass - 2.0 / (p + 1) * pot);

    const double radius = std::log(s) * chi_radius_scale;
    ComplexField de0 = partial(eps, 0);
    ComplexField de1 = d == 2 ? partial(eps, 1) : ComplexField(g);
    for (int k = 1; k <= 2; ++k) {
        const Vec zk = q.z_k(k), vk = q.v_k(k);
        double Jk = 0;
        for (std::size_t n = 0; n < g.size(); ++n) {
            const double chi = localization_chi(norm(g.point(n) - zk) / radius);
            if (chi == 0.0) continue;
            const cplx ce = std::conj(eps[n]);
            double m = vk[0] * (de0[n] * ce).imag() + (d == 2 ? vk[1] * (de1[n] * ce).imag() : 0.0);
            Jk += m * chi;
        }
        out.J += Jk * g.cell_volume();
    }
    out.W = out.H - out.J;
    return out;
}

}  // namespace logsol
