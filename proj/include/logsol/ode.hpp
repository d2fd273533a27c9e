#pragma once

#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "logsol/errors.hpp"

namespace logsol {

struct OdeOptions {
    double abs_tol = 1e-12;
    double rel_tol = 1e-12;
    double h_initial = 1e-3;
    double h_max = std::numeric_limits<double>::infinity();
    long max_steps = 10'000'000;
};

// Adaptive Runge-Kutta-Fehlberg 7(8) integration from t0 toward t1 (either direction).
// Every node in `outputs` (monotone in the direction of integration) is hit exactly and
// reported to `observe(t, x)`; accepted intermediate steps are reported to `monitor(t, x)`.
// Either callback may return false to stop early. Returns the time reached.
template <class State, class System, class Observe, class Monitor>
double integrate_rk78(System&& system, State& x, double t0, double t1,
                      const std::vector<double>& outputs, const OdeOptions& opt,
                      Observe&& observe, Monitor&& monitor) {
    namespace odeint = boost::numeric::odeint;
    auto stepper = odeint::make_controlled(opt.abs_tol, opt.rel_tol,
                                           odeint::runge_kutta_fehlberg78<State>());
    const double dir = t1 >= t0 ? 1.0 : -1.0;
    double t = t0;
    double h = dir * std::min(std::abs(opt.h_initial), std::abs(opt.h_max));
    std::size_t next = 0;
    while (next < outputs.size() && dir * (outputs[next] - t) < 0) ++next;
    if (next < outputs.size() && outputs[next] == t) {
        if (!observe(t, x)) return t;
        ++next;
    }
    long steps = 0;
    while (dir * (t1 - t) > 0) {
        if (++steps > opt.max_steps) throw StepFailure("step budget exhausted at t = " + std::to_string(t));
        double target = t1;
        if (next < outputs.size() && dir * (outputs[next] - t1) < 0) target = outputs[next];
        double h_try = h;
        if (std::abs(h_try) > opt.h_max) h_try = dir * opt.h_max;
        bool clamped = false;
        if (dir * (t + h_try - target) >= 0) {
            h_try = target - t;
            clamped = true;
        }
        double t_local = t;
        double h_local = h_try;
        auto res = stepper.try_step(system, x, t_local, h_local);
        if (res == odeint::fail) {
            h = h_local;
            if (std::abs(h) < 1e-15 * std::max(1.0, std::abs(t)))
                throw StepFailure("step size underflow at t = " + std::to_string(t));
            continue;
        }
        t = clamped ? target : t_local;
        if (!clamped || std::abs(h_local) > std::abs(h)) h = h_local;
        if (!monitor(t, x)) return t;
        if (clamped && next < outputs.size() && t == outputs[next]) {
            ++next;
            if (!observe(t, x)) return t;
        }
    }
    return t;
}

template <class State, class System, class Observe>
double integrate_rk78(System&& system, State& x, double t0, double t1,
                      const std::vector<double>& outputs, const OdeOptions& opt,
                      Observe&& observe) {
    return integrate_rk78(system, x, t0, t1, outputs, opt, observe,
                          [](double, const State&) { return true; });
}

}  // namespace logsol
