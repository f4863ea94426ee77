#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "model.hpp"

namespace crfbp {

struct IntegratorOptions {
    double abs_tol = 1e-13;
    double rel_tol = 1e-13;
    double initial_step = 1e-3;
};

namespace detail {
namespace odeint = boost::numeric::odeint;

template <class S>
using rkf78 = odeint::runge_kutta_fehlberg78<S>;
}  // namespace detail

// reference flow map Phi(x0, t); t may be negative
inline State flow(const State& x0, double t, const PrimaryConfig& cfg,
                  const IntegratorOptions& opt = {}) {
    State x = x0;
    if (t == 0) return x;
    auto rhs = [&cfg](const State& s, State& ds, double) { ds = vector_field(s, cfg); };
    auto stepper = boost::numeric::odeint::make_controlled(opt.abs_tol, opt.rel_tol,
                                                           detail::rkf78<State>());
    boost::numeric::odeint::integrate_adaptive(stepper, rhs, x, 0.0, t,
                                               t > 0 ? opt.initial_step : -opt.initial_step);
    return x;
}

// flow plus state-transition matrix from the variational equations
inline std::pair<State, Mat4> flow_with_stm(const State& x0, double t, const PrimaryConfig& cfg,
                                            const IntegratorOptions& opt = {}) {
    using S20 = std::array<double, 20>;
    S20 z{};
    for (int i = 0; i < 4; ++i) z[i] = x0[i];
    for (int i = 0; i < 4; ++i) z[4 + 5 * i] = 1.0;
    if (t != 0) {
        auto rhs = [&cfg](const S20& s, S20& ds, double) {
            const State x{s[0], s[1], s[2], s[3]};
            const State f = vector_field(x, cfg);
            const Mat4 J = jacobian(x, cfg);
            for (int i = 0; i < 4; ++i) ds[i] = f[i];
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) {
                    double acc = 0;
                    for (int k = 0; k < 4; ++k) acc += J(r, k) * s[4 + 4 * k + c];
                    ds[4 + 4 * r + c] = acc;
                }
        };
        auto stepper = boost::numeric::odeint::make_controlled(opt.abs_tol, opt.rel_tol,
                                                               detail::rkf78<S20>());
        boost::numeric::odeint::integrate_adaptive(stepper, rhs, z, 0.0, t,
                                                   t > 0 ? opt.initial_step : -opt.initial_step);
    }
    State x{z[0], z[1], z[2], z[3]};
    Mat4 P;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) P(r, c) = z[4 + 4 * r + c];
    return {x, P};
}

// samples (t, state) at the given absolute times (monotone, starting at 0)
inline std::vector<State> flow_samples(const State& x0, const std::vector<double>& times,
                                       const PrimaryConfig& cfg,
                                       const IntegratorOptions& opt = {}) {
    std::vector<State> out;
    out.reserve(times.size());
    State x = x0;
    double t = 0;
    for (double tt : times) {
        x = flow(x, tt - t, cfg, opt);
        t = tt;
        out.push_back(x);
    }
    return out;
}

}  // namespace crfbp
