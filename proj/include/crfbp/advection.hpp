#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "field_series.hpp"
#include "model.hpp"
#include "series.hpp"

namespace crfbp {

// per-coordinate interval enclosure: constant term +- remaining l1 mass
struct L1Box {
    std::array<double, 4> lo{}, hi{};

    bool contains(const State& s, double slack = 0) const {
        for (int k = 0; k < 4; ++k)
            if (s[k] < lo[k] - slack || s[k] > hi[k] + slack) return false;
        return true;
    }
};

template <class Series>
L1Box make_box(const Series& S) {
    L1Box b;
    for (int k = 0; k < 4; ++k) {
        const double* a = S.coord(k);
        const size_t len = S.c.size() / S.dim;
        double r = 0;
        for (size_t i = 1; i < len; ++i) r += std::abs(a[i]);
        b.lo[k] = a[0] - r;
        b.hi[k] = a[0] + r;
    }
    return b;
}

inline bool box_overlap(const L1Box& a, const L1Box& b, double margin = 1e-6) {
    for (int k = 0; k < 4; ++k)
        if (a.hi[k] + margin < b.lo[k] - margin || b.hi[k] + margin < a.lo[k] - margin) return false;
    return true;
}

// Where an arc sits on the local-manifold boundary: the arc parameter s maps
// to the angle angle_center + angle_halfwidth * s on the unit circle.
struct Lineage {
    double angle_center = 0;
    double angle_halfwidth = 0;
    double elapsed = 0;  // |time| flowed since leaving the local boundary
    int copy = 0;        // symmetry copy (0 = computed sector)
    std::vector<std::array<double, 2>> history;  // (center, radius) subdivisions

    double angle(double s) const { return angle_center + angle_halfwidth * s; }

    Lineage restricted(double center, double radius) const {
        Lineage out = *this;
        out.angle_center = angle(center);
        out.angle_halfwidth = angle_halfwidth * radius;
        out.history.push_back({center, radius});
        return out;
    }
};

struct BoundaryArc {
    int id = -1;
    int generation = 0;
    int parent_chart = -1;
    int child_chart = -1;
    series::Taylor1<double> gamma;
    Lineage lineage;
    L1Box box;

    State eval(double s) const {
        State out{};
        for (int k = 0; k < 4; ++k) out[k] = gamma.eval(k, s);
        return out;
    }
    State eval_ds(double s) const {
        State out{};
        for (int k = 0; k < 4; ++k) out[k] = gamma.eval_ds(k, s);
        return out;
    }
};

// Gamma(s,t): rows are time orders, columns space orders
struct Chart {
    int id = -1;
    int generation = 0;
    int parent_arc = -1;
    double tau = 0;
    series::Taylor2<double> G;
    Lineage lineage;
    L1Box box;

    State eval(double s, double t) const {
        State out{};
        for (int k = 0; k < 4; ++k) out[k] = G.eval(k, t, s);
        return out;
    }
    State eval_ds(double s, double t) const {
        State out{};
        for (int k = 0; k < 4; ++k) out[k] = G.eval_dv(k, t, s);
        return out;
    }
    State eval_dt(double s, double t) const {
        State out{};
        for (int k = 0; k < 4; ++k) out[k] = G.eval_du(k, t, s);
        return out;
    }
    double time_at(double t) const { return lineage.elapsed + std::abs(tau) * t; }
};

namespace detail {

// order-by-order Taylor integration: a_{m+1,n} = tau [f∘Γ]_{m,n} / (m+1)
inline series::Taylor2<double> taylor_flow(const series::Taylor1<double>& gamma, double tau, int M,
                                           const PrimaryConfig& cfg) {
    const int N = gamma.N;
    series::Taylor2<double> G(4, M, N);
    for (int k = 0; k < 4; ++k)
        for (int n = 0; n < N; ++n) G(k, 0, n) = gamma(k, n);
    FieldComposer<double> fc(cfg, M, N);
    for (int m = 0; m + 1 < M; ++m) {
        for (int n = 0; n < N; ++n) fc.compute_at(G, m, n);
        const double c = tau / (m + 1);
        for (int k = 0; k < 4; ++k)
            for (int n = 0; n < N; ++n) G(k, m + 1, n) = c * fc.f(k, m, n);
    }
    return G;
}

inline double row_norm(const series::Taylor2<double>& G, int m) {
    double best = 0;
    for (int k = 0; k < G.dim; ++k) {
        double s = 0;
        for (int n = 0; n < G.N; ++n) s += std::abs(G(k, m, n));
        best = std::max(best, s);
    }
    return best;
}

// time rows scale by c^m under t -> c t
inline void rescale_time(series::Taylor2<double>& G, double c) {
    double f = 1;
    for (int m = 0; m < G.M; ++m, f *= c)
        for (int k = 0; k < G.dim; ++k)
            for (int n = 0; n < G.N; ++n) G(k, m, n) *= f;
}

inline bool chart_clear_of_primaries(const series::Taylor2<double>& G, const PrimaryConfig& cfg,
                                     int samples = 9) {
    for (int i = 0; i < samples; ++i)
        for (int j = 0; j < samples; ++j) {
            const double t = double(i) / (samples - 1), s = -1 + 2.0 * j / (samples - 1);
            const double x = G.eval(0, t, s), y = G.eval(2, t, s);
            if (!std::isfinite(x) || !std::isfinite(y)) return false;
            for (int p = 0; p < 3; ++p)
                if (primary_distance(cfg, p, x, y) < cfg.r_min) return false;
        }
    return true;
}

}  // namespace detail

struct AdvectionOptions {
    int M = 40;                     // time coefficients
    double threshold = 1e-16;       // l1 bound on the last time row
    double tau_min = 1e-12;
    int max_halvings = 20;
    int max_trials = 40;
};

namespace detail {

// Largest trial * 2^-k (k < max_trials) whose last time row is below the
// threshold, given that row's norm a at the trial step. The row scales
// exactly as |τ|^(M-1), so the halving search needs no re-advection.
inline double geometric_step(double trial, double a, const AdvectionOptions& opt) {
    if (!(a > opt.threshold)) return trial;
    const double exact = trial * std::pow(opt.threshold / a, 1.0 / (opt.M - 1));
    const int k = int(std::ceil(std::log2(trial / exact) - 1e-12));
    if (k >= opt.max_trials) return 0;
    return std::ldexp(trial, -k);
}

}  // namespace detail

// Γ(s,t) ≈ Φ(γ(s), τ t) on [-1,1] x [0,1]
inline Chart advect_arc(const BoundaryArc& arc, double tau, const PrimaryConfig& cfg,
                        const AdvectionOptions& opt = {}) {
    Chart ch;
    ch.parent_arc = arc.id;
    ch.generation = arc.generation + 1;
    ch.tau = tau;
    try {
        ch.G = detail::taylor_flow(arc.gamma, tau, opt.M, cfg);
    } catch (const SingularityError&) {
        throw StepRejected("chart approaches a primary");
    }
    if (!series::all_finite(ch.G.c)) throw StepRejected("coefficient overflow during advection");
    if (!detail::chart_clear_of_primaries(ch.G, cfg)) throw StepRejected("chart approaches a primary");
    ch.lineage = arc.lineage;
    ch.box = make_box(ch.G);
    return ch;
}

// geometric halving search from min(1, cap)
inline double choose_timestep(const BoundaryArc& arc, double sign, double cap, const PrimaryConfig& cfg,
                              const AdvectionOptions& opt = {}) {
    double trial = std::min(1.0, cap);
    for (int h = 0; h <= opt.max_halvings; ++h) {
        series::Taylor2<double> G;
        try {
            G = detail::taylor_flow(arc.gamma, sign * trial, opt.M, cfg);
        } catch (const SingularityError&) {
            throw StepRejected("arc within r_min of a primary");
        }
        if (series::all_finite(G.c)) {
            const double a = detail::row_norm(G, opt.M - 1);
            const double tau = detail::geometric_step(trial, a, opt);
            if (tau < opt.tau_min) throw StallError("no admissible time step");
            return sign * tau;
        }
        trial *= 0.5;
    }
    throw StallError("advection overflows at every trial step");
}

// Choose the step and advect in one pass: the trial chart is rescaled to the
// accepted step, then halved while it fails the a-posteriori checks.
inline Chart advect_adaptive(const BoundaryArc& arc, double sign, double cap, const PrimaryConfig& cfg,
                             const AdvectionOptions& opt = {}) {
    double trial = std::min(1.0, cap);
    for (int h = 0; h <= opt.max_halvings; ++h, trial *= 0.5) {
        series::Taylor2<double> G;
        try {
            G = detail::taylor_flow(arc.gamma, sign * trial, opt.M, cfg);
        } catch (const SingularityError&) {
            throw StepRejected("arc within r_min of a primary");
        }
        if (!series::all_finite(G.c)) continue;
        const double a = detail::row_norm(G, opt.M - 1);
        double tau = detail::geometric_step(trial, a, opt);
        detail::rescale_time(G, tau / trial);
        for (int r = 0; r <= opt.max_halvings; ++r) {
            if (tau < opt.tau_min) throw StallError("no admissible time step");
            if (series::all_finite(G.c) && detail::chart_clear_of_primaries(G, cfg)) {
                Chart ch;
                ch.parent_arc = arc.id;
                ch.generation = arc.generation + 1;
                ch.tau = sign * tau;
                ch.G = std::move(G);
                ch.lineage = arc.lineage;
                ch.box = make_box(ch.G);
                return ch;
            }
            detail::rescale_time(G, 0.5);
            tau *= 0.5;
        }
        throw StallError("step rejected at every halving");
    }
    throw StallError("advection overflows at every trial step");
}

// Γ(·,1): b_n = Σ_m a_{m,n}
inline BoundaryArc evaluate_edge(const Chart& ch) {
    BoundaryArc arc;
    arc.generation = ch.generation;
    arc.parent_chart = ch.id;
    arc.gamma = series::Taylor1<double>(4, ch.G.N);
    for (int k = 0; k < 4; ++k)
        for (int n = 0; n < ch.G.N; ++n) {
            double s = 0;
            for (int m = ch.G.M - 1; m >= 0; --m) s += ch.G(k, m, n);
            arc.gamma(k, n) = s;
        }
    arc.lineage = ch.lineage;
    arc.lineage.elapsed = ch.lineage.elapsed + std::abs(ch.tau);
    arc.box = make_box(arc.gamma);
    return arc;
}

}  // namespace crfbp
