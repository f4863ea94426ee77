#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "equilibria.hpp"
#include "integrator.hpp"
#include "mining.hpp"
#include "parameterization.hpp"

namespace crfbp {

struct Homoclinic {
    int label = 0;
    double phi_u = 0, phi_s = 0;
    double T = 0;
    std::vector<State> nodes;  // interior shooting nodes x_1 .. x_{n-1}
    std::vector<double> durations;
    std::array<int, 6> winding{};  // L1, L2, L3, m1, m2, m3
    bool winding_valid = false;
    double energy = 0;
    MassParameters masses;
    double residual = 0;
    int iterations = 0;
    int rank = 0, group = 0;
    std::string status = "unrefined";

    int segments() const { return int(durations.size()); }
    bool ok() const { return status == "refined"; }
};

struct ShootingOptions {
    int segments = 10;
    double tol = 1e-12;         // stop once the residual is this small
    double accept = 1e-11;      // residual required for success
    int max_iter = 25;
    IntegratorOptions integrator{};
};

namespace detail {

inline int unknown_count(int n) { return 2 + 4 * (n - 1) + n; }

inline Eigen::VectorXd pack(const Homoclinic& h) {
    const int n = h.segments();
    Eigen::VectorXd z(unknown_count(n));
    z[0] = h.phi_u;
    z[1] = h.phi_s;
    for (int i = 0; i < n - 1; ++i)
        for (int k = 0; k < 4; ++k) z[2 + 4 * i + k] = h.nodes[i][k];
    for (int i = 0; i < n; ++i) z[2 + 4 * (n - 1) + i] = h.durations[i];
    return z;
}

inline void unpack(const Eigen::VectorXd& z, Homoclinic& h) {
    const int n = h.segments();
    h.phi_u = z[0];
    h.phi_s = z[1];
    for (int i = 0; i < n - 1; ++i)
        for (int k = 0; k < 4; ++k) h.nodes[i][k] = z[2 + 4 * i + k];
    h.T = 0;
    for (int i = 0; i < n; ++i) {
        h.durations[i] = z[2 + 4 * (n - 1) + i];
        h.T += h.durations[i];
    }
}

// F and its Jacobian; block i is Φ(x_i, d_i) - x_{i+1} with x_0 and x_n on the local boundaries
inline void shooting_system(const Homoclinic& h, const LocalManifold& Lu, const LocalManifold& Ls,
                            const IntegratorOptions& iopt, Eigen::VectorXd& F, Eigen::MatrixXd* J) {
    const int n = h.segments();
    const PrimaryConfig cfg = Lu.config();
    F.setZero(4 * n);
    if (J) J->setZero(4 * n, unknown_count(n));
    const State xs = Ls.boundary(h.phi_s);
    for (int i = 0; i < n; ++i) {
        const State start = i == 0 ? Lu.boundary(h.phi_u) : h.nodes[i - 1];
        const State target = i == n - 1 ? xs : h.nodes[i];
        State y;
        Mat4 Phi = Mat4::Identity();
        if (J) {
            std::tie(y, Phi) = flow_with_stm(start, h.durations[i], cfg, iopt);
        } else {
            y = flow(start, h.durations[i], cfg, iopt);
        }
        for (int k = 0; k < 4; ++k) F[4 * i + k] = y[k] - target[k];
        if (!J) continue;
        const int row = 4 * i;
        if (i == 0) {
            const State du = Lu.boundary_tangent(h.phi_u);
            for (int r = 0; r < 4; ++r) {
                double acc = 0;
                for (int c = 0; c < 4; ++c) acc += Phi(r, c) * du[c];
                (*J)(row + r, 0) = acc;
            }
        } else {
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) (*J)(row + r, 2 + 4 * (i - 1) + c) = Phi(r, c);
        }
        if (i == n - 1) {
            const State ds = Ls.boundary_tangent(h.phi_s);
            for (int r = 0; r < 4; ++r) (*J)(row + r, 1) = -ds[r];
        } else {
            for (int r = 0; r < 4; ++r) (*J)(row + r, 2 + 4 * i + r) = -1.0;
        }
        const State f = vector_field(y, cfg);
        for (int r = 0; r < 4; ++r) (*J)(row + r, 2 + 4 * (n - 1) + i) = f[r];
    }
}

inline double wrap_angle(double a) {
    const double two_pi = 2 * std::numbers::pi;
    a = std::fmod(a, two_pi);
    return a < 0 ? a + two_pi : a;
}

}  // namespace detail

inline double shooting_residual(const Homoclinic& h, const LocalManifold& Lu, const LocalManifold& Ls,
                                const IntegratorOptions& iopt = {}) {
    Eigen::VectorXd F;
    detail::shooting_system(h, Lu, Ls, iopt, F, nullptr);
    return F.norm();
}

// Minimum-norm Newton on the underdetermined shooting system; the
// durations absorb the slide of interior nodes along the flow.
inline Homoclinic newton_shooting(Homoclinic h, const LocalManifold& Lu, const LocalManifold& Ls,
                                  const ShootingOptions& opt = {}) {
    h.masses = Lu.masses;
    h.label = Lu.eq.label;
    h.iterations = 0;
    Eigen::VectorXd z = detail::pack(h), F;
    Eigen::MatrixXd J;
    double res = 0;
    try {
        for (;;) {
            detail::shooting_system(h, Lu, Ls, opt.integrator, F, &J);
            res = F.norm();
            if (!std::isfinite(res) || res > 1.0) {
                h.residual = res;
                h.status = "failed: shooting residual diverged";
                return h;
            }
            if (res <= opt.tol || h.iterations >= opt.max_iter) break;
            const Eigen::VectorXd dz = J.completeOrthogonalDecomposition().solve(-F);
            z += dz;
            detail::unpack(z, h);
            ++h.iterations;
            for (double d : h.durations)
                if (!(d > 0)) {
                    h.residual = res;
                    h.status = "failed: non-positive segment duration";
                    return h;
                }
            // converged to the integrator floor
            if (dz.norm() < 1e-13) {
                detail::shooting_system(h, Lu, Ls, opt.integrator, F, nullptr);
                res = F.norm();
                break;
            }
        }
    } catch (const NumericalError& e) {
        h.residual = res;
        h.status = std::string("failed: ") + e.what();
        return h;
    }
    h.residual = res;
    h.phi_u = detail::wrap_angle(h.phi_u);
    h.phi_s = detail::wrap_angle(h.phi_s);
    h.energy = jacobi_integral(Lu.boundary(h.phi_u), Lu.config());
    h.status = res <= opt.accept ? "refined" : "failed: residual above tolerance";
    return h;
}

// initial shooting data from a mined candidate
inline Homoclinic homoclinic_guess(const IntersectionCandidate& c, const LocalManifold& Lu, int n = 10) {
    if (n < 1) throw ConfigurationError("at least one shooting segment is required");
    Homoclinic h;
    h.label = Lu.eq.label;
    h.masses = Lu.masses;
    h.phi_u = c.angle_u;
    h.phi_s = c.angle_s;
    const double T = c.connection_time();
    if (!(T > 0)) throw ConfigurationError("candidate has no positive connection time");
    const PrimaryConfig cfg = Lu.config();
    const double dt = T / n;
    State x = flow(c.point, -c.t_u + dt, cfg);
    for (int i = 1; i < n; ++i) {
        h.nodes.push_back(x);
        if (i + 1 < n) x = flow(x, dt, cfg);
    }
    h.durations.assign(n, dt);
    h.T = T;
    return h;
}

inline Homoclinic refine(const IntersectionCandidate& c, const LocalManifold& Lu, const LocalManifold& Ls,
                         const ShootingOptions& opt = {}) {
    return newton_shooting(homoclinic_guess(c, Lu, opt.segments), Lu, Ls, opt);
}

// same orbit with a different number of segments
inline Homoclinic resample(const Homoclinic& h, const LocalManifold& Lu, int n) {
    Homoclinic out = h;
    out.nodes.clear();
    const PrimaryConfig cfg = Lu.config();
    const double dt = h.T / n;
    State x = flow(Lu.boundary(h.phi_u), dt, cfg);
    for (int i = 1; i < n; ++i) {
        out.nodes.push_back(x);
        if (i + 1 < n) x = flow(x, dt, cfg);
    }
    out.durations.assign(n, dt);
    return out;
}

// R^r P(z) = P(c z) for an equilibrium fixed by the rotation; returns arg c
inline double rotation_phase(const LocalManifold& L, int r) {
    const cvec4 Rxi = symmetry_rotation(r).cast<cplx>() * L.xi;
    return std::arg(L.xi.dot(Rxi));
}

inline Homoclinic rotate_homoclinic(const Homoclinic& h, const LocalManifold& Lu, const LocalManifold& Ls, int r) {
    Homoclinic out = h;
    const Mat4 R = symmetry_rotation(r);
    for (auto& x : out.nodes) x = apply_matrix(R, x);
    out.phi_u = detail::wrap_angle(h.phi_u + rotation_phase(Lu, r));
    out.phi_s = detail::wrap_angle(h.phi_s + rotation_phase(Ls, r));
    return out;
}

// The same orbit against rescaled local manifolds: P_c(z) = P(c z) moves the
// boundary along the conjugacy flow by log(c) / Re λ on each side.
inline Homoclinic transfer_scaling(const Homoclinic& h, const LocalManifold& Lu, const LocalManifold& Ls,
                                   const LocalManifold& Lu_new, const LocalManifold& Ls_new,
                                   const ShootingOptions& opt = {}) {
    const double tu = std::log(Lu_new.scale / Lu.scale) / Lu.lambda.real();
    const double ts = std::log(Ls_new.scale / Ls.scale) / Ls.lambda.real();
    Homoclinic g = h;
    g.phi_u = h.phi_u + Lu.lambda.imag() * tu;
    g.phi_s = h.phi_s + Ls.lambda.imag() * ts;
    g.T = h.T - tu + ts;
    if (!(g.T > 0)) {
        g.status = "failed: rescaled boundaries overlap along the orbit";
        return g;
    }
    return newton_shooting(resample(g, Lu_new, h.segments()), Lu_new, Ls_new, opt);
}

// ---- winding ----

struct WindingOptions {
    double max_increment = 0.1;
    double min_distance = 1e-6;
    double chord_clearance = 1e-3;
    double base_step = 0.01;
};

namespace detail {

struct WindingAccumulator {
    std::array<double, 2> centers[6];
    double total[6] = {0, 0, 0, 0, 0, 0};
    double min_distance;

    double angle(int c, double x, double y) const { return std::atan2(y - centers[c][1], x - centers[c][0]); }

    void check(double x, double y) const {
        for (int c = 0; c < 6; ++c)
            if (std::hypot(x - centers[c][0], y - centers[c][1]) < min_distance)
                throw WindingUndefined("orbit passes too close to a winding center");
    }

    static double increment(double a, double b) {
        double d = b - a;
        while (d > std::numbers::pi) d -= 2 * std::numbers::pi;
        while (d < -std::numbers::pi) d += 2 * std::numbers::pi;
        return d;
    }

    double max_step(double x0, double y0, double x1, double y1) const {
        double m = 0;
        for (int c = 0; c < 6; ++c) m = std::max(m, std::abs(increment(angle(c, x0, y0), angle(c, x1, y1))));
        return m;
    }

    void add(double x0, double y0, double x1, double y1) {
        for (int c = 0; c < 6; ++c) total[c] += increment(angle(c, x0, y0), angle(c, x1, y1));
    }
};

inline double segment_distance(const std::array<double, 2>& p, double x0, double y0, double x1, double y1) {
    const double dx = x1 - x0, dy = y1 - y0;
    const double L2 = dx * dx + dy * dy;
    double t = L2 > 0 ? ((p[0] - x0) * dx + (p[1] - y0) * dy) / L2 : 0;
    t = std::clamp(t, 0.0, 1.0);
    return std::hypot(p[0] - x0 - t * dx, p[1] - y0 - t * dy);
}

// closes the loop between the equilibrium and a boundary point
inline void add_closure(WindingAccumulator& acc, const LocalManifold& L, double phi, bool outward,
                        const WindingOptions& opt) {
    const State e = L.equilibrium_state(), b = L.boundary(phi);
    bool clear = true;
    for (int c = 0; c < 6; ++c)
        if (segment_distance(acc.centers[c], e[0], e[2], b[0], b[2]) < opt.chord_clearance) clear = false;
    if (clear) {
        if (outward)
            acc.add(e[0], e[2], b[0], b[2]);
        else
            acc.add(b[0], b[2], e[0], e[2]);
        return;
    }
    // radial trace through the parameterization
    std::vector<State> pts;
    const int K = 400;
    for (int i = 0; i <= K; ++i) pts.push_back(L.eval_real(std::polar(double(i) / K, phi)));
    if (!outward) std::reverse(pts.begin(), pts.end());
    for (size_t i = 1; i < pts.size(); ++i) {
        acc.check(pts[i][0], pts[i][2]);
        acc.add(pts[i - 1][0], pts[i - 1][2], pts[i][0], pts[i][2]);
    }
}

}  // namespace detail

inline std::array<std::array<double, 2>, 6> winding_centers(const MassParameters& mp) {
    std::array<std::array<double, 2>, 6> c{};
    const auto eqs = find_equilibria(mp);
    for (int j = 1; j <= 3; ++j) {
        const auto e = find_labeled(eqs, j);
        if (!e) throw WindingUndefined("inner libration point L" + std::to_string(j) + " not found");
        c[j - 1] = {e->x, e->y};
    }
    const PrimaryConfig cfg = primary_positions(mp);
    for (int j = 0; j < 3; ++j) c[3 + j] = {cfg.px[j], cfg.py[j]};
    return c;
}

// orbit states on a mesh whose angular increments about every center stay below the bound
inline std::vector<State> dense_orbit(const Homoclinic& h, const LocalManifold& Lu,
                                      const std::array<std::array<double, 2>, 6>& centers,
                                      const WindingOptions& opt = {}) {
    const PrimaryConfig cfg = Lu.config();
    detail::WindingAccumulator acc;
    for (int c = 0; c < 6; ++c) acc.centers[c] = centers[c];
    acc.min_distance = opt.min_distance;
    std::vector<State> out;
    State x = Lu.boundary(h.phi_u);
    out.push_back(x);
    double t = 0;
    while (t < h.T) {
        double dt = std::min(opt.base_step, h.T - t);
        State y = flow(x, dt, cfg);
        while (acc.max_step(x[0], x[2], y[0], y[2]) > opt.max_increment && dt > 1e-12) {
            dt *= 0.5;
            y = flow(x, dt, cfg);
        }
        acc.check(y[0], y[2]);
        x = y;
        t += dt;
        out.push_back(x);
    }
    return out;
}

// counterclockwise loop counts about L1, L2, L3 and the three primaries
inline std::array<int, 6> winding_vector(const Homoclinic& h, const LocalManifold& Lu, const LocalManifold& Ls,
                                         const WindingOptions& opt = {}) {
    const auto centers = winding_centers(Lu.masses);
    detail::WindingAccumulator acc;
    for (int c = 0; c < 6; ++c) acc.centers[c] = centers[c];
    acc.min_distance = opt.min_distance;
    detail::add_closure(acc, Lu, h.phi_u, true, opt);
    const auto pts = dense_orbit(h, Lu, centers, opt);
    for (size_t i = 1; i < pts.size(); ++i) acc.add(pts[i - 1][0], pts[i - 1][2], pts[i][0], pts[i][2]);
    // the orbit lands on the stable boundary up to the shooting residual
    const State end = pts.back(), sb = Ls.boundary(h.phi_s);
    acc.add(end[0], end[2], sb[0], sb[2]);
    detail::add_closure(acc, Ls, h.phi_s, false, opt);
    std::array<int, 6> w{};
    for (int c = 0; c < 6; ++c) {
        const double turns = acc.total[c] / (2 * std::numbers::pi);
        if (std::abs(turns - std::round(turns)) >= 0.05)
            throw WindingUndefined("winding sum is not near an integer");
        w[c] = int(std::lround(turns));
    }
    return w;
}

// rotation by 2π/3 moves center j to j+1 within each triple
inline std::array<int, 6> permute_winding(const std::array<int, 6>& w, int r) {
    std::array<int, 6> out{};
    for (int j = 0; j < 3; ++j) {
        out[(j + r) % 3] = w[j];
        out[3 + (j + r) % 3] = w[3 + j];
    }
    return out;
}

inline bool same_winding_up_to_rotation(const std::array<int, 6>& a, const std::array<int, 6>& b) {
    for (int r = 0; r < 3; ++r)
        if (permute_winding(a, r) == b) return true;
    return false;
}

// ascending connection time; near-equal times share a group
inline std::vector<Homoclinic> order_connections(std::vector<Homoclinic> hs, double tie = 1e-6) {
    std::stable_sort(hs.begin(), hs.end(), [](const Homoclinic& a, const Homoclinic& b) { return a.T < b.T; });
    int group = 0;
    for (size_t i = 0; i < hs.size(); ++i) {
        if (i > 0 && hs[i].T - hs[i - 1].T > tie * std::max(1.0, hs[i].T)) ++group;
        hs[i].rank = int(i) + 1;
        hs[i].group = group;
    }
    return hs;
}

// ---- continuation ----

struct ContinuationControls {
    double h0 = 0.01;  // step in the (m1, m3) plane
    double h_min = 1e-5;
    double h_max = 0.02;
    double accept = 1e-10;
    double rescale_tol = 0.1;  // re-pick the manifold scaling once the heuristic drifts this far
    int max_steps = 100000;
    ShootingOptions shooting{};
    bool track_winding = false;
};

struct StepOutcome {
    MassParameters masses;
    double h = 0;
    int accepted = 0;
    int retired = 0;
    double max_residual = 0;
    std::string note;
};

struct ContinuationRun {
    std::vector<std::array<double, 2>> path;  // (m1, m3) waypoints
    std::vector<StepOutcome> steps;
    std::vector<Homoclinic> current;
    std::vector<std::string> retired;
    bool bifurcation = false;
    bool completed = false;
    std::string report;
    MassParameters reached;
};

namespace detail {

// local manifold at new masses seeded from the previous coefficients,
// with the eigenvector phase aligned to keep the angle coordinate continuous
inline LocalManifold continue_local_manifold(const LocalManifold& prev, const Equilibrium& eq,
                                             const MassParameters& mp) {
    LocalManifold L = prev;
    L.masses = mp;
    L.eq = eq;
    select_pair(eq, prev.side, L.lambda, L.xi);
    const cplx overlap = prev.xi.dot(L.xi);
    L.xi *= std::polar(1.0, -std::arg(overlap));
    const State x0 = eq.state();
    for (int k = 0; k < 4; ++k) {
        L.P(k, 0, 0) = x0[k];
        L.P(k, 1, 0) = L.scale * L.xi[k];
        L.P(k, 0, 1) = L.scale * std::conj(L.xi[k]);
    }
    RefineReport rep;
    L = newton_refine(L, L.order, {}, &rep);
    return L;
}

inline MassParameters point_on_path(const std::vector<std::array<double, 2>>& path, double s) {
    double acc = 0;
    for (size_t i = 1; i < path.size(); ++i) {
        const double len = std::hypot(path[i][0] - path[i - 1][0], path[i][1] - path[i - 1][1]);
        if (s <= acc + len || i + 1 == path.size()) {
            const double u = len > 0 ? std::clamp((s - acc) / len, 0.0, 1.0) : 1.0;
            return MassParameters::from_m1_m3(path[i - 1][0] + u * (path[i][0] - path[i - 1][0]),
                                              path[i - 1][1] + u * (path[i][1] - path[i - 1][1]));
        }
        acc += len;
    }
    return MassParameters::from_m1_m3(path.front()[0], path.front()[1]);
}

inline double path_length(const std::vector<std::array<double, 2>>& path) {
    double acc = 0;
    for (size_t i = 1; i < path.size(); ++i)
        acc += std::hypot(path[i][0] - path[i - 1][0], path[i][1] - path[i - 1][1]);
    return acc;
}

}  // namespace detail

// First-order predictor-corrector in mass space: the equilibrium and both
// local manifolds are re-solved each step and every connection is
// re-Newtoned from its secant-extrapolated shooting data.
inline ContinuationRun continue_ensemble(const std::vector<Homoclinic>& hs, const LocalManifold& Lu0,
                                         const LocalManifold& Ls0, const std::vector<std::array<double, 2>>& path,
                                         const ContinuationControls& ctl = {}) {
    ContinuationRun run;
    run.path = path;
    run.current = hs;
    run.reached = Lu0.masses;
    if (path.empty()) throw ConfigurationError("continuation path is empty");
    if (std::abs(path.front()[0] - Lu0.masses.m1) > 1e-12 || std::abs(path.front()[1] - Lu0.masses.m3) > 1e-12)
        throw ConfigurationError("continuation path does not start at the manifold masses");
    for (const auto& p : path) MassParameters::from_m1_m3(p[0], p[1]).validate();
    for (const auto& h : hs)
        if (!h.ok()) throw ConfigurationError("continuation requires refined connections");

    const double total = detail::path_length(path);
    LocalManifold Lu = Lu0, Ls = Ls0;
    std::vector<Eigen::VectorXd> prev_z(hs.size()), cur_z(hs.size());
    for (size_t i = 0; i < hs.size(); ++i) cur_z[i] = prev_z[i] = detail::pack(hs[i]);
    std::vector<bool> alive(hs.size(), true);
    double s = 0, h = std::min(ctl.h0, ctl.h_max), last_h = 0;
    int steps = 0;
    while (s < total - 1e-15 && steps < ctl.max_steps) {
        const double step = std::min(h, total - s);
        const MassParameters mp = detail::point_on_path(path, s + step);
        StepOutcome out;
        out.masses = mp;
        out.h = step;
        std::optional<Equilibrium> eq = continue_equilibrium(Lu.eq, Lu.masses, mp);
        if (!eq) {
            out.note = "equilibrium continuation failed";
        } else if (eq->stability != Stability::SaddleFocus) {
            run.bifurcation = true;
            run.report = "equilibrium loses saddle-focus stability near m1 = " + std::to_string(mp.m1);
            out.note = run.report;
            run.steps.push_back(out);
            break;
        }
        std::optional<LocalManifold> nLu, nLs;
        if (eq) {
            try {
                nLu = detail::continue_local_manifold(Lu, *eq, mp);
                nLs = detail::continue_local_manifold(Ls, *eq, mp);
            } catch (const NumericalError& e) {
                out.note = std::string("local manifold failed: ") + e.what();
            }
        }
        std::vector<Homoclinic> trial(hs.size());
        std::vector<int> failed;
        if (nLu && nLs) {
            for (size_t i = 0; i < hs.size(); ++i) {
                if (!alive[i]) continue;
                Homoclinic g = run.current[i];
                Eigen::VectorXd z = cur_z[i];
                if (last_h > 0) z += (cur_z[i] - prev_z[i]) * (step / last_h);
                detail::unpack(z, g);
                ShootingOptions so = ctl.shooting;
                so.accept = ctl.accept;
                trial[i] = newton_shooting(g, *nLu, *nLs, so);
                if (!trial[i].ok()) failed.push_back(int(i));
                else out.max_residual = std::max(out.max_residual, trial[i].residual);
            }
        }
        const bool all_ok = nLu && nLs && failed.empty();
        if (!all_ok) {
            if (step * 0.5 >= ctl.h_min) {
                h = step * 0.5;
                continue;
            }
            if (!nLu || !nLs) {
                run.report = "step underflow: " + out.note;
                run.steps.push_back(out);
                break;
            }
            for (int i : failed) {
                alive[i] = false;
                run.retired.push_back("connection " + std::to_string(i) + " retired at m1 = " +
                                      std::to_string(mp.m1) + ": " + trial[i].status);
                ++out.retired;
            }
        }
        for (size_t i = 0; i < hs.size(); ++i) {
            if (!alive[i]) continue;
            if (ctl.track_winding) trial[i].winding = winding_vector(trial[i], *nLu, *nLs);
            // equal durations keep the secant predictor smooth
            Homoclinic even = newton_shooting(resample(trial[i], *nLu, trial[i].segments()), *nLu, *nLs,
                                              ctl.shooting);
            if (even.ok()) {
                even.winding = trial[i].winding;
                trial[i] = even;
            }
            prev_z[i] = cur_z[i];
            cur_z[i] = detail::pack(trial[i]);
            run.current[i] = trial[i];
            ++out.accepted;
        }
        Lu = *nLu;
        Ls = *nLs;
        last_h = step;
        const double su = choose_scaling(*eq, mp, Side::Unstable, Lu.order);
        const double ss = choose_scaling(*eq, mp, Side::Stable, Ls.order);
        if (std::abs(su / Lu.scale - 1) > ctl.rescale_tol || std::abs(ss / Ls.scale - 1) > ctl.rescale_tol) {
            const LocalManifold Lu2 = rescale(Lu, su), Ls2 = rescale(Ls, ss);
            for (size_t i = 0; i < hs.size(); ++i) {
                if (!alive[i]) continue;
                Homoclinic g = transfer_scaling(run.current[i], Lu, Ls, Lu2, Ls2, ctl.shooting);
                if (!g.ok()) {
                    alive[i] = false;
                    run.retired.push_back("connection " + std::to_string(i) + " retired at m1 = " +
                                          std::to_string(mp.m1) + " while rescaling: " + g.status);
                    continue;
                }
                g.winding = run.current[i].winding;
                run.current[i] = g;
                cur_z[i] = prev_z[i] = detail::pack(g);
            }
            Lu = Lu2;
            Ls = Ls2;
            last_h = 0;
            out.note = "local manifolds rescaled";
        }
        s += step;
        run.reached = mp;
        run.steps.push_back(out);
        ++steps;
        if (out.accepted == 0 && !hs.empty()) {
            run.report = "all connections retired";
            break;
        }
        h = std::min(ctl.h_max, step * 1.5);
    }
    std::vector<Homoclinic> kept;
    for (size_t i = 0; i < hs.size(); ++i)
        if (alive[i]) kept.push_back(run.current[i]);
    run.current = kept;
    run.completed = s >= total - 1e-15 && !run.bifurcation;
    if (run.completed && run.report.empty()) run.report = "path completed";
    return run;
}

}  // namespace crfbp
