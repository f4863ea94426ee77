#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/Polynomials>

#include "advection.hpp"
#include "equilibria.hpp"
#include "parameterization.hpp"
#include "series.hpp"

namespace crfbp {

struct AtlasParams {
    int M = 40;            // time coefficients per chart
    int N = 20;            // space coefficients per chart
    double eps = 1e-10;    // tail-ratio threshold
    int tail_cutoff = 10;  // N'
    int split = 2;
    int max_depth = 8;
    double kappa = 2;
    int K0 = 10;
    bool symmetric = true;  // reduced one-third boundary (equal masses, L0)
    double T = 1.0;
    int local_order = 45;
    double time_threshold = 1e-16;

    AdvectionOptions advection() const {
        AdvectionOptions o;
        o.M = M;
        o.threshold = time_threshold;
        return o;
    }

    void validate() const {
        if (M < 2 || N < 2) throw ConfigurationError("chart degrees must be at least 2");
        if (!(eps > 0 && eps < 1)) throw ConfigurationError("eps must lie in (0,1)");
        if (tail_cutoff < 1 || tail_cutoff >= N) throw ConfigurationError("tail cutoff must satisfy 1 <= N' < N");
        if (split < 2) throw ConfigurationError("split factor must be at least 2");
        if (!(kappa > 0)) throw ConfigurationError("kappa must be positive");
        if (K0 < 1) throw ConfigurationError("K0 must be at least 1");
        if (!(T >= 0)) throw ConfigurationError("T must be non-negative");
    }
};

struct RetiredRegion {
    int generation = 0;
    int parent_chart = -1;
    double angle_lo = 0, angle_hi = 0;  // local-boundary angles covered
    double elapsed = 0;
    std::string reason;
};

struct Atlas {
    LocalManifold local;
    Side side = Side::Stable;
    AtlasParams params;
    std::vector<Chart> charts;                // id == index
    std::vector<BoundaryArc> arcs;            // advected (processed) arcs, id == index
    std::vector<std::vector<int>> generations;  // chart ids by generation; [0] stays empty
    std::vector<std::vector<int>> frontiers;    // arc ids advected out of generation g
    std::vector<BoundaryArc> pending;         // unprocessed arcs (time budget spent or not yet grown)
    std::vector<RetiredRegion> retired;
    std::vector<int> copy_labels{0};          // equilibrium label per symmetry copy
    double grown_to = 0;
    std::string status = "ok";

    double sign() const { return side == Side::Unstable ? 1.0 : -1.0; }
    PrimaryConfig config() const { return local.config(); }
    int chart_count() const { return int(charts.size()); }
    std::vector<int> generation_counts() const {
        std::vector<int> out;
        for (const auto& g : generations) out.push_back(int(g.size()));
        return out;
    }
};

// speed along an arc: sqrt(xdot^2 + ydot^2)
inline double arc_speed(const BoundaryArc& arc, double s) {
    return std::hypot(arc.gamma.eval(1, s), arc.gamma.eval(3, s));
}

inline double max_speed(const BoundaryArc& arc, int samples = 256) {
    double best = 0;
    for (int i = 0; i < samples; ++i) best = std::max(best, arc_speed(arc, -1 + 2.0 * i / (samples - 1)));
    return best;
}

// the arc over angles [c - h, c + h] of the local boundary, Taylor-expanded in s
inline BoundaryArc lift_boundary_arc(const LocalManifold& L, double center, double halfwidth, int N) {
    // Fourier coefficients on the circle: P(e^{iθ}) = Σ_d c_d e^{idθ}
    const int K = L.order;
    BoundaryArc arc;
    arc.gamma = series::Taylor1<double>(4, N);
    for (int k = 0; k < 4; ++k) {
        std::vector<cplx> c(2 * K + 1, cplx(0));
        for (int m = 0; m <= K; ++m)
            for (int n = 0; m + n <= K; ++n) c[m - n + K] += L.P(k, m, n);
        for (int d = -K; d <= K; ++d) {
            cplx term = c[d + K] * std::polar(1.0, d * center);
            const cplx step(0, d * halfwidth);
            for (int j = 0; j < N; ++j) {
                arc.gamma(k, j) += term.real();
                term *= step / double(j + 1);
            }
        }
    }
    arc.lineage.angle_center = center;
    arc.lineage.angle_halfwidth = halfwidth;
    arc.box = make_box(arc.gamma);
    return arc;
}

inline std::vector<BoundaryArc> initial_boundary(const LocalManifold& L, int K0, bool symmetric, int N = 20) {
    if (K0 < 1) throw ConfigurationError("K0 must be at least 1");
    if (!series::all_finite(L.P.c) || defect(L) > 1e-10)
        throw NumericalError("local manifold is not converged");
    if (symmetric && !L.masses.is_equal()) throw ConfigurationError("symmetric boundary requires equal masses");
    if (symmetric) {
        const State x0 = L.equilibrium_state(), r = apply_matrix(symmetry_rotation(1), x0);
        if (std::hypot(r[0] - x0[0], r[2] - x0[2]) > 1e-9)
            throw ConfigurationError("symmetric boundary requires an equilibrium fixed by the rotation");
    }
    const double sector = symmetric ? 2 * std::numbers::pi / 3 : 2 * std::numbers::pi;
    std::vector<BoundaryArc> out;
    for (int j = 0; j < K0; ++j) {
        const double c = sector * (j + 0.5) / K0, h = sector / (2.0 * K0);
        out.push_back(lift_boundary_arc(L, c, h, N));
        for (double t : {-1.0, 0.0, 1.0}) {
            const State a = out.back().eval(t), b = L.boundary(c + h * t);
            for (int k = 0; k < 4; ++k)
                if (std::abs(a[k] - b[k]) > 1e-10)
                    throw NumericalError("boundary arcs too wide for the chart degree; increase K0");
        }
    }
    return out;
}

struct RemeshResult {
    std::vector<BoundaryArc> arcs;
    std::vector<BoundaryArc> pathological;
};

namespace detail {

// the scalar tail ratio applied to each coordinate; worst coordinate wins
inline double arc_tail_ratio(const BoundaryArc& a, int cutoff) {
    double worst = 0;
    for (int k = 0; k < a.gamma.dim; ++k) {
        series::Taylor1<double> one(1, a.gamma.N);
        for (int n = 0; n < a.gamma.N; ++n) one(0, n) = a.gamma(k, n);
        try {
            worst = std::max(worst, series::tail_ratio(one, cutoff));
        } catch (const UndefinedRatio&) {
        }
    }
    return worst;
}

inline bool tail_ok(const BoundaryArc& a, double eps, int cutoff) { return arc_tail_ratio(a, cutoff) < eps; }

inline BoundaryArc sub_arc(const BoundaryArc& a, double center, double delta) {
    BoundaryArc out = a;
    out.gamma = series::recenter_rescale(a.gamma, center, delta);
    out.lineage = a.lineage.restricted(center, delta);
    out.box = make_box(out.gamma);
    return out;
}

inline void remesh_into(const BoundaryArc& a, double eps, int cutoff, int K, int depth, int max_depth,
                        RemeshResult& out) {
    if (tail_ok(a, eps, cutoff)) {
        out.arcs.push_back(a);
        return;
    }
    if (depth >= max_depth) {
        out.pathological.push_back(a);
        return;
    }
    const double delta = 1.0 / K;
    for (int j = 0; j < K; ++j)
        remesh_into(sub_arc(a, -1 + (2 * j + 1) * delta, delta), eps, cutoff, K, depth + 1, max_depth, out);
}

}  // namespace detail

// split until every piece has tail ratio below eps
inline RemeshResult remesh(const BoundaryArc& arc, double eps, int cutoff, int K = 2, int max_depth = 8) {
    RemeshResult out;
    detail::remesh_into(arc, eps, cutoff, K, 0, max_depth, out);
    return out;
}

struct ClipResult {
    std::vector<BoundaryArc> arcs;
    std::vector<std::array<double, 2>> discarded;  // s-intervals of the input arc
    bool root_failure = false;
};

namespace detail {

// coefficients of xdot^2 + ydot^2 - kappa^2 in s
inline std::vector<double> speed_polynomial(const BoundaryArc& arc, double kappa) {
    const int N = arc.gamma.N;
    std::vector<double> q(2 * N - 1, 0.0);
    for (int k : {1, 3})
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < N; ++j) q[i + j] += arc.gamma(k, i) * arc.gamma(k, j);
    q[0] -= kappa * kappa;
    return q;
}

inline double horner(const std::vector<double>& q, double s) {
    double acc = 0;
    for (int i = int(q.size()) - 1; i >= 0; --i) acc = acc * s + q[i];
    return acc;
}

inline double horner_ds(const std::vector<double>& q, double s) {
    double acc = 0;
    for (int i = int(q.size()) - 1; i >= 1; --i) acc = acc * s + i * q[i];
    return acc;
}

// real roots in [-1,1], companion-matrix eigenvalues then Newton polish
inline std::vector<double> roots_in_unit_interval(std::vector<double> q) {
    double big = 0;
    for (double v : q) big = std::max(big, std::abs(v));
    if (big == 0) return {};
    while (q.size() > 1 && std::abs(q.back()) < 1e-18 * big) q.pop_back();
    std::vector<double> roots;
    if (q.size() <= 1) return roots;
    Eigen::VectorXd coeffs = Eigen::Map<const Eigen::VectorXd>(q.data(), Eigen::Index(q.size()));
    Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);
    for (const auto& z : solver.roots()) {
        if (std::abs(z.imag()) > 1e-6 * std::max(1.0, std::abs(z.real()))) continue;
        double s = z.real();
        if (s < -1.01 || s > 1.01) continue;
        for (int it = 0; it < 30; ++it) {
            const double d = horner_ds(q, s);
            if (d == 0) break;
            const double ds = horner(q, s) / d;
            s -= ds;
            if (std::abs(ds) < 1e-16) break;
        }
        if (std::isfinite(s) && s > -1 && s < 1) roots.push_back(s);
    }
    std::sort(roots.begin(), roots.end());
    roots.erase(std::unique(roots.begin(), roots.end(), [](double a, double b) { return b - a < 1e-12; }),
                roots.end());
    return roots;
}

}  // namespace detail

// keep the maximal subintervals where the speed stays below kappa
inline ClipResult speed_clip(const BoundaryArc& arc, double kappa, int samples = 256) {
    ClipResult out;
    if (max_speed(arc, samples) <= kappa) {
        out.arcs.push_back(arc);
        return out;
    }
    const auto q = detail::speed_polynomial(arc, kappa);
    std::vector<double> cuts{-1.0};
    for (double r : detail::roots_in_unit_interval(q)) cuts.push_back(r);
    cuts.push_back(1.0);
    double checked = 0;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i], b = cuts[i + 1];
        if (b - a < 1e-12) continue;
        bool slow = true;
        for (int j = 1; j <= samples; ++j) {
            const double s = a + (b - a) * j / (samples + 1);
            if (detail::horner(q, s) >= 0) {
                slow = false;
                break;
            }
        }
        if (slow) {
            out.arcs.push_back(detail::sub_arc(arc, 0.5 * (a + b), 0.5 * (b - a)));
        } else {
            out.discarded.push_back({a, b});
        }
        checked += b - a;
    }
    // kept pieces must be slow everywhere; otherwise give up on the whole arc
    for (const auto& k : out.arcs)
        if (max_speed(k, samples) > kappa + 1e-9) out.root_failure = true;
    if (out.root_failure || std::abs(checked - 2.0) > 1e-9) {
        out.root_failure = true;
        out.arcs.clear();
        out.discarded = {{-1.0, 1.0}};
    }
    return out;
}

namespace detail {

inline RetiredRegion retire(const BoundaryArc& a, double lo, double hi, std::string reason) {
    RetiredRegion r;
    r.generation = a.generation;
    r.parent_chart = a.parent_chart;
    r.angle_lo = a.lineage.angle(lo);
    r.angle_hi = a.lineage.angle(hi);
    if (r.angle_lo > r.angle_hi) std::swap(r.angle_lo, r.angle_hi);
    r.elapsed = a.lineage.elapsed;
    r.reason = std::move(reason);
    return r;
}

}  // namespace detail

inline Atlas make_atlas(const LocalManifold& L, const AtlasParams& p) {
    p.validate();
    Atlas A;
    A.local = L;
    A.side = L.side;
    A.params = p;
    A.copy_labels = {L.eq.label};
    A.generations.emplace_back();
    A.pending = initial_boundary(L, p.K0, p.symmetric, p.N);
    return A;
}

// advance every lineage until its accumulated |τ| reaches T
inline Atlas& grow(Atlas& A, double T) {
    if (A.copy_labels.size() > 1) throw ConfigurationError("cannot grow a symmetry-expanded atlas");
    const auto& p = A.params;
    const PrimaryConfig cfg = A.config();
    const AdvectionOptions opt = p.advection();
    const double done = T * (1 - 1e-12);
    bool stalled_all = false;
    while (true) {
        std::vector<BoundaryArc> next, idle;
        int advanced = 0, attempted = 0;
        for (const BoundaryArc& raw : A.pending) {
            if (raw.lineage.elapsed >= done) {
                idle.push_back(raw);
                continue;
            }
            const ClipResult clip = speed_clip(raw, p.kappa);
            for (const auto& d : clip.discarded)
                A.retired.push_back(detail::retire(raw, d[0], d[1], clip.root_failure ? "root-failure" : "stiff"));
            for (const BoundaryArc& slow : clip.arcs) {
                const RemeshResult rm = remesh(slow, p.eps, p.tail_cutoff, p.split, p.max_depth);
                for (const auto& bad : rm.pathological)
                    A.retired.push_back(detail::retire(bad, -1, 1, "pathological"));
                for (BoundaryArc arc : rm.arcs) {
                    ++attempted;
                    arc.id = int(A.arcs.size());
                    const int g = arc.generation;
                    Chart ch;
                    try {
                        ch = advect_adaptive(arc, A.sign(), T - arc.lineage.elapsed, cfg, opt);
                    } catch (const NumericalError& e) {
                        A.retired.push_back(detail::retire(arc, -1, 1, std::string("stalled: ") + e.what()));
                        continue;
                    }
                    ch.id = int(A.charts.size());
                    ch.parent_arc = arc.id;
                    arc.child_chart = ch.id;
                    A.arcs.push_back(arc);
                    if (int(A.frontiers.size()) <= g) A.frontiers.resize(g + 1);
                    A.frontiers[g].push_back(arc.id);
                    if (int(A.generations.size()) <= ch.generation) A.generations.resize(ch.generation + 1);
                    A.generations[ch.generation].push_back(ch.id);
                    BoundaryArc edge = evaluate_edge(ch);
                    A.charts.push_back(std::move(ch));
                    next.push_back(std::move(edge));
                    ++advanced;
                }
            }
        }
        if (attempted > 0 && advanced == 0) stalled_all = true;
        for (auto& a : idle) next.push_back(std::move(a));
        A.pending = std::move(next);
        if (stalled_all || advanced == 0) break;
    }
    A.grown_to = std::max(A.grown_to, T);
    A.status = stalled_all ? "stalled" : "ok";
    return A;
}

inline Atlas build_atlas(const LocalManifold& L, const AtlasParams& p) {
    Atlas A = make_atlas(L, p);
    grow(A, p.T);
    return A;
}

namespace detail {

inline series::Taylor2<double> rotate(const series::Taylor2<double>& G, const Mat4& R) {
    series::Taylor2<double> out(G.dim, G.M, G.N);
    const size_t B = G.block();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            if (R(r, c) == 0) continue;
            for (size_t i = 0; i < B; ++i) out.c[r * B + i] += R(r, c) * G.c[c * B + i];
        }
    return out;
}

inline series::Taylor1<double> rotate(const series::Taylor1<double>& g, const Mat4& R) {
    series::Taylor1<double> out(g.dim, g.N);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            for (int n = 0; n < g.N; ++n) out(r, n) += R(r, c) * g(c, n);
    return out;
}

}  // namespace detail

// Append the two rotated copies of every chart and arc. Lineage angles of a
// copy are expressed on the target equilibrium's own local boundary.
inline Atlas symmetry_expand(const Atlas& A) {
    if (!A.local.masses.is_equal()) throw ConfigurationError("symmetry expansion requires equal masses");
    if (A.copy_labels.size() > 1) throw ConfigurationError("atlas is already expanded");
    Atlas out = A;
    const auto eqs = find_equilibria(A.local.masses);
    const int nc = int(A.charts.size()), na = int(A.arcs.size());
    for (int r = 1; r <= 2; ++r) {
        const Mat4 R = symmetry_rotation(r);
        const State x0 = apply_matrix(R, A.local.eq.state());
        int label = -1;
        Equilibrium target = A.local.eq;
        for (const auto& e : eqs)
            if (std::hypot(e.x - x0[0], e.y - x0[2]) < 1e-9) {
                label = e.label;
                target = e;
            }
        out.copy_labels.push_back(label);
        // R P(z) = P_target(c z) with c = <xi_target, R xi>
        cplx lt;
        cvec4 xt;
        detail::select_pair(target, A.side, lt, xt);
        const cvec4 Rxi = R.cast<cplx>() * A.local.xi;
        const double psi = std::arg(xt.dot(Rxi));
        for (int i = 0; i < nc; ++i) {
            Chart ch = A.charts[i];
            ch.id = nc * r + i;
            ch.parent_arc = ch.parent_arc >= 0 ? na * r + ch.parent_arc : -1;
            ch.G = detail::rotate(ch.G, R);
            ch.box = make_box(ch.G);
            ch.lineage.copy = r;
            ch.lineage.angle_center += psi;
            out.charts.push_back(std::move(ch));
            out.generations[out.charts.back().generation].push_back(out.charts.back().id);
        }
        for (int i = 0; i < na; ++i) {
            BoundaryArc a = A.arcs[i];
            a.id = na * r + i;
            a.parent_chart = a.parent_chart >= 0 ? nc * r + a.parent_chart : -1;
            a.child_chart = a.child_chart >= 0 ? nc * r + a.child_chart : -1;
            a.gamma = detail::rotate(a.gamma, R);
            a.box = make_box(a.gamma);
            a.lineage.copy = r;
            a.lineage.angle_center += psi;
            out.arcs.push_back(std::move(a));
            out.frontiers[out.arcs.back().generation].push_back(out.arcs.back().id);
        }
        for (const auto& a0 : A.pending) {
            BoundaryArc a = a0;
            a.parent_chart = a.parent_chart >= 0 ? nc * r + a.parent_chart : -1;
            a.gamma = detail::rotate(a.gamma, R);
            a.box = make_box(a.gamma);
            a.lineage.copy = r;
            a.lineage.angle_center += psi;
            out.pending.push_back(std::move(a));
        }
        for (auto rr : A.retired) {
            rr.angle_lo += psi;
            rr.angle_hi += psi;
            rr.parent_chart = rr.parent_chart >= 0 ? nc * r + rr.parent_chart : -1;
            rr.reason += " (copy " + std::to_string(r) + ")";
            out.retired.push_back(std::move(rr));
        }
    }
    return out;
}

// smallest angle between the field and the arc tangent over sample points
inline double min_transversality_angle(const BoundaryArc& arc, const PrimaryConfig& cfg, int samples = 33) {
    double worst = std::numbers::pi / 2;
    for (int i = 0; i < samples; ++i) {
        const double s = -1 + 2.0 * i / (samples - 1);
        const State f = vector_field(arc.eval(s), cfg), d = arc.eval_ds(s);
        double ff = 0, dd = 0, fd = 0;
        for (int k = 0; k < 4; ++k) {
            ff += f[k] * f[k];
            dd += d[k] * d[k];
            fd += f[k] * d[k];
        }
        const double c = std::min(1.0, std::abs(fd) / std::sqrt(ff * dd));
        worst = std::min(worst, std::acos(c));
    }
    return worst;
}

}  // namespace crfbp
