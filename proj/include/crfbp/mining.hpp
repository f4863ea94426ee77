#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "atlas.hpp"
#include "integrator.hpp"

namespace crfbp {

enum class CandidateStatus { Certified, Pseudo, Ambiguous };

inline const char* to_string(CandidateStatus s) {
    switch (s) {
        case CandidateStatus::Certified: return "certified";
        case CandidateStatus::Pseudo: return "pseudo";
        default: return "ambiguous";
    }
}

inline CandidateStatus candidate_status_from_string(const std::string& s) {
    if (s == "certified") return CandidateStatus::Certified;
    if (s == "pseudo") return CandidateStatus::Pseudo;
    if (s == "ambiguous") return CandidateStatus::Ambiguous;
    throw ConfigurationError("unknown candidate status: " + s);
}

struct IntersectionCandidate {
    int u_chart = -1, s_chart = -1;
    int gu = 0, gs = 0;
    std::array<double, 3> root{};  // (s, t) on the unstable chart, σ on the stable base edge
    double residual = 0;
    double w_u = 0, w_s = 0;  // fourth coordinates on both charts
    CandidateStatus status = CandidateStatus::Ambiguous;
    State point{};
    double angle_u = 0, angle_s = 0;  // exit/entry angles on the local boundaries
    int copy_s = 0;                   // symmetry copy of the stable chart
    double t_u = 0, t_s = 0;          // time since the unstable boundary, until the stable boundary
    bool singular = false;

    double connection_time() const { return t_u + t_s; }
};

struct MiningOptions {
    double far = 1e-4;
    double margin = 1e-6;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    double residual_tol = 1e-11;
    int seeds_per_axis = 3;
    double identity_radius = 1e-8;
    double max_connection_time = 1e300;
};

namespace detail {

// value and partials of a chart at (s, t)
struct ChartJet {
    State v{}, ds{}, dt{};
};

inline ChartJet chart_jet(const Chart& ch, double s, double t) {
    ChartJet j;
    const auto& G = ch.G;
    for (int k = 0; k < 4; ++k) {
        double v = 0, vs = 0, vt = 0;
        for (int m = G.M - 1; m >= 0; --m) {
            double r = 0, rs = 0;
            for (int n = G.N - 1; n >= 0; --n) {
                rs = rs * s + r;
                r = r * s + G(k, m, n);
            }
            vt = vt * t + v;
            v = v * t + r;
            vs = vs * t + rs;
        }
        j.v[k] = v;
        j.ds[k] = vs;
        j.dt[k] = vt;
    }
    return j;
}

inline std::pair<State, State> arc_jet(const BoundaryArc& a, double s) {
    State v{}, d{};
    for (int k = 0; k < 4; ++k) {
        double r = 0, rs = 0;
        for (int n = a.gamma.N - 1; n >= 0; --n) {
            rs = rs * s + r;
            r = r * s + a.gamma(k, n);
        }
        v[k] = r;
        d[k] = rs;
    }
    return {v, d};
}

}  // namespace detail

// Roots of G(s,t,σ) = Γu(s,t)[0..2] - Γs(σ,0)[0..2] from a grid of seeds,
// classified by the fourth coordinates.
inline std::vector<IntersectionCandidate> newton_intersect(const Chart& U, const BoundaryArc& S_edge,
                                                           const MiningOptions& opt = {}) {
    std::vector<IntersectionCandidate> out;
    const int K = opt.seeds_per_axis;
    for (int a = 0; a < K; ++a)
        for (int b = 0; b < K; ++b)
            for (int c = 0; c < K; ++c) {
                auto seed = [K](int i) { return K == 1 ? 0.0 : -1 + (2.0 * i + 1) / K; };
                Eigen::Vector3d v(seed(a), seed(b), seed(c));
                // t lives on [0,1]; the seeds are mapped accordingly
                v[1] = 0.5 * (v[1] + 1);
                bool converged = false, singular = false;
                double res = 0;
                for (int it = 0; it < opt.newton_max_iter; ++it) {
                    const auto ju = detail::chart_jet(U, v[0], v[1]);
                    const auto [gs, dgs] = detail::arc_jet(S_edge, v[2]);
                    Eigen::Vector3d F;
                    Eigen::Matrix3d J;
                    for (int r = 0; r < 3; ++r) {
                        F[r] = ju.v[r] - gs[r];
                        J(r, 0) = ju.ds[r];
                        J(r, 1) = ju.dt[r];
                        J(r, 2) = -dgs[r];
                    }
                    res = F.norm();
                    Eigen::FullPivLU<Eigen::Matrix3d> lu(J);
                    if (!lu.isInvertible()) {
                        singular = true;
                        break;
                    }
                    const Eigen::Vector3d dv = lu.solve(F);
                    v -= dv;
                    if (!v.allFinite() || std::abs(v[0]) > 2 || v[1] < -1 || v[1] > 2 || std::abs(v[2]) > 2)
                        break;
                    if (dv.norm() < opt.newton_tol) {
                        converged = true;
                        break;
                    }
                }
                if (!converged && !singular) continue;
                if (std::abs(v[0]) > 1.01 || v[1] < -0.01 || v[1] > 1.01 || std::abs(v[2]) > 1.01) continue;
                const auto ju = detail::chart_jet(U, v[0], v[1]);
                const auto [gs, dgs] = detail::arc_jet(S_edge, v[2]);
                res = 0;
                Eigen::Matrix3d J;
                for (int r = 0; r < 3; ++r) {
                    res += (ju.v[r] - gs[r]) * (ju.v[r] - gs[r]);
                    J(r, 0) = ju.ds[r];
                    J(r, 1) = ju.dt[r];
                    J(r, 2) = -dgs[r];
                }
                res = std::sqrt(res);
                if (res > opt.residual_tol) continue;
                bool dup = false;
                for (const auto& c0 : out)
                    if (std::abs(c0.root[0] - v[0]) + std::abs(c0.root[1] - v[1]) + std::abs(c0.root[2] - v[2]) < 1e-8)
                        dup = true;
                if (dup) continue;
                IntersectionCandidate cand;
                cand.u_chart = U.id;
                cand.root = {v[0], v[1], v[2]};
                cand.residual = res;
                cand.point = ju.v;
                cand.w_u = ju.v[3];
                cand.w_s = gs[3];
                Eigen::JacobiSVD<Eigen::Matrix3d> svd(J);
                const auto sv = svd.singularValues();
                cand.singular = singular || !(sv[2] > 1e-10 * sv[0]);
                if (cand.singular || std::min(std::abs(cand.w_u), std::abs(cand.w_s)) < opt.far)
                    cand.status = CandidateStatus::Ambiguous;
                else
                    cand.status = (cand.w_u > 0) == (cand.w_s > 0) ? CandidateStatus::Certified
                                                                    : CandidateStatus::Pseudo;
                cand.angle_u = U.lineage.angle(v[0]);
                cand.t_u = U.time_at(v[1]);
                cand.angle_s = S_edge.lineage.angle(v[2]);
                cand.t_s = S_edge.lineage.elapsed;
                cand.copy_s = S_edge.lineage.copy;
                out.push_back(cand);
            }
    return out;
}

namespace detail {

inline double angle_gap(double a, double b) {
    const double two_pi = 2 * std::numbers::pi;
    double d = std::fmod(std::abs(a - b), two_pi);
    return std::min(d, two_pi - d);
}

}  // namespace detail

// Two candidates lie on the same orbit when the flow carries one point onto
// the other; the exit angle on the local unstable boundary prefilters.
inline bool same_orbit(const IntersectionCandidate& a, const IntersectionCandidate& b, const PrimaryConfig& cfg,
                       double radius = 1e-8) {
    if (detail::angle_gap(a.angle_u, b.angle_u) > 1e-5) return false;
    if (std::abs(a.connection_time() - b.connection_time()) > 1e-3) return false;
    const double dt = b.t_u - a.t_u;
    // three sample times along the common stretch
    for (double extra : {0.0, -0.05, 0.05}) {
        State pa, pb;
        try {
            pa = flow(a.point, dt + extra, cfg);
            pb = flow(b.point, extra, cfg);
        } catch (const SingularityError&) {
            return false;
        }
        double e = 0;
        for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(pa[k] - pb[k]));
        // chart data carries ~1e-10 errors that the flow stretches
        if (e > radius * std::max(1.0, std::exp(std::abs(dt)))) return false;
    }
    return true;
}

struct MiningReport {
    long pairs_considered = 0;
    long pairs_boxed = 0;
    long newton_runs = 0;
    std::vector<IntersectionCandidate> raw;
};

inline void check_compatible(const Atlas& Au, const Atlas& As) {
    const auto& a = Au.local.masses;
    const auto& b = As.local.masses;
    if (std::abs(a.m1 - b.m1) > 1e-14 || std::abs(a.m3 - b.m3) > 1e-14)
        throw ConfigurationError("atlases belong to different mass parameters");
    const PrimaryConfig cfg = Au.config();
    const double Eu = jacobi_integral(Au.local.eq.state(), cfg), Es = jacobi_integral(As.local.eq.state(), cfg);
    if (std::abs(Eu - Es) > 1e-10 * std::max(1.0, std::abs(Eu)))
        throw ConfigurationError("atlases have different equilibrium energies");
    if (Au.side != Side::Unstable || As.side != Side::Stable)
        throw ConfigurationError("mining expects an unstable and a stable atlas");
}

// Leapfrog through generation pairs in increasing gu + gs; each orbit is
// reported once, at its minimal pair.
inline std::vector<IntersectionCandidate> mine(const Atlas& Au, const Atlas& As, const MiningOptions& opt = {},
                                               MiningReport* rep = nullptr) {
    check_compatible(Au, As);
    std::vector<IntersectionCandidate> found;
    if (Au.charts.empty() || As.charts.empty()) return found;
    const PrimaryConfig cfg = Au.config();
    const int Lu = int(Au.generations.size()) - 1, Ls = int(As.generations.size()) - 1;
    for (int total = 2; total <= Lu + Ls; ++total)
        for (int gu = std::max(1, total - Ls); gu <= std::min(Lu, total - 1); ++gu) {
            const int gs = total - gu;
            for (int uid : Au.generations[gu]) {
                const Chart& U = Au.charts[uid];
                for (int sid : As.generations[gs]) {
                    const Chart& S = As.charts[sid];
                    const BoundaryArc& edge = As.arcs[S.parent_arc];
                    if (rep) ++rep->pairs_considered;
                    if (U.lineage.elapsed + edge.lineage.elapsed > opt.max_connection_time) continue;
                    if (!box_overlap(U.box, edge.box, opt.margin)) continue;
                    if (rep) ++rep->pairs_boxed;
                    auto cands = newton_intersect(U, edge, opt);
                    if (rep) ++rep->newton_runs;
                    for (auto& c : cands) {
                        c.s_chart = sid;
                        c.gu = gu;
                        c.gs = gs;
                        if (c.connection_time() > opt.max_connection_time) continue;
                        if (rep) rep->raw.push_back(c);
                        bool dup = false;
                        for (const auto& f : found)
                            if (same_orbit(f, c, cfg, opt.identity_radius)) {
                                dup = true;
                                break;
                            }
                        if (!dup) found.push_back(c);
                    }
                }
            }
        }
    std::stable_sort(found.begin(), found.end(), [](const auto& a, const auto& b) {
        if (a.gu + a.gs != b.gu + b.gs) return a.gu + a.gs < b.gu + b.gs;
        if (a.u_chart != b.u_chart) return a.u_chart < b.u_chart;
        return a.s_chart < b.s_chart;
    });
    return found;
}

namespace detail {

inline std::vector<int> chart_children(const Atlas& A, int chart) {
    std::vector<int> out;
    for (const auto& a : A.arcs)
        if (a.parent_chart == chart && a.child_chart >= 0) out.push_back(a.child_chart);
    return out;
}

inline int chart_parent(const Atlas& A, int chart) {
    const int arc = A.charts[chart].parent_arc;
    return arc >= 0 ? A.arcs[arc].parent_chart : -1;
}

inline std::vector<int> lineage_walk(const Atlas& A, int chart, int steps, bool forward) {
    std::vector<int> layer{chart}, out;
    for (int k = 0; k < steps; ++k) {
        std::vector<int> next;
        for (int c : layer) {
            if (forward) {
                for (int ch : chart_children(A, c)) next.push_back(ch);
            } else {
                const int p = chart_parent(A, c);
                if (p >= 0) next.push_back(p);
            }
        }
        for (int c : next) out.push_back(c);
        layer = next;
    }
    return out;
}

}  // namespace detail

// Follow an ambiguous intersection through neighbouring generations until the
// fourth-coordinate test becomes decisive.
inline CandidateStatus resolve_ambiguous(IntersectionCandidate& c, const Atlas& Au, const Atlas& As,
                                         const MiningOptions& opt = {}, int max_steps = 2) {
    if (c.status != CandidateStatus::Ambiguous) return c.status;
    const PrimaryConfig cfg = Au.config();
    for (int step = 1; step <= max_steps; ++step) {
        // later along the orbit: unstable successors against stable predecessors, and the reverse
        for (bool forward : {true, false}) {
            const auto us = detail::lineage_walk(Au, c.u_chart, step, forward);
            const auto ss = detail::lineage_walk(As, c.s_chart, step, !forward);
            std::vector<int> uu = us, sss = ss;
            uu.push_back(c.u_chart);
            sss.push_back(c.s_chart);
            for (int u : uu)
                for (int s : sss) {
                    if (u == c.u_chart && s == c.s_chart) continue;
                    const BoundaryArc& edge = As.arcs[As.charts[s].parent_arc];
                    if (!box_overlap(Au.charts[u].box, edge.box, opt.margin)) continue;
                    for (auto& d : newton_intersect(Au.charts[u], edge, opt)) {
                        d.s_chart = s;
                        if (!same_orbit(c, d, cfg, 1e-6)) continue;
                        if (d.status != CandidateStatus::Ambiguous) {
                            c.status = d.status;
                            return c.status;
                        }
                    }
                }
        }
    }
    return c.status;
}

inline std::vector<IntersectionCandidate> certified_only(const std::vector<IntersectionCandidate>& v) {
    std::vector<IntersectionCandidate> out;
    for (const auto& c : v)
        if (c.status == CandidateStatus::Certified) out.push_back(c);
    return out;
}

}  // namespace crfbp
