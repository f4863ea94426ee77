#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "model.hpp"

namespace crfbp {

enum class Stability { SaddleFocus, SaddleCenter, CenterCenter, Other };

inline const char* to_string(Stability s) {
    switch (s) {
        case Stability::SaddleFocus: return "saddle-focus";
        case Stability::SaddleCenter: return "saddle-center";
        case Stability::CenterCenter: return "center-center";
        default: return "other";
    }
}

inline Stability stability_from_string(const std::string& s) {
    if (s == "saddle-focus") return Stability::SaddleFocus;
    if (s == "saddle-center") return Stability::SaddleCenter;
    if (s == "center-center") return Stability::CenterCenter;
    return Stability::Other;
}

using cvec4 = Eigen::Vector4cd;

struct Equilibrium {
    int label = -1;  // 0..9, -1 when the geometry is ambiguous
    double x = 0, y = 0;
    std::array<std::complex<double>, 4> eigenvalues{};
    std::array<cvec4, 4> eigenvectors{};
    Stability stability = Stability::Other;

    State state() const { return {x, 0.0, y, 0.0}; }
    std::string name() const { return label < 0 ? std::string("L?") : "L" + std::to_string(label); }
};

// unit Euclidean norm, first non-negligible component real and positive
inline cvec4 normalize_eigenvector(cvec4 v) {
    v /= v.norm();
    for (int i = 0; i < 4; ++i) {
        if (std::abs(v[i]) > 1e-8) {
            v *= std::polar(1.0, -std::arg(v[i]));
            v[i] = std::complex<double>(v[i].real(), 0.0);
            break;
        }
    }
    return v;
}

inline void compute_eigen(Equilibrium& eq, const PrimaryConfig& cfg) {
    Eigen::EigenSolver<Mat4> es(jacobian(eq.state(), cfg));
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver failure");
    std::array<int, 4> idx{0, 1, 2, 3};
    // deterministic order: by real part, then imaginary part
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        auto la = es.eigenvalues()[a], lb = es.eigenvalues()[b];
        if (std::abs(la.real() - lb.real()) > 1e-12) return la.real() < lb.real();
        return la.imag() < lb.imag();
    });
    for (int i = 0; i < 4; ++i) {
        eq.eigenvalues[i] = es.eigenvalues()[idx[i]];
        eq.eigenvectors[i] = normalize_eigenvector(es.eigenvectors().col(idx[i]));
    }
}

inline Stability classify_stability(const Equilibrium& eq, double tol = 1e-9) {
    int focus = 0, real = 0, imag = 0;
    for (const auto& l : eq.eigenvalues) {
        const bool re = std::abs(l.real()) > tol, im = std::abs(l.imag()) > tol;
        if (re && im) ++focus;
        else if (re) ++real;
        else if (im) ++imag;
    }
    if (focus == 4) return Stability::SaddleFocus;
    if (real == 2 && imag == 2) return Stability::SaddleCenter;
    if (imag == 4) return Stability::CenterCenter;
    return Stability::Other;
}

// Newton on grad(Omega) = 0
inline std::optional<std::array<double, 2>> newton_equilibrium(double x, double y,
                                                                const PrimaryConfig& cfg,
                                                                double tol = 1e-13,
                                                                int max_iter = 60) {
    try {
        for (int it = 0; it < max_iter; ++it) {
            check_distance(cfg, x, y);
            const auto g = potential_gradient(x, y, cfg);
            if (std::hypot(g[0], g[1]) <= tol) return std::array<double, 2>{x, y};
            const auto h = potential_hessian(x, y, cfg);
            const double det = h[0] * h[2] - h[1] * h[1];
            if (std::abs(det) < 1e-14) return std::nullopt;
            double dx = -(h[2] * g[0] - h[1] * g[1]) / det;
            double dy = -(-h[1] * g[0] + h[0] * g[1]) / det;
            // damp wild steps near the primaries
            const double len = std::hypot(dx, dy);
            if (len > 0.25) {
                dx *= 0.25 / len;
                dy *= 0.25 / len;
            }
            x += dx;
            y += dy;
            if (std::hypot(x, y) > 5) return std::nullopt;
        }
        const auto g = potential_gradient(x, y, cfg);
        if (std::hypot(g[0], g[1]) <= 1e-12) return std::array<double, 2>{x, y};
    } catch (const SingularityError&) {
    }
    return std::nullopt;
}

namespace detail {

// signed distance to the edge line through primaries a, b; positive on the
// side of the opposite vertex
inline double edge_side(const PrimaryConfig& cfg, int a, int b, double x, double y) {
    const int c = 3 - a - b;
    const double ex = cfg.px[b] - cfg.px[a], ey = cfg.py[b] - cfg.py[a];
    const double len = std::hypot(ex, ey);
    auto cross = [&](double px, double py) {
        return (ex * (py - cfg.py[a]) - ey * (px - cfg.px[a])) / len;
    };
    const double ref = cross(cfg.px[c], cfg.py[c]);
    const double v = cross(x, y);
    return ref > 0 ? v : -v;
}

}  // namespace detail

// Labels: L0 central; L1, L2, L3 inside the triangle near edges P1P2, P2P3,
// P3P1; L4, L5, L6 beyond those edges; L7, L8, L9 beyond vertices P3, P1, P2.
inline void assign_labels(std::vector<Equilibrium>& eqs, const PrimaryConfig& cfg) {
    static constexpr std::array<std::array<int, 2>, 3> edges{{{0, 1}, {1, 2}, {2, 0}}};
    std::vector<int> inside;
    for (size_t i = 0; i < eqs.size(); ++i) {
        auto& e = eqs[i];
        std::array<double, 3> d{};
        int beyond = 0;
        for (int k = 0; k < 3; ++k) {
            d[k] = detail::edge_side(cfg, edges[k][0], edges[k][1], e.x, e.y);
            if (d[k] < 0) ++beyond;
        }
        e.label = -1;
        if (beyond == 0) {
            inside.push_back(static_cast<int>(i));
        } else if (beyond == 1) {
            for (int k = 0; k < 3; ++k)
                if (d[k] < 0) e.label = 4 + k;
        } else if (beyond == 2) {
            // shared vertex of the two violated edges
            int ok = 0;
            for (int k = 0; k < 3; ++k)
                if (d[k] >= 0) ok = k;
            // the untouched edge is opposite the vertex the point lies beyond
            e.label = 7 + ok;
        }
    }
    if (!inside.empty()) {
        auto min_edge = [&](int i) {
            double best = 1e300;
            for (const auto& ed : edges)
                best = std::min(best, detail::edge_side(cfg, ed[0], ed[1], eqs[i].x, eqs[i].y));
            return best;
        };
        // deepest interior point is central
        int center = inside[0];
        for (int i : inside)
            if (min_edge(i) > min_edge(center)) center = i;
        for (int i : inside) {
            if (i == center) {
                eqs[i].label = 0;
                continue;
            }
            int k_best = 0;
            double best = 1e300;
            for (int k = 0; k < 3; ++k) {
                const double d = detail::edge_side(cfg, edges[k][0], edges[k][1], eqs[i].x, eqs[i].y);
                if (d < best) {
                    best = d;
                    k_best = k;
                }
            }
            eqs[i].label = 1 + k_best;
        }
    }
    // duplicate labels are geometric conflicts
    for (size_t i = 0; i < eqs.size(); ++i)
        for (size_t j = i + 1; j < eqs.size(); ++j)
            if (eqs[i].label >= 0 && eqs[i].label == eqs[j].label) {
                eqs[i].label = -1;
                eqs[j].label = -1;
            }
    std::stable_sort(eqs.begin(), eqs.end(), [](const Equilibrium& a, const Equilibrium& b) {
        const int la = a.label < 0 ? 100 : a.label, lb = b.label < 0 ? 100 : b.label;
        if (la != lb) return la < lb;
        if (a.x != b.x) return a.x < b.x;
        return a.y < b.y;
    });
}

inline Equilibrium make_equilibrium(double x, double y, const PrimaryConfig& cfg) {
    Equilibrium e;
    e.x = x;
    e.y = y;
    compute_eigen(e, cfg);
    e.stability = classify_stability(e);
    return e;
}

struct EquilibriumSearch {
    std::vector<Equilibrium> points;
    std::vector<std::string> warnings;
};

inline EquilibriumSearch find_equilibria_report(const MassParameters& mp) {
    const PrimaryConfig cfg = primary_positions(mp);
    constexpr int n_ang = 48, n_rad = 12, n_sector = 12;
    std::vector<std::array<double, 2>> roots;
    std::array<int, n_sector> sector_hits{};
    auto accept = [&](const std::array<double, 2>& r) {
        for (const auto& q : roots)
            if (std::hypot(q[0] - r[0], q[1] - r[1]) < 1e-8) return;
        roots.push_back(r);
    };
    if (auto r = newton_equilibrium(0, 0, cfg)) accept(*r);
    for (int a = 0; a < n_ang; ++a) {
        const double th = 2 * std::numbers::pi * a / n_ang;
        for (int k = 0; k < n_rad; ++k) {
            const double rad = 0.2 + (1.5 - 0.2) * k / (n_rad - 1);
            if (auto r = newton_equilibrium(rad * std::cos(th), rad * std::sin(th), cfg)) {
                accept(*r);
                ++sector_hits[a * n_sector / n_ang];
            }
        }
    }
    EquilibriumSearch out;
    for (int s = 0; s < n_sector; ++s)
        if (sector_hits[s] == 0)
            out.warnings.push_back("possibly missed equilibrium: no Newton convergence in sector " +
                                   std::to_string(s));
    for (const auto& r : roots) out.points.push_back(make_equilibrium(r[0], r[1], cfg));
    assign_labels(out.points, cfg);
    return out;
}

inline std::vector<Equilibrium> find_equilibria(const MassParameters& mp) {
    return find_equilibria_report(mp).points;
}

inline std::optional<Equilibrium> find_labeled(const std::vector<Equilibrium>& eqs, int label) {
    for (const auto& e : eqs)
        if (e.label == label) return e;
    return std::nullopt;
}

// Track one equilibrium from masses a to masses b along the straight segment,
// halving the step on Newton failure or on a jump in position.
inline std::optional<Equilibrium> continue_equilibrium(const Equilibrium& start,
                                                       const MassParameters& a,
                                                       const MassParameters& b,
                                                       double min_step = 1e-4) {
    double x = start.x, y = start.y;
    double s = 0, h = 0.25;
    auto masses_at = [&](double t) {
        MassParameters m{a.m1 + t * (b.m1 - a.m1), 0, a.m3 + t * (b.m3 - a.m3)};
        m.m2 = 1 - m.m1 - m.m3;
        return m;
    };
    while (s < 1) {
        const double t = std::min(1.0, s + h);
        const MassParameters mt = masses_at(t);
        std::optional<std::array<double, 2>> r;
        try {
            r = newton_equilibrium(x, y, primary_positions(mt));
        } catch (const ConfigurationError&) {
            r.reset();
        }
        if (r && std::hypot((*r)[0] - x, (*r)[1] - y) < 0.1) {
            x = (*r)[0];
            y = (*r)[1];
            s = t;
            h = std::min(0.25, h * 1.5);
        } else {
            h *= 0.5;
            if (h < min_step) return std::nullopt;
        }
    }
    Equilibrium e = make_equilibrium(x, y, primary_positions(masses_at(1.0)));
    e.label = start.label;
    return e;
}

struct ScanRow {
    double m1, m3;
    std::array<int, 4> flags;  // L0, L4, L5, L6: 1 saddle-focus, 0 not, -1 unknown
};

// admissible m3 range for a given m1 (ordering 0 < m3 <= m2 <= m1)
inline std::array<double, 2> m3_range(double m1) {
    const double hi = (1 - m1) / 2;
    const double lo = m1 <= 0.5 ? 1 - 2 * m1 : 0.0;
    return {lo, hi};
}

inline std::vector<ScanRow> scan_simplex(int n_m1, int n_m3, double m1_lo = 1.0 / 3,
                                         double m1_hi = 0.98) {
    const MassParameters corner = MassParameters::equal();
    const auto base = find_equilibria(corner);
    static constexpr std::array<int, 4> tracked{0, 4, 5, 6};
    std::vector<ScanRow> rows;
    for (int i = 0; i < n_m1; ++i) {
        const double m1 = n_m1 == 1 ? m1_lo : m1_lo + (m1_hi - m1_lo) * i / (n_m1 - 1);
        const auto rg = m3_range(m1);
        for (int j = 0; j < n_m3; ++j) {
            // keep strictly inside the admissible region
            const double f = n_m3 == 1 ? 0.5 : double(j) / (n_m3 - 1);
            double m3 = rg[0] + (rg[1] - rg[0]) * f;
            m3 = std::clamp(m3, std::max(rg[0], 1e-4), rg[1]);
            MassParameters mp{m1, 1 - m1 - m3, m3};
            ScanRow row{m1, m3, {-1, -1, -1, -1}};
            for (int k = 0; k < 4; ++k) {
                auto e0 = find_labeled(base, tracked[k]);
                if (!e0) continue;
                auto e = continue_equilibrium(*e0, corner, mp);
                if (e) row.flags[k] = e->stability == Stability::SaddleFocus ? 1 : 0;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

}  // namespace crfbp
