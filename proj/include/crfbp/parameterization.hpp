#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "equilibria.hpp"
#include "field_series.hpp"
#include "integrator.hpp"
#include "series.hpp"

namespace crfbp {

using series::cplx;

enum class Side { Stable, Unstable };

inline const char* to_string(Side s) { return s == Side::Stable ? "stable" : "unstable"; }
inline Side side_from_string(const std::string& s) {
    if (s == "stable") return Side::Stable;
    if (s == "unstable") return Side::Unstable;
    throw ConfigurationError("unknown manifold side: " + s);
}

struct LocalManifold {
    MassParameters masses;
    Equilibrium eq;
    Side side = Side::Stable;
    cplx lambda;  // lambda_1; lambda_2 = conj(lambda_1)
    cvec4 xi;     // eigenvector of lambda_1, unit norm
    double scale = 0;
    int order = 0;
    Taylor2<cplx> P;  // (order+1) x (order+1), zero above total order

    PrimaryConfig config() const { return primary_positions(masses); }
    State equilibrium_state() const { return eq.state(); }

    // real chart value at parameter z in the unit disk
    State eval_real(cplx z) const {
        const auto v = P.eval(z, std::conj(z));
        return {v[0].real(), v[1].real(), v[2].real(), v[3].real()};
    }
    State boundary(double theta) const { return eval_real(std::polar(1.0, theta)); }

    // d/dtheta of the boundary image
    State boundary_tangent(double theta) const {
        const cplx z = std::polar(1.0, theta), w = std::conj(z);
        State out{};
        for (int k = 0; k < 4; ++k) {
            const cplx d = P.eval_du(k, z, w) * (cplx(0, 1) * z) + P.eval_dv(k, z, w) * (cplx(0, -1) * w);
            out[k] = d.real();
        }
        return out;
    }

    double max_imaginary(cplx z) const {
        const auto v = P.eval(z, std::conj(z));
        double worst = 0;
        for (const auto& c : v) worst = std::max(worst, std::abs(c.imag()));
        return worst;
    }

    // lambda for the direction of the manifold's conjugate flow
    cplx mu(int m, int n) const { return double(m) * lambda + double(n) * std::conj(lambda); }
};

namespace detail {

inline void select_pair(const Equilibrium& eq, Side side, cplx& lambda, cvec4& xi) {
    if (eq.stability != Stability::SaddleFocus)
        throw NumericalError("local manifold requested at an equilibrium that is not a saddle-focus");
    for (int i = 0; i < 4; ++i) {
        const cplx l = eq.eigenvalues[i];
        const bool right_side = side == Side::Stable ? l.real() < 0 : l.real() > 0;
        if (right_side && l.imag() > 0) {
            lambda = l;
            xi = eq.eigenvectors[i];
            return;
        }
    }
    throw NumericalError("eigenvalue pair not found");
}

inline Eigen::Matrix4cd homological_matrix(const Mat4& Df, cplx mu) {
    Eigen::Matrix4cd A = Df.cast<cplx>();
    for (int i = 0; i < 4; ++i) A(i, i) -= mu;
    return A;
}

inline double condition_number(const Eigen::Matrix4cd& A) {
    Eigen::JacobiSVD<Eigen::Matrix4cd> svd(A);
    const auto& s = svd.singularValues();
    return s[0] / s[3];
}

// cached LU factors of the homological matrices per total index
struct HomologicalSolver {
    std::vector<Eigen::PartialPivLU<Eigen::Matrix4cd>> lu;
    int dim = 0;

    HomologicalSolver(const Mat4& Df, const LocalManifold& L, int N) : dim(N + 1) {
        lu.resize(static_cast<size_t>(dim) * dim);
        for (int m = 0; m <= N; ++m)
            for (int n = 0; m + n <= N; ++n) {
                if (m + n < 2) continue;
                auto A = homological_matrix(Df, L.mu(m, n));
                if (condition_number(A) > 1e12)
                    throw ResonanceError("near-resonant homological equation at order (" +
                                         std::to_string(m) + "," + std::to_string(n) + ")");
                lu[m * dim + n].compute(A);
            }
    }
    Eigen::Vector4cd solve(int m, int n, const Eigen::Vector4cd& rhs) const {
        return lu[m * dim + n].solve(rhs);
    }
};

inline LocalManifold seed_manifold(const Equilibrium& eq, const MassParameters& mp, Side side,
                                   double scale, int N) {
    LocalManifold L;
    L.masses = mp;
    L.eq = eq;
    L.side = side;
    select_pair(eq, side, L.lambda, L.xi);
    L.scale = scale;
    L.order = N;
    L.P = Taylor2<cplx>(4, N + 1, N + 1);
    L.P.conj_symmetric = true;
    const State x0 = eq.state();
    for (int k = 0; k < 4; ++k) {
        L.P(k, 0, 0) = x0[k];
        if (N >= 1) {
            L.P(k, 1, 0) = scale * L.xi[k];
            L.P(k, 0, 1) = scale * std::conj(L.xi[k]);
        }
    }
    return L;
}

// resize to a new truncation order, keeping coefficients of total order <= min
inline Taylor2<cplx> retruncate(const Taylor2<cplx>& P, int N) {
    Taylor2<cplx> Q(P.dim, N + 1, N + 1);
    Q.conj_symmetric = P.conj_symmetric;
    for (int k = 0; k < P.dim; ++k)
        for (int m = 0; m <= N && m < P.M; ++m)
            for (int n = 0; m + n <= N && n < P.N; ++n) Q(k, m, n) = P(k, m, n);
    return Q;
}

inline double order_block_max(const Taylor2<cplx>& P, int ord) {
    double best = 0;
    for (int m = 0; m <= ord; ++m) {
        const int n = ord - m;
        if (m >= P.M || n >= P.N) continue;
        double s = 0;
        for (int k = 0; k < P.dim; ++k) s = std::max(s, std::abs(P(k, m, n)));
        best = std::max(best, s);
    }
    return best;
}

}  // namespace detail

// coefficient-wise magnitude of the top order block
inline double top_order_norm(const LocalManifold& L) { return detail::order_block_max(L.P, L.order); }

// order-by-order solution of the homological equations
inline LocalManifold solve_recursion(const Equilibrium& eq, const MassParameters& mp, Side side,
                                     double scale, int N) {
    LocalManifold L = detail::seed_manifold(eq, mp, side, scale, N);
    const PrimaryConfig cfg = primary_positions(mp);
    const Mat4 Df = jacobian(eq.state(), cfg);
    const detail::HomologicalSolver hs(Df, L, N);
    FieldComposer<cplx> fc(cfg, N + 1, N + 1);
    fc.compute_all(L.P, std::min(N, 1));
    for (int ord = 2; ord <= N; ++ord) {
        for (int m = 0; m <= ord; ++m) {
            const int n = ord - m;
            fc.compute_at(L.P, m, n);  // p_{m,n} is still zero here
            Eigen::Vector4cd R;
            for (int k = 0; k < 4; ++k) R[k] = fc.f(k, m, n);
            const Eigen::Vector4cd p = hs.solve(m, n, -R);
            for (int k = 0; k < 4; ++k) L.P(k, m, n) = p[k];
            fc.compute_at(L.P, m, n);
        }
    }
    return L;
}

struct RefineOptions {
    double tol = 1e-14;
    int max_iter = 20;
    int diverge_after = 3;
};

struct RefineReport {
    int iterations = 0;
    std::vector<double> update_norms;
};

namespace detail {

// q = [f∘P] - (m λ1 + n λ2) p over total orders <= N
inline Taylor2<cplx> invariance_residual(const LocalManifold& L, FieldComposer<cplx>& fc) {
    const int N = L.order;
    fc.compute_all(L.P, N);
    Taylor2<cplx> q(4, N + 1, N + 1);
    for (int m = 0; m <= N; ++m)
        for (int n = 0; m + n <= N; ++n)
            for (int k = 0; k < 4; ++k) q(k, m, n) = fc.f(k, m, n) - L.mu(m, n) * L.P(k, m, n);
    return q;
}

inline double ell1(const Taylor2<cplx>& D) { return series::ell1_norm(D); }

template <class Step>
LocalManifold refine_loop(LocalManifold L, const RefineOptions& opt, RefineReport* rep, Step step) {
    int growth = 0;
    double prev = 1e300;
    for (int it = 0; it < opt.max_iter; ++it) {
        Taylor2<cplx> D = step(L);
        const double nrm = ell1(D);
        for (size_t i = 0; i < D.c.size(); ++i) L.P.c[i] += D.c[i];
        if (rep) {
            rep->iterations = it + 1;
            rep->update_norms.push_back(nrm);
        }
        if (nrm < opt.tol) return L;
        // growth only counts above rounding level
        if (nrm > prev && nrm > 1e-12) {
            if (++growth >= opt.diverge_after) throw NonConvergence("Newton updates growing");
        } else {
            growth = 0;
        }
        // stagnation at the rounding floor
        if (nrm < 1e-12 && nrm >= 0.5 * prev) return L;
        prev = nrm;
    }
    if (prev > 1e-10) throw NonConvergence("Newton iteration cap reached");
    return L;
}

}  // namespace detail

// full Newton: the linearized equation has non-constant coefficients and is
// solved by order-graded back substitution
inline LocalManifold newton_refine(const LocalManifold& P0, int N, const RefineOptions& opt = {},
                                   RefineReport* rep = nullptr) {
    LocalManifold L = P0;
    L.P = detail::retruncate(P0.P, N);
    L.order = N;
    const PrimaryConfig cfg = primary_positions(L.masses);
    const Mat4 Df = jacobian(L.eq.state(), cfg);
    const detail::HomologicalSolver hs(Df, L, N);
    return detail::refine_loop(L, opt, rep, [&](const LocalManifold& cur) {
        FieldComposer<cplx> fc(cfg, N + 1, N + 1, true);
        Taylor2<cplx> q = detail::invariance_residual(cur, fc);
        const Taylor2<cplx> A = fc.jacobian_series();
        Taylor2<cplx> D(4, N + 1, N + 1);
        for (int ord = 2; ord <= N; ++ord)
            for (int m = 0; m <= ord; ++m) {
                const int n = ord - m;
                Eigen::Vector4cd rhs;
                for (int r = 0; r < 4; ++r) {
                    cplx s = q(r, m, n);
                    // A_{m-j,n-k} D_{j,k} with (j,k) != (m,n); D vanishes below order 2
                    for (int j = 0; j <= m; ++j)
                        for (int k = 0; k <= n; ++k) {
                            if ((j == m && k == n) || j + k < 2) continue;
                            for (int c = 0; c < 4; ++c) s += A(4 * r + c, m - j, n - k) * D(c, j, k);
                        }
                    rhs[r] = -s;
                }
                const Eigen::Vector4cd d = hs.solve(m, n, rhs);
                for (int r = 0; r < 4; ++r) D(r, m, n) = d[r];
            }
        return D;
    });
}

// constant-coefficient (diagonal) Newton-like iteration
inline LocalManifold pseudo_newton_refine(const LocalManifold& P0, int N, RefineOptions opt = {},
                                          RefineReport* rep = nullptr) {
    LocalManifold L = P0;
    L.P = detail::retruncate(P0.P, N);
    L.order = N;
    const PrimaryConfig cfg = primary_positions(L.masses);
    const Mat4 Df = jacobian(L.eq.state(), cfg);
    const detail::HomologicalSolver hs(Df, L, N);
    if (opt.max_iter == RefineOptions{}.max_iter) opt.max_iter = 2 * N + 20;
    return detail::refine_loop(L, opt, rep, [&](const LocalManifold& cur) {
        FieldComposer<cplx> fc(cfg, N + 1, N + 1);
        Taylor2<cplx> q = detail::invariance_residual(cur, fc);
        Taylor2<cplx> D(4, N + 1, N + 1);
        for (int m = 0; m <= N; ++m)
            for (int n = 0; m + n <= N; ++n) {
                if (m + n < 2) continue;
                Eigen::Vector4cd rhs;
                for (int r = 0; r < 4; ++r) rhs[r] = -q(r, m, n);
                const Eigen::Vector4cd d = hs.solve(m, n, rhs);
                for (int r = 0; r < 4; ++r) D(r, m, n) = d[r];
            }
        return D;
    });
}

// sum over m+n <= N' of |(m λ1 + n λ2) p_{m,n} - [f∘P]_{m,n}|, max norm per coefficient
inline double defect(const LocalManifold& L, int Nprime = -1) {
    if (Nprime < 0) Nprime = 2 * L.order;
    Nprime = std::max(Nprime, L.order);
    const Taylor2<cplx> P = detail::retruncate(L.P, Nprime);
    FieldComposer<cplx> fc(primary_positions(L.masses), Nprime + 1, Nprime + 1);
    fc.compute_all(P, Nprime);
    double total = 0;
    for (int m = 0; m <= Nprime; ++m)
        for (int n = 0; m + n <= Nprime; ++n) {
            double e = 0;
            for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(L.mu(m, n) * P(k, m, n) - fc.f(k, m, n)));
            total += e;
        }
    return total;
}

// max over K boundary points of |Phi(P(z), t) - P(e^{λ t} z)|, with t = tau
// toward the equilibrium (negative on the unstable side)
inline double conjugacy_error(const LocalManifold& L, double tau = 0.1, int K = 32,
                              const IntegratorOptions& iopt = {}) {
    const PrimaryConfig cfg = primary_positions(L.masses);
    const double t = L.side == Side::Stable ? std::abs(tau) : -std::abs(tau);
    double worst = 0;
    for (int k = 0; k < K; ++k) {
        const cplx z = std::polar(1.0, 2 * std::numbers::pi * k / K);
        const State a = flow(L.eval_real(z), t, cfg, iopt);
        const State b = L.eval_real(std::exp(L.lambda * t) * z);
        double e = 0;
        for (int i = 0; i < 4; ++i) e += (a[i] - b[i]) * (a[i] - b[i]);
        worst = std::max(worst, std::sqrt(e));
    }
    return worst;
}

inline constexpr double kScalingTarget = 1e-17;

struct ScalingReport {
    double scale = 0;
    double top = 0;
    double decay_rate = 0;
    int adjustments = 0;
    bool fallback = false;
    std::string warning;
};

// Pick the eigenvector scale from the geometric decay of a probe solve so the
// top order block of the production solve lands in [1e-17, 1e-13].
inline ScalingReport choose_scaling_report(const Equilibrium& eq, const MassParameters& mp, Side side,
                                           int N, int N0 = -1, double target = kScalingTarget) {
    if (N0 < 0) N0 = std::max(10, N / 2);
    ScalingReport rep;
    const LocalManifold probe = solve_recursion(eq, mp, side, 1.0, N0);
    // least-squares fit of log max|p| against order over the upper half of the probe
    std::vector<double> ks, ls;
    for (int k = std::max(2, N0 / 3); k <= N0; ++k) {
        const double a = detail::order_block_max(probe.P, k);
        if (a > 0) {
            ks.push_back(k);
            ls.push_back(std::log(a));
        }
    }
    double slope = 0, icept = 0, r2 = 0;
    if (ks.size() >= 3) {
        const double n = double(ks.size());
        double sk = 0, sl = 0, skk = 0, skl = 0;
        for (size_t i = 0; i < ks.size(); ++i) {
            sk += ks[i];
            sl += ls[i];
            skk += ks[i] * ks[i];
            skl += ks[i] * ls[i];
        }
        slope = (n * skl - sk * sl) / (n * skk - sk * sk);
        icept = (sl - slope * sk) / n;
        double ss = 0, st = 0;
        const double mean = sl / n;
        for (size_t i = 0; i < ks.size(); ++i) {
            const double fit = icept + slope * ks[i];
            ss += (ls[i] - fit) * (ls[i] - fit);
            st += (ls[i] - mean) * (ls[i] - mean);
        }
        r2 = st > 0 ? 1 - ss / st : 0;
    }
    if (ks.size() < 3 || r2 < 0.6 || slope > 10) {
        rep.scale = 1e-3;
        rep.fallback = true;
        rep.warning = "non-geometric coefficient decay; falling back to scale 1e-3";
        rep.top = top_order_norm(solve_recursion(eq, mp, side, rep.scale, N));
        return rep;
    }
    rep.decay_rate = std::exp(slope);
    // extrapolated top block at unit scale is exp(icept + slope N)
    double s = std::exp((std::log(target) - icept - slope * N) / N);
    double top = 0;
    for (int adj = 0; adj <= 5; ++adj) {
        top = top_order_norm(solve_recursion(eq, mp, side, s, N));
        if (top >= 1e-17 && top <= 1e-13) break;
        if (adj == 5) break;
        // exact rescaling law: order-N block scales by c^N
        s *= std::pow(target / top, 1.0 / N);
        rep.adjustments = adj + 1;
    }
    rep.scale = s;
    rep.top = top;
    return rep;
}

inline double choose_scaling(const Equilibrium& eq, const MassParameters& mp, Side side, int N) {
    return choose_scaling_report(eq, mp, side, N).scale;
}

// default pipeline: recursion to N0 = max(10, N/2), then pseudo-Newton to N
inline LocalManifold compute_local_manifold(const Equilibrium& eq, const MassParameters& mp, Side side,
                                            int N, double scale = -1) {
    if (scale <= 0) scale = choose_scaling(eq, mp, side, N);
    const int N0 = std::min(N, std::max(10, N / 2));
    LocalManifold L = solve_recursion(eq, mp, side, scale, N0);
    if (N0 < N) L = pseudo_newton_refine(L, N);
    return L;
}

// rescale an existing manifold to a new eigenvector length
inline LocalManifold rescale(const LocalManifold& L, double new_scale) {
    LocalManifold out = L;
    const double c = new_scale / L.scale;
    for (int k = 0; k < 4; ++k)
        for (int m = 0; m <= L.order; ++m)
            for (int n = 0; m + n <= L.order; ++n) out.P(k, m, n) *= std::pow(c, m + n);
    out.scale = new_scale;
    return out;
}

}  // namespace crfbp
