#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include <crfbp/atlas.hpp>

#include "test_util.hpp"

using namespace crfbp;

namespace {

const MassParameters kEqual = MassParameters::equal();

const Equilibrium& l0() {
    static const Equilibrium eq = *find_labeled(find_equilibria(kEqual), 0);
    return eq;
}

const LocalManifold& l0_local(Side side) {
    static const LocalManifold u = compute_local_manifold(l0(), kEqual, Side::Unstable, 45);
    static const LocalManifold s = compute_local_manifold(l0(), kEqual, Side::Stable, 45);
    return side == Side::Unstable ? u : s;
}

AtlasParams reference_params(double T) {
    AtlasParams p;
    p.kappa = 3;
    p.T = T;
    return p;
}

const Atlas& small_atlas() {
    static const Atlas A = build_atlas(l0_local(Side::Unstable), reference_params(0.25));
    return A;
}

double max_abs_diff(const State& a, const State& b) {
    double e = 0;
    for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(a[k] - b[k]));
    return e;
}

BoundaryArc arc_from(const std::vector<std::vector<double>>& coords) {
    BoundaryArc a;
    int N = 0;
    for (const auto& c : coords) N = std::max(N, int(c.size()));
    a.gamma = series::Taylor1<double>(4, N);
    for (int k = 0; k < 4; ++k)
        for (int n = 0; n < int(coords[k].size()); ++n) a.gamma(k, n) = coords[k][n];
    a.lineage.angle_halfwidth = 1;
    return a;
}

// (1 + 0.9 s)^(-3/2) in every coordinate, plus distinct offsets
BoundaryArc steep_arc(double rate, int N = 20) {
    std::vector<std::vector<double>> c(4, std::vector<double>(N));
    for (int k = 0; k < 4; ++k) {
        double b = 1;
        for (int n = 0; n < N; ++n) {
            c[k][n] = b * (k + 1);
            b *= (-1.5 - n) / (n + 1) * rate;
        }
    }
    return arc_from(c);
}

}  // namespace

TEST(InitialBoundary, FullCircleSingleArcIsCyclic) {
    const auto L = solve_recursion(l0(), kEqual, Side::Unstable, 1e-3, 3);
    const auto arcs = initial_boundary(L, 1, false, 60);
    ASSERT_EQ(arcs.size(), 1u);
    EXPECT_LE(max_abs_diff(arcs[0].eval(-1), arcs[0].eval(1)), 1e-12);
}

TEST(InitialBoundary, ConsecutiveArcsJoin) {
    const auto& L = l0_local(Side::Unstable);
    const auto arcs = initial_boundary(L, 30, false);
    for (size_t j = 0; j < arcs.size(); ++j)
        EXPECT_LE(max_abs_diff(arcs[j].eval(1), arcs[(j + 1) % arcs.size()].eval(-1)), 1e-12);
}

TEST(InitialBoundary, LiftedPointsOnConjugacyImage) {
    const auto& L = l0_local(Side::Unstable);
    const auto arcs = initial_boundary(L, 10, true);
    ASSERT_EQ(arcs.size(), 10u);
    const auto cfg = L.config();
    for (const auto& a : arcs) {
        EXPECT_LE(a.lineage.angle(1), 2 * std::numbers::pi / 3 + 1e-12);
        for (double s : {-1.0, -0.3, 0.4, 1.0}) {
            const double th = a.lineage.angle(s);
            EXPECT_LE(max_abs_diff(a.eval(s), L.boundary(th)), 1e-12);
            // flowing back lands on the disk image at e^{-λt} z
            const State back = flow(a.eval(s), -0.1, cfg);
            const State img = L.eval_real(std::exp(-L.lambda * 0.1) * std::polar(1.0, th));
            EXPECT_LE(max_abs_diff(back, img), 1e-10);
        }
    }
}

TEST(InitialBoundary, RejectsUnconvergedManifold) {
    const auto L = solve_recursion(l0(), kEqual, Side::Unstable, 1.0, 1);
    EXPECT_THROW(initial_boundary(L, 10, true), NumericalError);
}

TEST(InitialBoundary, RejectsArcsTooWideForDegree) {
    EXPECT_THROW(initial_boundary(l0_local(Side::Unstable), 2, false), NumericalError);
}

TEST(Remesh, WellConditionedArcUnchanged) {
    const auto a = steep_arc(0.01);
    const auto r = remesh(a, 1e-10, 10);
    ASSERT_EQ(r.arcs.size(), 1u);
    EXPECT_EQ(r.arcs[0].gamma.c, a.gamma.c);
}

TEST(Remesh, SteepArcCorpus) {
    for (int i = 0; i < 50; ++i) {
        const double rate = 0.5 + 0.45 * i / 49.0;
        const auto a = steep_arc(rate);
        const auto r = remesh(a, 1e-10, 10, 2, 8);
        EXPECT_TRUE(r.pathological.empty());
        ASSERT_GT(r.arcs.size(), 1u);
        for (const auto& b : r.arcs) {
            EXPECT_LT(detail::arc_tail_ratio(b, 10), 1e-10);
            EXPECT_LE(b.lineage.history.size(), 8u);
        }
        // union of subarcs reproduces the parent
        for (int j = 0; j < 100; ++j) {
            const double s = -1 + 2.0 * (j + 0.5) / 100;
            for (const auto& b : r.arcs) {
                const double c = b.lineage.angle_center, h = b.lineage.angle_halfwidth;
                if (s < c - h || s > c + h) continue;
                EXPECT_LE(max_abs_diff(b.eval((s - c) / h), a.eval(s)), 1e-12);
                break;
            }
        }
    }
}

TEST(Remesh, DepthCapFlagsPathological) {
    const auto a = steep_arc(0.95);
    const auto r = remesh(a, 1e-10, 10, 2, 1);
    EXPECT_FALSE(r.pathological.empty());
}

TEST(SpeedClip, SlowArcUnchanged) {
    const auto a = arc_from({{0.1, 0.2}, {0.5, 0.1}, {0.0}, {0.3, -0.2}});
    const auto r = speed_clip(a, 2.0);
    ASSERT_EQ(r.arcs.size(), 1u);
    EXPECT_EQ(r.arcs[0].gamma.c, a.gamma.c);
    EXPECT_TRUE(r.discarded.empty());
}

TEST(SpeedClip, SingleCrossingKeepsSlowSide) {
    // xdot = 2 + s crosses kappa = 2.5 at s = 0.5
    const auto a = arc_from({{0.0}, {2.0, 1.0}, {0.0}, {0.0}});
    const auto r = speed_clip(a, 2.5);
    ASSERT_EQ(r.arcs.size(), 1u);
    const auto& k = r.arcs[0];
    EXPECT_NEAR(k.lineage.angle(-1), -1.0, 1e-12);
    EXPECT_NEAR(k.lineage.angle(1), 0.5, 1e-12);
    EXPECT_LE(max_speed(k), 2.5 + 1e-9);
    ASSERT_EQ(r.discarded.size(), 1u);
    // dense sampling of the discarded piece: all fast
    for (int i = 1; i < 200; ++i) {
        const double s = r.discarded[0][0] + (r.discarded[0][1] - r.discarded[0][0]) * i / 200;
        EXPECT_GT(arc_speed(a, s), 2.5);
    }
}

TEST(SpeedClip, FastEndsKeepMiddle) {
    // ydot = 3 s^2 exceeds 1.5 for |s| > 1/sqrt(2)
    const auto a = arc_from({{0.0}, {0.0}, {0.0}, {0.0, 0.0, 3.0}});
    const auto r = speed_clip(a, 1.5);
    ASSERT_EQ(r.arcs.size(), 1u);
    EXPECT_NEAR(r.arcs[0].lineage.angle(1), 1 / std::sqrt(2.0), 1e-12);
    EXPECT_NEAR(r.arcs[0].lineage.angle(-1), -1 / std::sqrt(2.0), 1e-12);
    EXPECT_EQ(r.discarded.size(), 2u);
}

TEST(SpeedClip, SlowEndsKeepBoth) {
    // xdot = 3 (1 - s^2): fast in the middle
    const auto a = arc_from({{0.0}, {3.0, 0.0, -3.0}, {0.0}, {0.0}});
    const auto r = speed_clip(a, 1.5);
    ASSERT_EQ(r.arcs.size(), 2u);
    for (const auto& k : r.arcs) EXPECT_LE(max_speed(k), 1.5 + 1e-9);
}

TEST(Grow, ShortHorizonSingleGeneration) {
    auto p = reference_params(0.01);
    const auto A = build_atlas(l0_local(Side::Unstable), p);
    EXPECT_GE(A.chart_count(), p.K0);
    EXPECT_EQ(A.generations.size(), 2u);
    EXPECT_EQ(A.generation_counts().back(), A.chart_count());
    for (const auto& a : A.pending) EXPECT_NEAR(a.lineage.elapsed, 0.01, 1e-15);
}

TEST(Grow, ChartCountNearReference) {
    const auto& A = small_atlas();
    EXPECT_GE(A.chart_count(), 39 / 2.0);
    EXPECT_LE(A.chart_count(), 39 * 2.0);
    const auto S = build_atlas(l0_local(Side::Stable), reference_params(0.25));
    EXPECT_GE(S.chart_count(), 39 / 2.0);
    EXPECT_LE(S.chart_count(), 39 * 2.0);
    for (const auto& ch : S.charts) EXPECT_LT(ch.tau, 0);
}

TEST(Grow, TimeBookkeeping) {
    const auto& A = small_atlas();
    for (const auto& ch : A.charts) EXPECT_LE(ch.lineage.elapsed + std::abs(ch.tau), 0.25 * (1 + 1e-12));
}

TEST(Grow, LineageStructure) {
    const auto& A = small_atlas();
    for (size_t g = 1; g < A.generations.size(); ++g)
        for (int id : A.generations[g]) {
            const auto& ch = A.charts[id];
            EXPECT_EQ(ch.generation, int(g));
            ASSERT_GE(ch.parent_arc, 0);
            const auto& f = A.frontiers[g - 1];
            EXPECT_NE(std::find(f.begin(), f.end(), ch.parent_arc), f.end());
            EXPECT_EQ(A.arcs[ch.parent_arc].child_chart, id);
            // base edge is the parent arc exactly
            for (int k = 0; k < 4; ++k)
                for (int n = 0; n < ch.G.N; ++n) EXPECT_EQ(ch.G(k, 0, n), A.arcs[ch.parent_arc].gamma(k, n));
        }
}

TEST(Grow, FrontierPostconditions) {
    const auto& A = small_atlas();
    const auto cfg = A.config();
    for (const auto& a : A.arcs) {
        EXPECT_LT(detail::arc_tail_ratio(a, A.params.tail_cutoff), A.params.eps);
        EXPECT_LE(max_speed(a), A.params.kappa + 1e-9);
        EXPECT_GT(min_transversality_angle(a, cfg), 1e-3);
    }
}

TEST(Grow, StrictGrowth) {
    const auto& A = small_atlas();
    const auto& first = A.frontiers[0];
    for (const auto& e : A.pending) {
        for (int i = 0; i <= 8; ++i) {
            const State x = e.eval(-1 + i / 4.0);
            double best = 1e300;
            for (int id : first)
                for (int j = 0; j <= 32; ++j) best = std::min(best, max_abs_diff(x, A.arcs[id].eval(-1 + j / 16.0)));
            EXPECT_GT(best, 1e-10);
        }
    }
}

TEST(Grow, EnergyCoherence) {
    const auto& A = small_atlas();
    const auto cfg = A.config();
    const double E0 = jacobi_integral(l0().state(), cfg);
    for (const auto& ch : A.charts)
        for (double s : {-1.0, 0.0, 1.0})
            for (double t : {0.0, 0.5, 1.0})
                EXPECT_LE(std::abs(jacobi_integral(ch.eval(s, t), cfg) - E0) / std::abs(E0), 1e-8);
}

TEST(Grow, Deterministic) {
    const auto B = build_atlas(l0_local(Side::Unstable), reference_params(0.25));
    const auto& A = small_atlas();
    ASSERT_EQ(A.chart_count(), B.chart_count());
    for (int i = 0; i < A.chart_count(); ++i) {
        EXPECT_EQ(A.charts[i].G.c, B.charts[i].G.c);
        EXPECT_EQ(A.charts[i].parent_arc, B.charts[i].parent_arc);
        EXPECT_EQ(A.charts[i].tau, B.charts[i].tau);
    }
}

TEST(Grow, ResumesToLongerHorizon) {
    Atlas A = build_atlas(l0_local(Side::Unstable), reference_params(0.1));
    grow(A, 0.25);
    for (const auto& a : A.pending) EXPECT_NEAR(a.lineage.elapsed, 0.25, 1e-12);
}

TEST(Symmetry, RotationOrderThree) {
    const auto& A = small_atlas();
    const Mat4 R = symmetry_rotation(1);
    for (const auto& ch : A.charts) {
        const auto G3 = detail::rotate(detail::rotate(detail::rotate(ch.G, R), R), R);
        for (size_t i = 0; i < G3.c.size(); ++i) EXPECT_NEAR(G3.c[i], ch.G.c[i], 1e-13);
    }
}

TEST(Symmetry, ExpandedAtlasTriples) {
    const auto& A = small_atlas();
    const auto X = symmetry_expand(A);
    EXPECT_EQ(X.chart_count(), 3 * A.chart_count());
    EXPECT_EQ(X.arcs.size(), 3 * A.arcs.size());
    EXPECT_EQ(X.copy_labels, (std::vector<int>{0, 0, 0}));
    int total = 0;
    for (const auto& g : X.generations) total += int(g.size());
    EXPECT_EQ(total, X.chart_count());
    EXPECT_THROW(grow(const_cast<Atlas&>(X), 1.0), ConfigurationError);
}

TEST(Symmetry, RotatedChartsSolveTheFlow) {
    const auto X = symmetry_expand(small_atlas());
    const auto cfg = X.config();
    for (size_t i = small_atlas().charts.size(); i < X.charts.size(); i += 3) {
        const auto& ch = X.charts[i];
        for (double s : {-0.7, 0.2, 0.9})
            for (double t : {0.1, 0.6}) {
                const State d = ch.eval_dt(s, t);
                const State f = vector_field(ch.eval(s, t), cfg);
                double e = 0;
                for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(d[k] - ch.tau * f[k]));
                EXPECT_LE(e, 1e-10);
            }
    }
}

TEST(Symmetry, RotatedLineageAnglesMatchLocalBoundary) {
    const auto& A = small_atlas();
    const auto X = symmetry_expand(A);
    const auto& L = A.local;
    for (size_t i = A.arcs.size(); i < X.arcs.size(); ++i) {
        const auto& a = X.arcs[i];
        if (a.generation != 0) continue;
        EXPECT_LE(max_abs_diff(a.eval(0.3), L.boundary(a.lineage.angle(0.3))), 1e-11);
    }
}

TEST(Symmetry, L5CopiesRelabeled) {
    const auto eqs = find_equilibria(kEqual);
    const auto l5 = *find_labeled(eqs, 5);
    const auto L = compute_local_manifold(l5, kEqual, Side::Unstable, 20);
    AtlasParams p;
    p.K0 = 30;
    p.symmetric = false;
    p.T = 0.02;
    const auto X = symmetry_expand(build_atlas(L, p));
    ASSERT_EQ(X.copy_labels.size(), 3u);
    EXPECT_EQ(X.copy_labels[0], 5);
    EXPECT_EQ(std::set<int>(X.copy_labels.begin(), X.copy_labels.end()), (std::set<int>{4, 5, 6}));
    // copies sit on the target equilibrium's own local boundary
    for (int r = 1; r <= 2; ++r) {
        const auto tgt = *find_labeled(eqs, X.copy_labels[r]);
        const auto Lt = compute_local_manifold(tgt, kEqual, Side::Unstable, 20, L.scale);
        for (const auto& a : X.arcs) {
            if (a.lineage.copy != r || a.generation != 0) continue;
            EXPECT_LE(max_abs_diff(a.eval(0.0), Lt.boundary(a.lineage.angle(0.0))), 1e-10);
        }
    }
}

TEST(Symmetry, RejectsUnequalMasses) {
    Atlas A = small_atlas();
    A.local.masses = MassParameters::from_m1_m3(0.4, 0.3);
    EXPECT_THROW(symmetry_expand(A), ConfigurationError);
}
