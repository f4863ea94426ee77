#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include <crfbp/integrator.hpp>
#include <crfbp/mining.hpp>

#include "l0_fixture.hpp"
#include "test_util.hpp"

using namespace crfbp;

namespace {

// chart with a prescribed value and linear/quadratic shape around (s0, t0)
Chart synthetic_chart(const State& p, double s0, double t0, double w) {
    Chart ch;
    ch.id = 0;
    ch.G = series::Taylor2<double>(4, 3, 3);
    // x = p0 + (s - s0) + 0.1 (t - t0)^2, y' = w, y = p2 + (t - t0) + 0.2 (s - s0)(t - t0), x' = p1 + 0.3 (s - s0)
    auto& G = ch.G;
    G(0, 0, 0) = p[0] - s0 + 0.1 * t0 * t0;
    G(0, 0, 1) = 1;
    G(0, 1, 0) = -0.2 * t0;
    G(0, 2, 0) = 0.1;
    G(2, 0, 0) = p[2] - t0 + 0.2 * s0 * t0;
    G(2, 1, 0) = 1 - 0.2 * s0;
    G(2, 0, 1) = -0.2 * t0;
    G(2, 1, 1) = 0.2;
    G(1, 0, 0) = p[1] - 0.3 * s0;
    G(1, 0, 1) = 0.3;
    G(3, 0, 0) = w;
    ch.box = make_box(G);
    ch.lineage.angle_halfwidth = 0.1;
    return ch;
}

BoundaryArc synthetic_edge(const State& p, double sig0, double w) {
    // σ enters x' linearly and x quadratically
    BoundaryArc a;
    a.gamma = series::Taylor1<double>(4, 3);
    a.gamma(0, 0) = p[0] + 0.5 * sig0 * sig0;
    a.gamma(0, 1) = -sig0;
    a.gamma(0, 2) = 0.5;
    a.gamma(1, 0) = p[1] - 0.7 * sig0;
    a.gamma(1, 1) = 0.7;
    a.gamma(2, 0) = p[2];
    a.gamma(3, 0) = w;
    a.box = make_box(a.gamma);
    return a;
}

double dist_inf(const State& a, const State& b) {
    double e = 0;
    for (int k = 0; k < 4; ++k) e = std::max(e, std::abs(a[k] - b[k]));
    return e;
}

}  // namespace

TEST(BoxOverlap, IdenticalAndSeparated) {
    L1Box a;
    a.lo = {0, 0, 0, 0};
    a.hi = {1, 1, 1, 1};
    EXPECT_TRUE(box_overlap(a, a, 0));
    L1Box b = a;
    b.lo[1] = 2.5;
    b.hi[1] = 3;
    EXPECT_FALSE(box_overlap(a, b, 1e-6));
}

TEST(NewtonIntersect, RecoversConstructedCrossing) {
    const State p{0.2, -0.4, 0.6, 0.3};
    const auto U = synthetic_chart(p, 0.3, 0.5, 0.25);
    const auto S = synthetic_edge(p, -0.2, 0.4);
    const auto cands = newton_intersect(U, S);
    ASSERT_EQ(cands.size(), 1u);
    const auto& c = cands[0];
    EXPECT_NEAR(c.root[0], 0.3, 1e-10);
    EXPECT_NEAR(c.root[1], 0.5, 1e-10);
    EXPECT_NEAR(c.root[2], -0.2, 1e-10);
    EXPECT_LE(c.residual, 1e-11);
    EXPECT_EQ(c.status, CandidateStatus::Certified);
}

TEST(NewtonIntersect, MirroredFourthCoordinateIsPseudo) {
    const State p{0.2, -0.4, 0.6, 0.3};
    const auto U = synthetic_chart(p, 0.3, 0.5, 0.25);
    const auto S = synthetic_edge(p, -0.2, -0.25);
    const auto cands = newton_intersect(U, S);
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_EQ(cands[0].status, CandidateStatus::Pseudo);
}

TEST(NewtonIntersect, NearZeroFourthCoordinateIsAmbiguous) {
    const State p{0.2, -0.4, 0.6, 0.3};
    const auto cands = newton_intersect(synthetic_chart(p, 0.3, 0.5, 5e-5), synthetic_edge(p, -0.2, 0.4));
    ASSERT_EQ(cands.size(), 1u);
    EXPECT_EQ(cands[0].status, CandidateStatus::Ambiguous);
}

TEST(NewtonIntersect, DisjointChartsHaveNoRoot) {
    const State p{0.2, -0.4, 0.6, 0.3};
    State q = p;
    q[0] += 10;
    EXPECT_TRUE(newton_intersect(synthetic_chart(p, 0.3, 0.5, 0.2), synthetic_edge(q, 0.0, 0.2)).empty());
}

TEST(Mine, EmptyStableAtlas) {
    const auto& f = testutil::l0_atlases();
    Atlas empty = f.As;
    empty.charts.clear();
    empty.arcs.clear();
    for (auto& g : empty.generations) g.clear();
    EXPECT_TRUE(mine(f.Au, empty).empty());
}

TEST(Mine, RejectsEnergyMismatch) {
    const auto& f = testutil::l0_atlases();
    Atlas other = f.As;
    other.local.masses = MassParameters::from_m1_m3(0.4, 0.25);
    EXPECT_THROW(mine(f.Au, other), ConfigurationError);
}

TEST(Mine, FindsShortestConnections) {
    const auto& f = testutil::l0_atlases();
    const auto cert = certified_only(f.mined);
    ASSERT_GE(cert.size(), 2u);
    double tmin = 1e9;
    for (const auto& c : cert) tmin = std::min(tmin, c.connection_time());
    EXPECT_NEAR(tmin, 1.717, 5e-2);
}

TEST(Mine, CertifiedCandidateInvariants) {
    const auto& f = testutil::l0_atlases();
    const double far = MiningOptions{}.far;
    for (const auto& c : certified_only(f.mined)) {
        EXPECT_LE(c.residual, 1e-11);
        EXPECT_GE(std::abs(c.w_u), far);
        EXPECT_GE(std::abs(c.w_s), far);
        EXPECT_EQ(c.w_u > 0, c.w_s > 0);
        for (double r : c.root) EXPECT_LE(std::abs(r), 1.01);
    }
}

TEST(Mine, CertifiedCandidatesReintegrate) {
    const auto& f = testutil::l0_atlases();
    const auto cfg = f.Lu.config();
    for (const auto& c : certified_only(f.mined)) {
        const State back = flow(c.point, -c.t_u, cfg);
        EXPECT_LE(dist_inf(back, f.Lu.boundary(c.angle_u)), 1e-7);
        const State fwd = flow(c.point, c.t_s, cfg);
        EXPECT_LE(dist_inf(fwd, f.Ls.boundary(c.angle_s)), 1e-7);
    }
}

TEST(Mine, EnergyConsistency) {
    const auto& f = testutil::l0_atlases();
    const auto cfg = f.Lu.config();
    const double E0 = jacobi_integral(f.Lu.equilibrium_state(), cfg);
    for (const auto& c : certified_only(f.mined)) EXPECT_LE(std::abs(jacobi_integral(c.point, cfg) - E0), 1e-8);
}

TEST(Mine, CandidatesAreDistinctOrbits) {
    const auto& f = testutil::l0_atlases();
    const auto cfg = f.Lu.config();
    for (size_t i = 0; i < f.mined.size(); ++i)
        for (size_t j = i + 1; j < f.mined.size(); ++j) EXPECT_FALSE(same_orbit(f.mined[i], f.mined[j], cfg));
}

TEST(Mine, BoxFilterHasNoFalseNegatives) {
    const auto& f = testutil::l0_atlases();
    auto samples = [](const Chart& ch) {
        std::vector<State> out;
        for (int p = 0; p < 7; ++p)
            for (int q = 0; q < 7; ++q) out.push_back(ch.eval(-1 + p / 3.0, q / 6.0));
        return out;
    };
    std::vector<std::vector<State>> su, ss;
    for (const auto& ch : f.Au.charts) su.push_back(samples(ch));
    for (const auto& ch : f.As.charts) ss.push_back(samples(ch));
    const int nu = int(su.size()), ns = int(ss.size());
    int excluded = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int i = int(testutil::uniform(0, nu)) % nu, j = int(testutil::uniform(0, ns)) % ns;
        if (box_overlap(f.Au.charts[i].box, f.As.charts[j].box, 0)) continue;
        ++excluded;
        double dmin = 1e300;
        for (const auto& x : su[i])
            for (const auto& y : ss[j]) dmin = std::min(dmin, dist_inf(x, y));
        EXPECT_GT(dmin, 0);
    }
    EXPECT_GT(excluded, 9000);
}

TEST(Mine, BoxSamplesStayInside) {
    const auto& f = testutil::l0_atlases();
    for (int trial = 0; trial < 2000; ++trial) {
        const auto& ch = f.Au.charts[size_t(trial) % f.Au.charts.size()];
        const State x = ch.eval(testutil::uniform(), testutil::uniform(0, 1));
        for (int k = 0; k < 4; ++k) {
            EXPECT_GE(x[k], ch.box.lo[k] - 1e-12);
            EXPECT_LE(x[k], ch.box.hi[k] + 1e-12);
        }
    }
}

TEST(Mine, PrefilterSoundOnAuditSample) {
    const auto& f = testutil::l0_atlases();
    // audit pairs near the known roots plus random ones
    std::vector<std::pair<int, int>> pairs;
    for (const auto& c : f.mined) pairs.push_back({c.u_chart, c.s_chart});
    while (pairs.size() < 500) {
        const int i = int(testutil::uniform(0, double(f.Au.charts.size())));
        const int j = int(testutil::uniform(0, double(f.As.charts.size())));
        pairs.push_back({std::min(i, int(f.Au.charts.size()) - 1), std::min(j, int(f.As.charts.size()) - 1)});
    }
    for (const auto& [u, s] : pairs) {
        const auto& U = f.Au.charts[u];
        const auto& edge = f.As.arcs[f.As.charts[s].parent_arc];
        for (const auto& c : newton_intersect(U, edge)) {
            if (c.status != CandidateStatus::Certified) continue;
            EXPECT_TRUE(box_overlap(U.box, edge.box, 0));
        }
    }
}

TEST(Mine, SymmetryClosure) {
    const auto& f = testutil::l0_atlases();
    const auto cfg = f.Lu.config();
    const auto full = mine(symmetry_expand(f.Au), f.As);
    const auto cert = certified_only(full);
    ASSERT_EQ(cert.size() % 3, 0u);
    for (const auto& c : cert)
        for (int r = 1; r <= 2; ++r) {
            IntersectionCandidate rc = c;
            rc.point = apply_matrix(symmetry_rotation(r), c.point);
            const cvec4 Rxi = symmetry_rotation(r).cast<cplx>() * f.Lu.xi;
            rc.angle_u = c.angle_u + std::arg(f.Lu.xi.dot(Rxi));
            bool matched = false;
            for (const auto& d : cert) matched = matched || same_orbit(rc, d, cfg);
            EXPECT_TRUE(matched);
        }
}

TEST(Mine, SeedGridRefinementAddsOnlyDuplicates) {
    const auto& f = testutil::l0_atlases();
    const auto cfg = f.Lu.config();
    MiningOptions opt;
    opt.seeds_per_axis = 5;
    const auto fine = certified_only(mine(f.Au, f.As, opt));
    const auto coarse = certified_only(f.mined);
    EXPECT_EQ(fine.size(), coarse.size());
    for (const auto& c : fine) {
        bool matched = false;
        for (const auto& d : coarse) matched = matched || same_orbit(c, d, cfg);
        EXPECT_TRUE(matched);
    }
}

TEST(ResolveAmbiguous, DecisiveUnchanged) {
    const auto& f = testutil::l0_atlases();
    for (auto c : f.mined) {
        const auto before = c.status;
        if (before == CandidateStatus::Ambiguous) continue;
        EXPECT_EQ(resolve_ambiguous(c, f.Au, f.As), before);
    }
}

TEST(ResolveAmbiguous, BecomesDecisiveAlongLineage) {
    const auto& f = testutil::l0_atlases();
    // raise the far-threshold just above this crossing's fourth coordinate;
    // the same orbit crosses a neighbouring generation pair further from zero
    int tried = 0, resolved = 0;
    for (auto c : certified_only(f.mined)) {
        MiningOptions opt;
        opt.far = std::min(std::abs(c.w_u), std::abs(c.w_s)) * 1.01;
        c.status = CandidateStatus::Ambiguous;
        ++tried;
        if (resolve_ambiguous(c, f.Au, f.As, opt) == CandidateStatus::Certified) ++resolved;
    }
    ASSERT_GT(tried, 0);
    EXPECT_GT(resolved, 0);
}

TEST(ResolveAmbiguous, AllFixtureCandidatesResolve) {
    const auto& f = testutil::l0_atlases();
    MiningReport rep;
    mine(f.Au, f.As, {}, &rep);
    int ambiguous = 0;
    for (auto c : rep.raw) {
        if (c.status != CandidateStatus::Ambiguous) continue;
        ++ambiguous;
        EXPECT_NE(resolve_ambiguous(c, f.Au, f.As), CandidateStatus::Ambiguous);
    }
    RecordProperty("ambiguous", ambiguous);
}
