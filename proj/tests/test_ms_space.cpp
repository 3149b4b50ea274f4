#include "mixedms/ms_space.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mixedms;

namespace {

struct Problem {
    Grid grid;
    FineSystem sys;
    SnapshotSpace space;
    std::vector<FaceEigen> eigen;
    SourceField f;

    explicit Problem(GridSpec gs, double contrast = 1e4, unsigned seed = 4) : grid(build_grid(gs)) {
        FieldSpec spec;
        spec.contrast = contrast;
        spec.seed = seed;
        spec.random_rects = 5;
        spec.random_channels = 2;
        sys = assemble(grid, generate_field(grid, spec));
        space = assemble_space(grid, sys);
        for (int i = 0; i < grid.num_coarse_faces(); ++i)
            eigen.push_back(spectral_problem_1(grid, sys, space.at(i)));
        f = corner_source(grid);
    }

    MsBasisSelection uniform(int l) const {
        std::vector<int> counts(grid.num_coarse_faces());
        for (int i = 0; i < grid.num_coarse_faces(); ++i)
            counts[i] = std::min(l, space.at(i).dim());
        return select_offline(eigen, counts);
    }
};

}  // namespace

TEST(MsSpace, FullSelectionSpansSnapshotSpace) {
    Problem p({2, 2, 4});
    const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(p.grid.spec.nf), p.eigen);
    EXPECT_EQ(ms.dof(), p.space.total_dim);
    for (char a : ms.artificial) EXPECT_EQ(a, 0);  // saturated faces never get one

    const MsSolution sol = solve_ms(ms, p.sys, p.f);
    const GalerkinSolution ref = solve_snapshot_reference(p.space, p.sys, p.f);
    EXPECT_LE(snapshot_error(sol, ref, p.sys), 1e-10);
}

TEST(MsSpace, DofCountMatchesSelection) {
    Problem p({3, 3, 4});
    const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(2), p.eigen);
    int expect = 0;
    for (std::size_t i = 0; i < p.space.faces.size(); ++i)
        expect += 2 + (ms.artificial[i] ? 1 : 0);
    EXPECT_EQ(ms.dof(), expect);

    // paper-scale arithmetic: 2 per face on the 15x15 grid gives 840
    EXPECT_EQ(2 * build_grid({15, 15, 2}).num_coarse_faces(), 840);
}

TEST(MsSpace, DeterministicRebuild) {
    Problem p({2, 2, 3});
    const MsSpace a = build_ms_space(p.grid, p.sys, p.space, p.uniform(2), p.eigen);
    const MsSpace b = build_ms_space(p.grid, p.sys, p.space, p.uniform(2), p.eigen);
    EXPECT_TRUE(Mat(a.expansion) == Mat(b.expansion));
}

TEST(MsSpace, ZeroSourceGivesZero) {
    Problem p({2, 2, 3});
    const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(1), p.eigen);
    SourceField zero;
    zero.f.assign(p.grid.num_blocks(), 0.0);
    EXPECT_NEAR(solve_ms(ms, p.sys, zero).velocity.norm(), 0.0, 1e-12);
}

TEST(MsSpace, BlockwiseDivergenceMatchesSnapshotSolution) {
    // div(v_snap - v_ms) vanishes blockwise for any selection
    Problem p({2, 2, 4});
    const GalerkinSolution ref = solve_snapshot_reference(p.space, p.sys, p.f);
    std::mt19937 rng(12);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<int> counts(p.grid.num_coarse_faces());
        std::uniform_int_distribution<int> pick(1, p.grid.spec.nf);
        for (int& c : counts) c = pick(rng);
        const MsSpace ms =
            build_ms_space(p.grid, p.sys, p.space, select_offline(p.eigen, counts), p.eigen);
        const MsSolution sol = solve_ms(ms, p.sys, p.f);
        const Vec diff = p.sys.B_coarse * (ref.velocity - sol.velocity);
        EXPECT_LE(diff.norm(), 1e-10 * (p.sys.B_coarse * ref.velocity).norm() + 1e-13);
    }
}

TEST(MsSpace, GalerkinOrthogonalityOnDivFreeMembers) {
    Problem p({2, 2, 4});
    const GalerkinSolution ref = solve_snapshot_reference(p.space, p.sys, p.f);
    const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(2), p.eigen);
    const MsSolution sol = solve_ms(ms, p.sys, p.f);

    // divergence-free members of the multiscale space from the nullspace of
    // the coarse divergence of the expansion
    const Mat Bc = Mat(p.sys.B_coarse * ms.expansion);
    const Eigen::FullPivLU<Mat> lu(Bc);
    const Mat null = lu.kernel();
    ASSERT_GT(null.cols(), 0);
    for (int k = 0; k < std::min<int>(4, null.cols()); ++k) {
        const Vec w = ms.expansion * null.col(k);
        const double ip = (ref.velocity - sol.velocity).dot(p.sys.M * w);
        const double scale = norm_l2k(p.sys, Vec(ref.velocity - sol.velocity)) *
                             norm_l2k(p.sys, w);
        EXPECT_LE(std::abs(ip), 1e-9 * scale + 1e-13);
    }
}

TEST(MsSpace, ErrorDecreasesWithUniformEnrichment) {
    Problem p({2, 2, 4});
    const GalerkinSolution ref = solve_snapshot_reference(p.space, p.sys, p.f);
    double prev = 2.0;
    for (int l = 1; l <= p.grid.spec.nf; ++l) {
        const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(l), p.eigen);
        const double e = snapshot_error(solve_ms(ms, p.sys, p.f), ref, p.sys);
        EXPECT_LE(e, prev * (1.0 + 1e-9));
        prev = e;
    }
    EXPECT_LE(prev, 1e-10);  // full space reproduces the reference
}

TEST(MsSpace, NestedSpacesSatisfyPythagoras) {
    Problem p({2, 2, 4});
    const GalerkinSolution ref = solve_snapshot_reference(p.space, p.sys, p.f);
    MsSolution prev_sol = solve_ms(
        build_ms_space(p.grid, p.sys, p.space, p.uniform(1), p.eigen), p.sys, p.f);
    for (int l = 2; l <= 3; ++l) {
        const MsSolution sol = solve_ms(
            build_ms_space(p.grid, p.sys, p.space, p.uniform(l), p.eigen), p.sys, p.f);
        auto sq = [&](const Vec& v) { return v.dot(p.sys.M * v); };
        const double lhs = sq(ref.velocity - prev_sol.velocity);
        const double rhs = sq(ref.velocity - sol.velocity) + sq(sol.velocity - prev_sol.velocity);
        EXPECT_NEAR(lhs, rhs, 1e-8 * lhs + 1e-14);
        prev_sol = sol;
    }
}

TEST(MsSpace, ArtificialColumnGuard) {
    // synthetic eigenvectors whose selected columns are divergence free force
    // the guard; saturated all-divergence-free spaces are rejected
    Problem p({2, 1, 2});
    const int J = 2;
    // snapshot columns have block divergence proportional to |e_j|, and the
    // member measures are equal, so coefficients summing to zero are div free
    FaceEigen synthetic{0, SpectralProblem::SP1, Vec(J), Mat(J, J)};
    synthetic.values << 1.0, 2.0;
    synthetic.vectors.col(0) = Vec::Unit(J, 0) - Vec::Unit(J, 1);
    synthetic.vectors.col(1) = Vec::Unit(J, 0) + Vec::Unit(J, 1);

    MsBasisSelection sel;
    sel.counts = {1};
    sel.thresholds = {2.0};
    sel.lambda_min = 2.0;
    const MsSpace ms = build_ms_space(p.grid, p.sys, p.space, sel, {synthetic});
    EXPECT_EQ(ms.artificial[0], 1);
    EXPECT_EQ(ms.dof(), 2);  // selected div-free column + artificial column

    // the appended column is genuinely not divergence free
    const Mat cols = Mat(ms.expansion);
    EXPECT_TRUE(is_div_free(p.sys, cols.col(0), 1e-8));
    EXPECT_FALSE(is_div_free(p.sys, cols.col(1), 1e-8));
}

TEST(MsSpace, OnlineColumnsAppendAfterOffline) {
    Problem p({2, 2, 3});
    MsSpace ms = build_ms_space(p.grid, p.sys, p.space, p.uniform(1), p.eigen);
    const int before = ms.dof();
    Vec phi = Vec::Zero(p.grid.num_faces());
    // a divergence-free loop inside one neighborhood: reuse a snapshot column
    // difference with cancelling block divergence
    const Mat cols = Mat(p.space.at(0).columns);
    phi = cols.col(0) - cols.col(1);
    append_online_column(ms, p.grid, p.space, phi, 7);
    EXPECT_EQ(ms.dof(), before + 1);
    EXPECT_EQ(ms.online_tags.back(), 7);
    EXPECT_LT((Mat(ms.expansion).col(before) - phi).norm(), 1e-14);
}
