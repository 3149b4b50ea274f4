#include "mixedms/snapshot.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <numeric>

#include "test_support.hpp"

using namespace mixedms;
namespace ts = mixedms::testsupport;

namespace {
PermField unit_field(const Grid& g) {
    PermField f;
    f.kappa.assign(g.num_cells(), 1.0);
    return f;
}
}  // namespace

TEST(Snapshot, TraceIsIdentityAndSupportIsLocal) {
    const Grid g = build_grid({3, 2, 4});
    const FineSystem sys = assemble(g, unit_field(g));
    for (int i : {0, 2, g.num_coarse_faces() - 1}) {
        const SnapshotBasis basis = build_snapshots(g, sys, i);
        const CoarseFace& cf = g.coarse_faces[i];
        EXPECT_EQ(basis.dim(), g.spec.nf);
        const Mat cols = Mat(basis.columns);

        // trace matrix on E_i is the identity
        for (int j = 0; j < basis.dim(); ++j)
            for (int k = 0; k < basis.dim(); ++k)
                EXPECT_NEAR(cols(cf.fine_faces[k], j), j == k ? 1.0 : 0.0, 1e-14);

        // zero outside the closure of omega_i, zero flux on its boundary
        const auto nb = neighborhood_fine_faces(g, i);
        std::vector<char> interior(g.num_faces(), 0);
        for (int f : nb.interior) interior[f] = 1;
        for (int f = 0; f < g.num_faces(); ++f)
            if (!interior[f])
                for (int j = 0; j < basis.dim(); ++j) EXPECT_DOUBLE_EQ(cols(f, j), 0.0);
    }
}

TEST(Snapshot, BlockConstantDivergence) {
    const Grid g = build_grid({2, 2, 4});
    FieldSpec spec;
    spec.contrast = 1e3;
    spec.rects.push_back({2, 2, 5, 5});
    const FineSystem sys = assemble(g, generate_field(g, spec));
    const SnapshotBasis basis = build_snapshots(g, sys, 0);
    const CoarseFace& cf = g.coarse_faces[0];

    const Mat cols = Mat(basis.columns);
    for (int j = 0; j < basis.dim(); ++j) {
        const Vec v = cols.col(j);
        // alpha = |e_j|/|K| with the sign of the fixed normal
        const double e = g.face_measure(cf.fine_faces[j]);
        EXPECT_DOUBLE_EQ(basis.alpha_prev[j], e / g.block_area());
        EXPECT_DOUBLE_EQ(basis.alpha_next[j], -e / g.block_area());
        for (int cell = 0; cell < g.num_cells(); ++cell) {
            const int b = g.cell_block[cell];
            double expect = 0.0;
            if (b == cf.prev_block) expect = basis.alpha_prev[j];
            if (b == cf.next_block) expect = basis.alpha_next[j];
            EXPECT_NEAR(ts::cell_div(g, v, cell), expect, 1e-9 * std::abs(expect) + 1e-10);
        }
    }
}

TEST(Snapshot, MirrorSymmetryOnUniformField) {
    // kappa = 1 on the smallest two-block mesh: the column of e_j and of its
    // mirrored member face are reflections of each other across the midline
    const Grid g = build_grid({2, 1, 2});
    const FineSystem sys = assemble(g, unit_field(g));
    const SnapshotBasis basis = build_snapshots(g, sys, 0);
    ASSERT_EQ(basis.dim(), 2);
    const Mat cols = Mat(basis.columns);

    // reflection across the horizontal midline: x faces map with sign +1,
    // y faces map with sign -1 (the stored coefficient is the downward flux)
    auto reflected = [&](const Vec& v) {
        Vec out = Vec::Zero(g.num_faces());
        for (int r = 0; r < g.ny; ++r)
            for (int ix = 0; ix <= g.nx; ++ix)
                out[g.x_face(g.ny - 1 - r, ix)] = v[g.x_face(r, ix)];
        for (int t = 0; t <= g.ny; ++t)
            for (int c = 0; c < g.nx; ++c) out[g.y_face(g.ny - t, c)] = -v[g.y_face(t, c)];
        return out;
    };
    const Vec mirror_of_col0 = reflected(cols.col(0));
    EXPECT_LT((mirror_of_col0 - cols.col(1)).norm(), 1e-10 * cols.col(1).norm());
}

TEST(Snapshot, EnergyMinimalityAgainstKktOracle) {
    // each column minimizes the weighted energy on its block among discrete
    // fields with the same boundary data and block-constant divergence
    const Grid g = build_grid({2, 1, 2});
    FieldSpec spec;
    spec.contrast = 5.0;
    spec.rects.push_back({0, 1, 1, 2});
    const FineSystem sys = assemble(g, generate_field(g, spec));
    const SnapshotBasis basis = build_snapshots(g, sys, 0);
    const CoarseFace& cf = g.coarse_faces[0];

    const int block = cf.prev_block;
    const auto cells = g.block_cells(block);
    std::vector<int> cell_local(g.num_cells(), -1);
    for (std::size_t k = 0; k < cells.size(); ++k) cell_local[cells[k]] = static_cast<int>(k);
    std::vector<int> ifaces;
    for (int f = 0; f < g.num_faces(); ++f) {
        const FineFace& ff = g.faces[f];
        if (ff.prev >= 0 && ff.next >= 0 && cell_local[ff.prev] >= 0 && cell_local[ff.next] >= 0)
            ifaces.push_back(f);
    }
    const int ni = static_cast<int>(ifaces.size());
    const int nc = static_cast<int>(cells.size());

    for (int j = 0; j < basis.dim(); ++j) {
        const Vec col = Vec(Mat(basis.columns).col(j));
        // dense KKT: minimize v^T M v subject to the per-cell divergence of
        // the full field (prescribed boundary data + interior unknowns)
        Mat Mi(ni, ni);
        const Mat Mfull = Mat(sys.masked_mass(cells));
        for (int a = 0; a < ni; ++a)
            for (int b = 0; b < ni; ++b) Mi(a, b) = Mfull(ifaces[a], ifaces[b]);
        // energy of the full field: coupling of the unknowns with the
        // prescribed boundary data enters the gradient
        Vec coupling = Vec::Zero(ni);
        for (int a = 0; a < ni; ++a)
            for (int f = 0; f < g.num_faces(); ++f) {
                if (std::find(ifaces.begin(), ifaces.end(), f) != ifaces.end()) continue;
                coupling[a] += Mfull(ifaces[a], f) * col[f];
            }
        Mat C(nc, ni);
        Vec target(nc);
        const Mat Bf = Mat(sys.B_fine);
        for (int c = 0; c < nc; ++c) {
            for (int a = 0; a < ni; ++a) C(c, a) = Bf(cells[c], ifaces[a]);
            // boundary contribution of the column (trace data)
            double bdy = 0.0;
            for (int f = 0; f < g.num_faces(); ++f) {
                if (std::find(ifaces.begin(), ifaces.end(), f) != ifaces.end()) continue;
                bdy += Bf(cells[c], f) * col[f];
            }
            target[c] = basis.alpha_prev[j] * g.cell_area() - bdy;
        }
        // KKT with the constraint nullspace handled by one mean-zero border
        Mat K = Mat::Zero(ni + nc + 1, ni + nc + 1);
        K.topLeftCorner(ni, ni) = 2.0 * Mi;
        K.block(0, ni, ni, nc) = C.transpose();
        K.block(ni, 0, nc, ni) = C;
        K.block(ni, ni + nc, nc, 1) = Vec::Ones(nc);
        K.block(ni + nc, ni, 1, nc) = Vec::Ones(nc).transpose();
        Vec rhs = Vec::Zero(ni + nc + 1);
        rhs.head(ni) = -2.0 * coupling;
        rhs.segment(ni, nc) = target;
        const Vec sol = K.fullPivLu().solve(rhs);
        for (int a = 0; a < ni; ++a) EXPECT_NEAR(sol[a], col[ifaces[a]], 1e-9);
    }
}

TEST(Snapshot, SpaceOffsetsAndDirectSum) {
    const Grid g = build_grid({2, 2, 3});
    const FineSystem sys = assemble(g, unit_field(g));
    const SnapshotSpace space = assemble_space(g, sys);
    int expected = 0;
    for (const CoarseFace& cf : g.coarse_faces) expected += static_cast<int>(cf.fine_faces.size());
    EXPECT_EQ(space.total_dim, expected);
    EXPECT_EQ(space.all_columns.cols(), expected);
    for (std::size_t i = 0; i < space.faces.size(); ++i)
        EXPECT_EQ(space.offsets[i + 1] - space.offsets[i], space.faces[i].dim());

    const Grid tiny = build_grid({2, 1, 2});
    const FineSystem tsys = assemble(tiny, unit_field(tiny));
    EXPECT_EQ(assemble_space(tiny, tsys).total_dim, 2);

    // arithmetic anchor for the large run: 420 faces x 40 columns
    const Grid paper = build_grid({15, 15, 40});
    long total = 0;
    for (const CoarseFace& cf : paper.coarse_faces) total += cf.fine_faces.size();
    EXPECT_EQ(total, 16800);
}

TEST(Snapshot, ParallelAssemblyMatchesSerial) {
    const Grid g = build_grid({3, 3, 3});
    const FineSystem sys = assemble(g, unit_field(g));
    setenv("MIXEDMS_WORKERS", "1", 1);
    const SnapshotSpace serial = assemble_space(g, sys);
    setenv("MIXEDMS_WORKERS", "4", 1);
    const SnapshotSpace parallel = assemble_space(g, sys);
    unsetenv("MIXEDMS_WORKERS");
    EXPECT_TRUE(Mat(serial.all_columns) == Mat(parallel.all_columns));
}

TEST(Snapshot, ReferenceSolveConservesAndVanishesOnZeroSource) {
    const Grid g = build_grid({2, 2, 4});
    FieldSpec spec;
    spec.contrast = 1e4;
    spec.rects.push_back({3, 3, 6, 6});
    const FineSystem sys = assemble(g, generate_field(g, spec));
    const SnapshotSpace space = assemble_space(g, sys);

    SourceField zero;
    zero.f.assign(g.num_blocks(), 0.0);
    EXPECT_NEAR(solve_snapshot_reference(space, sys, zero).velocity.norm(), 0.0, 1e-12);

    const SourceField f = corner_source(g);
    const GalerkinSolution sol = solve_snapshot_reference(space, sys, f);
    const Vec bc = sys.B_coarse * sol.velocity;
    for (int b = 0; b < g.num_blocks(); ++b)
        EXPECT_NEAR(bc[b], f.f[b] * g.block_area(), 1e-10 * g.block_area());
    // mean-zero pressure
    EXPECT_NEAR(sol.pressure.sum() * g.block_area(), 0.0, 1e-10 * sol.pressure.norm() + 1e-14);
}
