#pragma once

#include <stdexcept>
#include <vector>

#include "mixedms/fem.hpp"
#include "mixedms/grid.hpp"
#include "mixedms/parallel.hpp"

namespace mixedms {

/// Snapshot basis of one interior coarse face: J_i columns of global fine
/// velocity coefficients, column j solving the two block-local Neumann
/// problems with unit flux through the j-th member fine face. Column j has
/// trace delta_j on E_i, zero flux on the neighbourhood boundary, and
/// block-constant divergence alpha = +-|e_j|/|K|.
struct SnapshotBasis {
    int face = -1;
    SparseMat columns;               ///< n_fine_faces x J_i
    std::vector<double> alpha_prev;  ///< divergence on the prev block, per column
    std::vector<double> alpha_next;

    int dim() const { return static_cast<int>(columns.cols()); }
};

/// All per-face bases with global column offsets; the direct sum structure is
/// kept by disjoint column ownership.
struct SnapshotSpace {
    std::vector<SnapshotBasis> faces;
    std::vector<int> offsets;
    int total_dim = 0;
    SparseMat all_columns;  ///< n_fine_faces x total_dim

    const SnapshotBasis& at(int face) const { return faces.at(face); }
};

inline SnapshotBasis build_snapshots(const Grid& grid, const FineSystem& sys, int face) {
    if (face < 0 || face >= grid.num_coarse_faces())
        throw std::out_of_range("build_snapshots: coarse face index");
    const CoarseFace& cf = grid.coarse_faces[face];
    const int J = static_cast<int>(cf.fine_faces.size());

    SnapshotBasis out;
    out.face = face;
    out.alpha_prev.resize(J);
    out.alpha_next.resize(J);
    std::vector<Triplet> coltrip;

    for (int j = 0; j < J; ++j) {
        coltrip.emplace_back(cf.fine_faces[j], j, 1.0);  // the prescribed trace
        const double e = grid.face_measure(cf.fine_faces[j]);
        out.alpha_prev[j] = e / grid.block_area();
        out.alpha_next[j] = -e / grid.block_area();
    }

    for (const int block : {cf.prev_block, cf.next_block}) {
        const bool is_prev = block == cf.prev_block;
        const auto cells = grid.block_cells(block);
        std::vector<int> cell_local(grid.num_cells(), -1);
        for (std::size_t k = 0; k < cells.size(); ++k) cell_local[cells[k]] = static_cast<int>(k);

        // unknowns: fine faces interior to the block
        std::vector<int> ifaces;
        std::vector<int> face_local(grid.num_faces(), -1);
        for (int f = 0; f < grid.num_faces(); ++f) {
            const FineFace& ff = grid.faces[f];
            if (ff.prev >= 0 && ff.next >= 0 && cell_local[ff.prev] >= 0 &&
                cell_local[ff.next] >= 0) {
                face_local[f] = static_cast<int>(ifaces.size());
                ifaces.push_back(f);
            }
        }
        const int ni = static_cast<int>(ifaces.size());
        const int nc = static_cast<int>(cells.size());

        const SparseMat Mk = sys.masked_mass(cells);
        std::vector<Triplet> mtrip, btrip;
        std::vector<std::vector<std::pair<int, double>>> m_coupling(J);  // interior x trace DOF
        std::vector<int> fine_local(grid.num_faces(), -1);
        for (int j = 0; j < J; ++j) fine_local[cf.fine_faces[j]] = j;

        for (int k = 0; k < Mk.outerSize(); ++k)
            for (SparseMat::InnerIterator it(Mk, k); it; ++it) {
                const int r = face_local[it.row()], c = face_local[it.col()];
                if (r >= 0 && c >= 0) {
                    mtrip.emplace_back(r, c, it.value());
                } else if (r >= 0 && fine_local[it.col()] >= 0) {
                    m_coupling[fine_local[it.col()]].emplace_back(r, it.value());
                }
            }
        for (int k = 0; k < sys.B_fine.outerSize(); ++k)
            for (SparseMat::InnerIterator it(sys.B_fine, k); it; ++it) {
                const int r = cell_local[it.row()], c = face_local[it.col()];
                if (r >= 0 && c >= 0) btrip.emplace_back(r, c, it.value());
            }
        SparseMat Mi(ni, ni), Bi(nc, ni);
        Mi.setFromTriplets(mtrip.begin(), mtrip.end());
        Bi.setFromTriplets(btrip.begin(), btrip.end());
        const SaddleSolver solver(Mi, Bi, PressureFix::MeanZero,
                                  Vec::Constant(nc, grid.cell_area()));

        for (int j = 0; j < J; ++j) {
            Vec rhs_v = Vec::Zero(ni);
            for (const auto& [row, val] : m_coupling[j]) rhs_v[row] -= val;
            const double alpha = is_prev ? out.alpha_prev[j] : out.alpha_next[j];
            Vec rhs_p = Vec::Constant(nc, alpha * grid.cell_area());
            // move the prescribed trace out of the divergence constraint
            const FineFace& ej = grid.faces[cf.fine_faces[j]];
            const double e = grid.face_measure(cf.fine_faces[j]);
            if (cell_local[ej.prev] >= 0) rhs_p[cell_local[ej.prev]] -= e;
            if (cell_local[ej.next] >= 0) rhs_p[cell_local[ej.next]] += e;

            auto [v, y] = solver.solve(rhs_v, rhs_p);
            const double scale = std::max({v.norm(), y.norm(), rhs_p.norm(), 1.0});
            if ((Bi * v - rhs_p).norm() > rel_tol(scale, 1e-10))
                throw std::runtime_error("build_snapshots: local solve residual failed");
            for (int k = 0; k < ni; ++k)
                if (v[k] != 0.0) coltrip.emplace_back(ifaces[k], j, v[k]);
        }
    }

    out.columns.resize(grid.num_faces(), J);
    out.columns.setFromTriplets(coltrip.begin(), coltrip.end());
    out.columns.makeCompressed();
    return out;
}

/// Build all per-face bases (parallel over faces, merged in face order).
inline SnapshotSpace assemble_space(const Grid& grid, const FineSystem& sys) {
    SnapshotSpace space;
    space.faces.resize(grid.num_coarse_faces());
    parallel_for(grid.num_coarse_faces(),
                 [&](int i) { space.faces[i] = build_snapshots(grid, sys, i); });

    space.offsets.resize(space.faces.size() + 1, 0);
    for (std::size_t i = 0; i < space.faces.size(); ++i)
        space.offsets[i + 1] = space.offsets[i] + space.faces[i].dim();
    space.total_dim = space.offsets.back();

    std::vector<Triplet> trip;
    for (std::size_t i = 0; i < space.faces.size(); ++i) {
        const SparseMat& W = space.faces[i].columns;
        for (int k = 0; k < W.outerSize(); ++k)
            for (SparseMat::InnerIterator it(W, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()),
                                  space.offsets[i] + static_cast<int>(it.col()), it.value());
    }
    space.all_columns.resize(grid.num_faces(), space.total_dim);
    space.all_columns.setFromTriplets(trip.begin(), trip.end());
    space.all_columns.makeCompressed();
    return space;
}

/// Reference solution on the full snapshot space (the error baseline).
inline GalerkinSolution solve_snapshot_reference(const SnapshotSpace& space, const FineSystem& sys,
                                                 const SourceField& f) {
    return solve_galerkin(sys, space.all_columns, f);
}

}  // namespace mixedms
