#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "mixedms/fem.hpp"
#include "mixedms/snapshot.hpp"
#include "mixedms/spectral.hpp"

namespace mixedms {

/// Relative size of the block divergence of a column, measured against the
/// absolute interface flux it moves (0 for fields with no interface flux).
inline double block_div_ratio(const FineSystem& sys, const Vec& col) {
    const Vec num = sys.B_coarse * col;
    double den = 0.0;
    for (int k = 0; k < sys.B_coarse.outerSize(); ++k)
        for (SparseMat::InnerIterator it(sys.B_coarse, k); it; ++it)
            den = std::max(den, std::abs(it.value() * col[it.col()]));
    if (den == 0.0) return 0.0;
    return num.cwiseAbs().maxCoeff() / den;
}

inline bool is_div_free(const FineSystem& sys, const Vec& col, double tol = 1e-10) {
    return block_div_ratio(sys, col) <= tol;
}

/// The current multiscale velocity space: per-face offline eigencolumns (plus
/// an artificial non-divergence-free snapshot column where the selection is
/// entirely divergence free), followed by accumulated online columns.
struct MsSpace {
    std::vector<Mat> offline_coeffs;  ///< per face: J_i x (selected count), snapshot coords
    std::vector<char> artificial;     ///< per face: first snapshot column appended
    std::vector<Vec> online_columns;  ///< normalized, divergence free
    std::vector<int> online_tags;     ///< region id of each online column
    SparseMat expansion;              ///< n_fine_faces x dof, deterministic column order
    std::vector<int> face_col_begin;  ///< column offset per face
    int offline_dof = 0;

    int dof() const { return offline_dof + static_cast<int>(online_columns.size()); }
};

namespace detail {

inline void rebuild_expansion(MsSpace& ms, const Grid& grid, const SnapshotSpace& space) {
    std::vector<Triplet> trip;
    ms.face_col_begin.assign(space.faces.size() + 1, 0);
    int col = 0;
    for (std::size_t i = 0; i < space.faces.size(); ++i) {
        ms.face_col_begin[i] = col;
        const Mat fine = Mat(space.faces[i].columns) * ms.offline_coeffs[i];
        for (int j = 0; j < fine.cols(); ++j, ++col)
            for (int f = 0; f < fine.rows(); ++f)
                if (fine(f, j) != 0.0) trip.emplace_back(f, col, fine(f, j));
    }
    ms.face_col_begin.back() = col;
    ms.offline_dof = col;
    for (const Vec& phi : ms.online_columns) {
        for (int f = 0; f < phi.size(); ++f)
            if (phi[f] != 0.0) trip.emplace_back(f, col, phi[f]);
        ++col;
    }
    ms.expansion.resize(grid.num_faces(), col);
    ms.expansion.setFromTriplets(trip.begin(), trip.end());
    ms.expansion.makeCompressed();
}

}  // namespace detail

/// Assemble the offline space from a selection. Face-major, eigen-index minor
/// column order; the artificial column, when needed and the face is not
/// saturated, follows the face's eigencolumns.
inline MsSpace build_ms_space(const Grid& grid, const FineSystem& sys, const SnapshotSpace& space,
                              const MsBasisSelection& sel, const std::vector<FaceEigen>& eigen) {
    if (sel.counts.size() != space.faces.size() || eigen.size() != space.faces.size())
        throw std::invalid_argument("build_ms_space: per-face selection and eigenpairs required");
    MsSpace ms;
    ms.offline_coeffs.resize(space.faces.size());
    ms.artificial.assign(space.faces.size(), 0);

    for (std::size_t i = 0; i < space.faces.size(); ++i) {
        const int J = space.faces[i].dim(), l = sel.counts[i];
        if (l < 1 || l > J) throw std::out_of_range("build_ms_space: count at face " + std::to_string(i));
        Mat U = eigen[i].vectors.leftCols(l);

        bool all_div_free = true;
        const Mat fine = Mat(space.faces[i].columns) * U;
        for (int j = 0; j < l && all_div_free; ++j)
            all_div_free = is_div_free(sys, fine.col(j), 1e-8);
        if (all_div_free && l < J) {
            // first snapshot column: nonzero block divergence by construction
            Mat Ua(J, l + 1);
            Ua.leftCols(l) = U;
            Ua.col(l) = Vec::Unit(J, 0);
            U = Ua;
            ms.artificial[i] = 1;
        } else if (all_div_free && l == J) {
            throw std::runtime_error("build_ms_space: face " + std::to_string(i) +
                                     " has no non-divergence-free column in its full space");
        }
        ms.offline_coeffs[i] = U;
    }
    detail::rebuild_expansion(ms, grid, space);
    return ms;
}

/// Append a normalized online column supported on a region.
inline void append_online_column(MsSpace& ms, const Grid& grid, const SnapshotSpace& space,
                                 const Vec& phi, int region_tag) {
    ms.online_columns.push_back(phi);
    ms.online_tags.push_back(region_tag);
    detail::rebuild_expansion(ms, grid, space);
}

using MsSolution = GalerkinSolution;

inline MsSolution solve_ms(const MsSpace& ms, const FineSystem& sys, const SourceField& f) {
    if (ms.expansion.cols() == 0) throw std::invalid_argument("solve_ms: empty space");
    return solve_galerkin(sys, ms.expansion, f);
}

/// Relative weighted L2 distance to the snapshot reference solution.
inline double snapshot_error(const MsSolution& ms_sol, const GalerkinSolution& snap_sol,
                             const FineSystem& sys) {
    if (ms_sol.velocity.size() != snap_sol.velocity.size())
        throw std::invalid_argument("snapshot_error: mismatched grids");
    const Vec diff = snap_sol.velocity - ms_sol.velocity;
    const double denom = std::sqrt(snap_sol.velocity.dot(sys.M * snap_sol.velocity));
    if (denom == 0.0) return std::sqrt(std::max(0.0, diff.dot(sys.M * diff)));
    return std::sqrt(std::max(0.0, diff.dot(sys.M * diff))) / denom;
}

}  // namespace mixedms
