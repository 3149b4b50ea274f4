#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedms/fem.hpp"
#include "mixedms/snapshot.hpp"

namespace mixedms {

enum class SpectralProblem { SP1, SP2 };

inline const char* to_string(SpectralProblem p) { return p == SpectralProblem::SP1 ? "sp1" : "sp2"; }

/// Eigenpairs of one face's spectral problem in snapshot coordinates,
/// ascending and s-orthonormal.
struct FaceEigen {
    int face = -1;
    SpectralProblem problem = SpectralProblem::SP1;
    Vec values;
    Mat vectors;

    int dim() const { return static_cast<int>(values.size()); }
};

/// Offline selection: the first l_i eigenfunctions per face, the excluded
/// threshold eigenvalues, and their minimum over the faces.
struct MsBasisSelection {
    std::vector<int> counts;
    std::vector<double> thresholds;  ///< lambda_{l_i+1}, +inf when l_i = J_i
    double lambda_min = std::numeric_limits<double>::infinity();
    std::vector<std::string> warnings;  ///< degenerate-cluster diagnostics
};

namespace detail {

/// Scale used to put the two bilinear forms of the first spectral problem on
/// the same footing on a possibly anisotropic coarse grid.
inline double coarse_scale(const Grid& g) { return std::sqrt(g.Hx * g.Hy); }

/// Cells of the neighbourhood omega_i.
inline std::vector<int> neighborhood_cells(const Grid& g, int face) {
    const auto [b1, b2] = g.neighborhood_blocks(face);
    std::vector<int> cells = g.block_cells(b1);
    const std::vector<int> more = g.block_cells(b2);
    cells.insert(cells.end(), more.begin(), more.end());
    return cells;
}

}  // namespace detail

/// Face-trace bilinear form of spectral problem 1 in snapshot coordinates:
/// the integral over E_i of kappa^{-1} (v.n)(w.n), with the face value of
/// kappa taken as the harmonic mean of the two adjacent cells.
inline Mat trace_form(const Grid& grid, const FineSystem& sys, const SnapshotBasis& snap) {
    const CoarseFace& cf = grid.coarse_faces[snap.face];
    const int J = snap.dim();
    std::vector<int> member_of(grid.num_faces(), -1);
    for (std::size_t k = 0; k < cf.fine_faces.size(); ++k)
        member_of[cf.fine_faces[k]] = static_cast<int>(k);

    Mat T = Mat::Zero(cf.fine_faces.size(), J);  // traces of the columns
    for (int j = 0; j < J; ++j)
        for (SparseMat::InnerIterator it(snap.columns, j); it; ++it)
            if (member_of[it.row()] >= 0) T(member_of[it.row()], j) = it.value();

    Mat A = Mat::Zero(J, J);
    for (std::size_t k = 0; k < cf.fine_faces.size(); ++k) {
        const int f = cf.fine_faces[k];
        const double w = grid.face_measure(f) / sys.face_kappa(f);
        A += w * T.row(k).transpose() * T.row(k);
    }
    return A;
}

inline FaceEigen spectral_problem_1(const Grid& grid, const FineSystem& sys,
                                    const SnapshotBasis& snap) {
    const Mat A = trace_form(grid, sys, snap);
    const Mat S = gram_hdivk(sys, snap.columns) / detail::coarse_scale(grid);
    const EigPairs e = sym_geig(A, S, "spectral problem 1, face " + std::to_string(snap.face));
    return {snap.face, SpectralProblem::SP1, e.values, e.vectors};
}

/// Minimum-energy extension operator of one face: extends the trace of a
/// snapshot function of face i into the union of the neighbouring snapshot
/// spaces, minimizing the weighted L2 energy over omega_i. The trace pins
/// the face's own coefficients, so the extension solves for the neighbour
/// coefficients from the Schur system of the masked Gram.
class FaceExtension {
public:
    FaceExtension(const Grid& grid, const FineSystem& sys, const SnapshotSpace& space, int face)
        : face_(face) {
        neighbors_ = grid.coarse_face_neighbors(face);
        // face i columns first, then the remaining neighbours in order
        std::vector<int> order{face};
        for (int j : neighbors_)
            if (j != face) order.push_back(j);
        neighbors_ = order;

        std::vector<Triplet> trip;
        int col = 0;
        for (int j : neighbors_) {
            const SparseMat& W = space.at(j).columns;
            for (int k = 0; k < W.outerSize(); ++k)
                for (SparseMat::InnerIterator it(W, k); it; ++it)
                    trip.emplace_back(static_cast<int>(it.row()), col + static_cast<int>(it.col()),
                                      it.value());
            col += space.at(j).dim();
        }
        columns_.resize(grid.num_faces(), col);
        columns_.setFromTriplets(trip.begin(), trip.end());

        const auto cells = detail::neighborhood_cells(grid, face);
        gram_ = gram_l2k(sys, columns_, std::span<const int>(cells));
        own_dim_ = space.at(face).dim();
        const int rest = col - own_dim_;
        if (rest > 0) {
            const Mat Gff = gram_.bottomRightCorner(rest, rest);
            Gfi_ = gram_.bottomLeftCorner(rest, own_dim_);
            llt_.compute(Gff);
            if (llt_.info() != Eigen::Success)
                throw std::runtime_error("extension Gram factorization failed, face " +
                                         std::to_string(face));
            // whitened coupling: the Schur correction is its Gram, which keeps
            // the subtracted term positive semidefinite in floating point
            whitened_ = llt_.matrixL().solve(Gfi_);
        }
    }

    int own_dim() const { return own_dim_; }
    const std::vector<int>& neighbor_faces() const { return neighbors_; }
    const SparseMat& stacked_columns() const { return columns_; }

    /// Coefficients of the extension over the stacked neighbour columns.
    Vec extend_coeffs(const Vec& c) const {
        if (c.size() != own_dim_) throw std::invalid_argument("extension: coefficient size");
        Vec full = Vec::Zero(columns_.cols());
        full.head(own_dim_) = c;
        if (columns_.cols() > own_dim_) full.tail(columns_.cols() - own_dim_) = -llt_.solve(Gfi_ * c);
        return full;
    }

    /// Fine coefficients of the extension.
    Vec extend(const Vec& c) const { return columns_ * extend_coeffs(c); }

    /// a-form of spectral problem 2 = Schur complement of the neighbour block
    /// in the masked Gram; s-form = the face's own masked Gram block.
    Mat a_form() const {
        Mat A = s_form();
        if (whitened_.rows() > 0) A -= whitened_.transpose() * whitened_;
        return A;
    }
    Mat s_form() const { return gram_.topLeftCorner(own_dim_, own_dim_); }
    const Mat& whitened_coupling() const { return whitened_; }

private:
    int face_;
    int own_dim_ = 0;
    std::vector<int> neighbors_;
    SparseMat columns_;
    Mat gram_;
    Mat Gfi_;
    Mat whitened_;
    Eigen::LLT<Mat> llt_;
};

/// One-shot minimum-energy extension of a snapshot function (coefficients in
/// the face's snapshot coordinates) into the neighbouring snapshot spaces.
inline Vec min_energy_extension(const Grid& grid, const FineSystem& sys,
                                const SnapshotSpace& space, int face, const Vec& c) {
    return FaceExtension(grid, sys, space, face).extend(c);
}

/// Spectral problem 2 solved through mu = 1 - lambda: the complement pencil
/// (C^T C) v = mu S v with both sides assembled as Grams, so the computed mu
/// cannot drop below round-off and lambda stays bounded by one.
inline FaceEigen spectral_problem_2(const Grid& grid, const FineSystem& sys,
                                    const SnapshotSpace& space, int face) {
    const FaceExtension ext(grid, sys, space, face);
    const std::string context = "spectral problem 2, face " + std::to_string(face);
    const Mat S = ext.s_form();
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("sym_geig: S not positive definite (" + context + ")");
    const int J = static_cast<int>(S.rows());
    const Mat L = llt.matrixL();

    Mat M = Mat::Zero(J, J);
    if (ext.whitened_coupling().rows() > 0) {
        // D = C L^{-T}: right triangular solve, then the PSD pencil Gram
        Mat D = L.transpose()
                    .triangularView<Eigen::Upper>()
                    .solve<Eigen::OnTheRight>(ext.whitened_coupling());
        M = D.transpose() * D;
        M = 0.5 * (M + Mat(M.transpose()));
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(M);
    if (eig.info() != Eigen::Success) throw std::runtime_error("sym_geig failed (" + context + ")");

    FaceEigen out;
    out.face = face;
    out.problem = SpectralProblem::SP2;
    out.values.resize(J);
    out.vectors.resize(J, J);
    const Mat U = L.transpose().triangularView<Eigen::Upper>().solve(eig.eigenvectors());
    for (int k = 0; k < J; ++k) {
        out.values[k] = 1.0 - eig.eigenvalues()[J - 1 - k];  // ascending lambda
        out.vectors.col(k) = U.col(J - 1 - k);
    }
    return out;
}

inline FaceEigen solve_spectral(const Grid& grid, const FineSystem& sys,
                                const SnapshotSpace& space, int face, SpectralProblem p) {
    return p == SpectralProblem::SP1 ? spectral_problem_1(grid, sys, space.at(face))
                                     : spectral_problem_2(grid, sys, space, face);
}

inline MsBasisSelection select_offline(const std::vector<FaceEigen>& eigen,
                                       const std::vector<int>& counts) {
    if (eigen.size() != counts.size())
        throw std::invalid_argument("select_offline: count per face required");
    MsBasisSelection sel;
    sel.counts = counts;
    sel.thresholds.resize(eigen.size());
    for (std::size_t i = 0; i < eigen.size(); ++i) {
        const int J = eigen[i].dim(), l = counts[i];
        if (l < 1 || l > J)
            throw std::out_of_range("select_offline: face " + std::to_string(i) +
                                    " count out of [1, J_i]");
        if (l == J) {
            sel.thresholds[i] = std::numeric_limits<double>::infinity();
        } else {
            sel.thresholds[i] = eigen[i].values[l];
            const double lo = eigen[i].values[l - 1], hi = eigen[i].values[l];
            if (std::abs(hi - lo) < 1e-8 * std::max(std::abs(hi), std::abs(lo)))
                sel.warnings.push_back("face " + std::to_string(i) +
                                       ": selection cuts a degenerate eigenvalue cluster");
        }
        sel.lambda_min = std::min(sel.lambda_min, sel.thresholds[i]);
    }
    return sel;
}

}  // namespace mixedms
