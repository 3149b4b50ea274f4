#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixedms {

using SparseMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Triplet = Eigen::Triplet<double>;

/// How the pressure nullspace of a pure-Neumann saddle system is removed.
enum class PressureFix {
    None,      ///< system is already nonsingular
    MeanZero,  ///< border with the weight vector (weighted mean of y is zero)
    PinFirst   ///< border pinning y[0] = 0
};

constexpr double kAbsFloor = 1e-14;

inline double rel_tol(double scale, double tol) { return tol * scale + kAbsFloor; }

/// Factorization of the symmetric indefinite block system
///   [ M  B^T ] [x]   [bx]
///   [ B   0  ] [y] = [by]
/// with the nullspace of y handled by bordering one extra row/column.
/// One factorization serves any number of right-hand sides.
class SaddleSolver {
public:
    /// `weights` are the bordering weights for MeanZero (defaults to ones);
    /// they are ignored for the other fixes.
    SaddleSolver(const SparseMat& M, const SparseMat& B, PressureFix fix,
                 const Vec& weights = Vec()) {
        if (M.rows() != M.cols()) throw std::invalid_argument("saddle: M must be square");
        if (B.cols() != M.rows() && B.rows() != 0)
            throw std::invalid_argument("saddle: B column count must match M");
        n_ = static_cast<int>(M.rows());
        m_ = static_cast<int>(B.rows());
        fix_ = fix;
        const int extra = fix == PressureFix::None ? 0 : 1;
        const int size = n_ + m_ + extra;

        if (fix == PressureFix::MeanZero) {
            w_ = weights.size() == 0 ? Vec::Ones(m_) : weights;
            if (w_.size() != m_) throw std::invalid_argument("saddle: weight size mismatch");
        } else if (fix == PressureFix::PinFirst) {
            w_ = Vec::Zero(m_);
            if (m_ > 0) w_[0] = 1.0;
        }

        std::vector<Triplet> trip;
        trip.reserve(M.nonZeros() + 2 * B.nonZeros() + 2 * m_);
        for (int k = 0; k < M.outerSize(); ++k)
            for (SparseMat::InnerIterator it(M, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
        for (int k = 0; k < B.outerSize(); ++k)
            for (SparseMat::InnerIterator it(B, k); it; ++it) {
                trip.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()),
                                  it.value());
                trip.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()),
                                  it.value());
            }
        if (extra) {
            for (int i = 0; i < m_; ++i) {
                if (w_[i] == 0.0) continue;
                trip.emplace_back(n_ + m_, n_ + i, w_[i]);
                trip.emplace_back(n_ + i, n_ + m_, w_[i]);
            }
        }
        SparseMat A(size, size);
        A.setFromTriplets(trip.begin(), trip.end());
        A.makeCompressed();
        lu_.compute(A);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("saddle: factorization failed (singular beyond the known nullspace)");
    }

    int n() const { return n_; }
    int m() const { return m_; }

    /// Solve for (x, y) given the two right-hand-side blocks.
    std::pair<Vec, Vec> solve(const Vec& bx, const Vec& by) const {
        if (bx.size() != n_ || by.size() != m_)
            throw std::invalid_argument("saddle: rhs size mismatch");
        const int extra = fix_ == PressureFix::None ? 0 : 1;
        Vec rhs = Vec::Zero(n_ + m_ + extra);
        rhs.head(n_) = bx;
        rhs.segment(n_, m_) = by;
        const Vec sol = lu_.solve(rhs);
        if (lu_.info() != Eigen::Success)
            throw std::runtime_error("saddle: back substitution failed");
        return {sol.head(n_), sol.segment(n_, m_)};
    }

private:
    int n_ = 0, m_ = 0;
    PressureFix fix_ = PressureFix::None;
    Vec w_;
    Eigen::SparseLU<SparseMat> lu_;
};

/// One-shot convenience wrapper; checks the block residuals against the
/// contract before returning.
inline std::pair<Vec, Vec> solve_saddle(const SparseMat& M, const SparseMat& B, const Vec& rhs_v,
                                        const Vec& rhs_p, PressureFix fix,
                                        const Vec& weights = Vec()) {
    const SaddleSolver solver(M, B, fix, weights);
    auto [x, y] = solver.solve(rhs_v, rhs_p);
    const double scale =
        std::max({rhs_v.norm(), rhs_p.norm(), x.norm(), y.norm()});
    const double r1 = (M * x + SparseMat(B.transpose()) * y - rhs_v).norm();
    const double r2 = B.rows() ? (B * x - rhs_p).norm() : 0.0;
    if (r1 > rel_tol(scale, 1e-10) || r2 > rel_tol(scale, 1e-10))
        throw std::runtime_error("saddle: residual check failed");
    return {std::move(x), std::move(y)};
}

/// Eigenpairs of a symmetric pencil A v = lambda S v, ascending, with the
/// eigenvector matrix S-orthonormal.
struct EigPairs {
    Vec values;
    Mat vectors;
};

/// Generalized symmetric eigenproblem via Cholesky reduction S = L L^T and a
/// symmetric eigendecomposition of L^{-1} A L^{-T}. `context` names the face
/// (or other origin) in the degeneracy error when S is not positive definite.
inline EigPairs sym_geig(const Mat& A, const Mat& S, const std::string& context = {}) {
    if (A.rows() != A.cols() || S.rows() != S.cols() || A.rows() != S.rows())
        throw std::invalid_argument("sym_geig: dimension mismatch");
    Eigen::LLT<Mat> llt(S);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("sym_geig: S not positive definite" +
                                 (context.empty() ? std::string() : " (" + context + ")"));
    const Mat L = llt.matrixL();
    Mat C = L.triangularView<Eigen::Lower>().solve(A);
    C = L.triangularView<Eigen::Lower>().solve(Mat(C.transpose()));
    // C = L^{-1} A L^{-T}, symmetrized against round-off
    C = 0.5 * (C + Mat(C.transpose()));
    Eigen::SelfAdjointEigenSolver<Mat> eig(C);
    if (eig.info() != Eigen::Success) throw std::runtime_error("sym_geig: eigensolver failed");
    EigPairs out;
    out.values = eig.eigenvalues();
    out.vectors = L.transpose().triangularView<Eigen::Upper>().solve(eig.eigenvectors());
    return out;
}

}  // namespace mixedms
