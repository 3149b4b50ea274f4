#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "mixedms/ms_space.hpp"
#include "mixedms/parallel.hpp"
#include "mixedms/snapshot.hpp"
#include "mixedms/spectral.hpp"

namespace mixedms {

/// Factorized per-face snapshot Grams for dual-norm evaluation, one per norm
/// flavor. Built once per run; kappa and the snapshots never change.
class GramCache {
public:
    GramCache(const FineSystem& sys, const SnapshotSpace& space) {
        hdiv_.resize(space.faces.size());
        l2_.resize(space.faces.size());
        parallel_for(static_cast<int>(space.faces.size()), [&](int i) {
            hdiv_[i].compute(gram_hdivk(sys, space.faces[i].columns));
            l2_[i].compute(gram_l2k(sys, space.faces[i].columns));
            if (hdiv_[i].info() != Eigen::Success || l2_[i].info() != Eigen::Success)
                throw std::runtime_error("gram cache: factorization failed at face " +
                                         std::to_string(i));
        });
    }

    const Eigen::LLT<Mat>& gram(int face, SpectralProblem flavor) const {
        return flavor == SpectralProblem::SP1 ? hdiv_[face] : l2_[face];
    }

private:
    std::vector<Eigen::LLT<Mat>> hdiv_;  ///< H(div; omega_i; kappa^{-1})
    std::vector<Eigen::LLT<Mat>> l2_;    ///< L2(omega_i; kappa^{-1})
};

/// Residual functional of one face against its snapshot columns:
/// r_j = int_omega kappa^{-1} v_ms . beta_j - int_omega div(beta_j) p_ms.
inline Vec residual_coeffs(const MsSolution& sol, const SnapshotBasis& snap,
                           const FineSystem& sys) {
    if (sol.velocity.size() != sys.num_faces())
        throw std::invalid_argument("residual_coeffs: solution does not match grid");
    const Vec mass_term = snap.columns.transpose() * (sys.M * sol.velocity);
    const Vec div_term = SparseMat(sys.B_coarse * snap.columns).transpose() * sol.pressure;
    return mass_term - div_term;
}

/// ||R|| = sqrt(r^T G^{-1} r) for a factorized Gram.
inline double dual_norm(const Vec& r, const Eigen::LLT<Mat>& gram) {
    if (r.size() == 0) return 0.0;
    return std::sqrt(std::max(0.0, r.dot(gram.solve(r))));
}

/// Per-face dual norms, thresholds and indicators eta_i^2, with the faces
/// ordered by decreasing eta.
struct ResidualReport {
    SpectralProblem flavor = SpectralProblem::SP1;
    std::vector<double> dual_norms;
    std::vector<double> thresholds;
    std::vector<double> eta2;
    double total_eta2 = 0.0;
    std::vector<int> order;  ///< face indices, eta descending (ties by index)
};

inline ResidualReport eta(const FineSystem& sys, const SnapshotSpace& space,
                          const GramCache& cache, const MsBasisSelection& sel,
                          const MsSolution& sol, SpectralProblem flavor) {
    const int n = static_cast<int>(space.faces.size());
    if (static_cast<int>(sel.thresholds.size()) != n)
        throw std::invalid_argument("eta: selection does not match the snapshot space");
    ResidualReport rep;
    rep.flavor = flavor;
    rep.dual_norms.resize(n);
    rep.thresholds = sel.thresholds;
    rep.eta2.resize(n);
    parallel_for(n, [&](int i) {
        const Vec r = residual_coeffs(sol, space.faces[i], sys);
        rep.dual_norms[i] = dual_norm(r, cache.gram(i, flavor));
        rep.eta2[i] = std::isinf(sel.thresholds[i])
                          ? 0.0
                          : rep.dual_norms[i] * rep.dual_norms[i] / sel.thresholds[i];
    });
    rep.total_eta2 = std::accumulate(rep.eta2.begin(), rep.eta2.end(), 0.0);
    rep.order.resize(n);
    std::iota(rep.order.begin(), rep.order.end(), 0);
    std::stable_sort(rep.order.begin(), rep.order.end(),
                     [&](int a, int b) { return rep.eta2[a] > rep.eta2[b]; });
    return rep;
}

/// A union of coarse-grid neighbourhoods: the member faces and the blocks
/// they cover.
struct Region {
    int id = 0;
    std::vector<int> faces;
    std::vector<int> blocks;
};

inline void validate_region(const Grid& grid, const Region& region) {
    if (region.faces.empty()) throw std::invalid_argument("region: no faces");
    for (int i : region.faces) {
        const auto [b1, b2] = grid.neighborhood_blocks(i);
        for (int b : {b1, b2})
            if (std::find(region.blocks.begin(), region.blocks.end(), b) == region.blocks.end())
                throw std::invalid_argument("region is not a union of neighborhoods");
    }
}

/// Stacked residual coefficients of R_Omega over the snapshot columns of the
/// region's faces, ordered as region.faces.
inline Vec region_residual(const MsSolution& sol, const Region& region, const Grid& grid,
                           const FineSystem& sys, const SnapshotSpace& space) {
    validate_region(grid, region);
    int total = 0;
    for (int i : region.faces) total += space.at(i).dim();
    Vec r(total);
    int at = 0;
    for (int i : region.faces) {
        r.segment(at, space.at(i).dim()) = residual_coeffs(sol, space.at(i), sys);
        at += space.at(i).dim();
    }
    return r;
}

/// Local inf-sup diagnostic of one face: the prefactor
/// sqrt(|K1||K2|/(|K1|+|K2|)) times the minimal weighted L2 norm over the
/// face's current multiscale columns with unit net flux through E_i.
/// Returns +inf (with `degenerate` set) when no column moves net flux.
struct InfSupResult {
    double value = std::numeric_limits<double>::infinity();
    bool degenerate = true;
};

inline InfSupResult infsup_constant(const Grid& grid, const FineSystem& sys, const MsSpace& ms,
                                    int face) {
    const CoarseFace& cf = grid.coarse_faces.at(face);
    const int begin = ms.face_col_begin[face], end = ms.face_col_begin[face + 1];
    const int k = end - begin;
    if (k <= 0) throw std::invalid_argument("infsup: face has no multiscale columns");

    Mat cols = Mat::Zero(grid.num_faces(), k);
    for (int j = 0; j < k; ++j)
        cols.col(j) = Vec(ms.expansion.col(begin + j));
    Vec flux = Vec::Zero(k);
    for (int f : cf.fine_faces)
        for (int j = 0; j < k; ++j) flux[j] += cols(f, j) * grid.face_measure(f);

    const double area1 = grid.block_area(), area2 = grid.block_area();
    const double prefactor = std::sqrt(area1 * area2 / (area1 + area2));
    if (flux.cwiseAbs().maxCoeff() == 0.0) return {std::numeric_limits<double>::infinity(), true};

    Mat G(k, k);
    for (int a = 0; a < k; ++a)
        for (int b = 0; b < k; ++b) G(a, b) = cols.col(a).dot(sys.M * cols.col(b));
    // minimize y^T G y subject to flux^T y = 1: minimum is 1/(flux^T G^{-1} flux)
    const double q = flux.dot(G.ldlt().solve(flux));
    return {prefactor / std::sqrt(q), false};
}

}  // namespace mixedms
