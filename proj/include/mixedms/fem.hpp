#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mixedms/fields.hpp"
#include "mixedms/grid.hpp"
#include "mixedms/linalg.hpp"

namespace mixedms {

/// Assembled fine-grid operators for the lowest-order face-flux mixed
/// discretization: one normal-flux DOF per fine face (coefficient = flux
/// density across the face), piecewise-constant pressures.
///
/// M        : kappa^{-1}-weighted velocity mass matrix (n_faces x n_faces)
/// B_fine   : divergence map, row per fine cell; B_fine*v gives the cell
///            divergence times the cell volume
/// B_coarse : the same rows aggregated by coarse block
struct FineSystem {
    const Grid* grid = nullptr;
    PermField kappa;
    SparseMat M;
    SparseMat B_fine;
    SparseMat B_coarse;
    std::vector<int> interior_faces;
    std::vector<char> is_boundary_face;

    int num_faces() const { return grid->num_faces(); }

    /// Harmonic mean of the two adjacent cell conductivities (the
    /// flux-consistent face value); one-sided on the domain boundary.
    double face_kappa(int f) const {
        const FineFace& ff = grid->faces[f];
        if (ff.prev < 0) return kappa[ff.next];
        if (ff.next < 0) return kappa[ff.prev];
        const double a = kappa[ff.prev], b = kappa[ff.next];
        return 2.0 * a * b / (a + b);
    }

    /// kappa^{-1}-weighted mass matrix restricted to a set of cells.
    SparseMat masked_mass(std::span<const int> cells) const;
};

/// Fine reference solution: per-face normal-flux coefficients (zero on the
/// domain boundary) and mean-zero cell pressures.
struct FineSolution {
    Vec velocity;
    Vec pressure;
};

namespace detail {

/// Local mass contribution of one cell: the x-face pair and the y-face pair
/// each get the 2x2 block [[1/3,1/6],[1/6,1/3]] * kappa^{-1} * |cell|.
inline void cell_mass(const Grid& g, const PermField& kappa, int cell,
                      const std::function<void(int, int, double)>& emit) {
    const auto cf = g.cell_faces(cell);
    const double w = g.cell_area() / kappa[cell];
    for (const auto [a, b] : {std::pair{cf.left, cf.right}, std::pair{cf.top, cf.bottom}}) {
        emit(a, a, w / 3.0);
        emit(b, b, w / 3.0);
        emit(a, b, w / 6.0);
        emit(b, a, w / 6.0);
    }
}

}  // namespace detail

inline SparseMat FineSystem::masked_mass(std::span<const int> cells) const {
    std::vector<Triplet> trip;
    trip.reserve(cells.size() * 8);
    for (int cell : cells)
        detail::cell_mass(*grid, kappa, cell,
                          [&](int i, int j, double v) { trip.emplace_back(i, j, v); });
    SparseMat out(num_faces(), num_faces());
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
}

inline FineSystem assemble(const Grid& grid, const PermField& kappa) {
    validate_field(grid, kappa);
    FineSystem sys;
    sys.grid = &grid;
    sys.kappa = kappa;

    std::vector<Triplet> mtrip;
    mtrip.reserve(grid.num_cells() * 8);
    for (int cell = 0; cell < grid.num_cells(); ++cell)
        detail::cell_mass(grid, kappa, cell,
                          [&](int i, int j, double v) { mtrip.emplace_back(i, j, v); });
    sys.M.resize(grid.num_faces(), grid.num_faces());
    sys.M.setFromTriplets(mtrip.begin(), mtrip.end());
    sys.M.makeCompressed();

    std::vector<Triplet> btrip, ctrip;
    sys.is_boundary_face.assign(grid.num_faces(), 0);
    for (int f = 0; f < grid.num_faces(); ++f) {
        const FineFace& ff = grid.faces[f];
        const double e = grid.face_measure(f);
        if (ff.prev >= 0) {
            btrip.emplace_back(ff.prev, f, e);
            ctrip.emplace_back(grid.cell_block[ff.prev], f, e);
        }
        if (ff.next >= 0) {
            btrip.emplace_back(ff.next, f, -e);
            ctrip.emplace_back(grid.cell_block[ff.next], f, -e);
        }
        if (ff.prev < 0 || ff.next < 0)
            sys.is_boundary_face[f] = 1;
        else
            sys.interior_faces.push_back(f);
    }
    sys.B_fine.resize(grid.num_cells(), grid.num_faces());
    sys.B_fine.setFromTriplets(btrip.begin(), btrip.end());
    sys.B_fine.makeCompressed();
    sys.B_coarse.resize(grid.num_blocks(), grid.num_faces());
    sys.B_coarse.setFromTriplets(ctrip.begin(), ctrip.end());
    sys.B_coarse.makeCompressed();
    return sys;
}

/// Weighted L2 norm ||v||_{L2(kappa^{-1})}, optionally restricted to a cell set.
inline double norm_l2k(const FineSystem& sys, const Vec& v,
                       std::optional<std::span<const int>> cells = std::nullopt) {
    if (v.size() != sys.num_faces())
        throw std::invalid_argument("norm_l2k: coefficient size mismatch");
    const Grid& g = *sys.grid;
    double acc = 0.0;
    auto add_cell = [&](int cell) {
        const auto cf = g.cell_faces(cell);
        const double w = g.cell_area() / sys.kappa[cell];
        for (const auto [a, b] : {std::pair{cf.left, cf.right}, std::pair{cf.top, cf.bottom}})
            acc += w * (v[a] * v[a] + v[a] * v[b] + v[b] * v[b]) / 3.0;
    };
    if (cells) {
        for (int c : *cells) add_cell(c);
    } else {
        for (int c = 0; c < g.num_cells(); ++c) add_cell(c);
    }
    return std::sqrt(std::max(0.0, acc));
}

/// L2 norm of the (cellwise-constant) divergence.
inline double norm_div(const FineSystem& sys, const Vec& v,
                       std::optional<std::span<const int>> cells = std::nullopt) {
    if (v.size() != sys.num_faces())
        throw std::invalid_argument("norm_div: coefficient size mismatch");
    const Grid& g = *sys.grid;
    double acc = 0.0;
    auto add_cell = [&](int cell) {
        const auto cf = g.cell_faces(cell);
        const double div = (v[cf.right] - v[cf.left]) / g.hx + (v[cf.bottom] - v[cf.top]) / g.hy;
        acc += div * div * g.cell_area();
    };
    if (cells) {
        for (int c : *cells) add_cell(c);
    } else {
        for (int c = 0; c < g.num_cells(); ++c) add_cell(c);
    }
    return std::sqrt(acc);
}

/// ||v||_{H(div;kappa^{-1})}^2 = ||v||_{L2(kappa^{-1})}^2 + ||div v||^2.
inline double norm_hdivk(const FineSystem& sys, const Vec& v,
                         std::optional<std::span<const int>> cells = std::nullopt) {
    const double a = norm_l2k(sys, v, cells), b = norm_div(sys, v, cells);
    return std::sqrt(a * a + b * b);
}

/// Dense Gram W^T M_omega W of sparse columns in the weighted L2 inner
/// product, restricted to `cells` when given.
inline Mat gram_l2k(const FineSystem& sys, const SparseMat& W,
                    std::optional<std::span<const int>> cells = std::nullopt) {
    const SparseMat MW = cells ? SparseMat(sys.masked_mass(*cells) * W) : SparseMat(sys.M * W);
    return Mat(W.transpose() * MW);
}

/// Dense Gram of the div-div form over `cells` (all cells when omitted).
inline Mat gram_divdiv(const FineSystem& sys, const SparseMat& W,
                       std::optional<std::span<const int>> cells = std::nullopt) {
    const Grid& g = *sys.grid;
    const SparseMat BW = sys.B_fine * W;  // n_cells x k, entries = div * |cell|
    const Mat dense = Mat(BW);
    Mat G = Mat::Zero(W.cols(), W.cols());
    auto add_cell = [&](int c) { G += dense.row(c).transpose() * dense.row(c) / g.cell_area(); };
    if (cells) {
        for (int c : *cells) add_cell(c);
    } else {
        for (int c = 0; c < g.num_cells(); ++c) add_cell(c);
    }
    return G;
}

inline Mat gram_hdivk(const FineSystem& sys, const SparseMat& W,
                      std::optional<std::span<const int>> cells = std::nullopt) {
    return gram_l2k(sys, W, cells) + gram_divdiv(sys, W, cells);
}

/// Fine-grid factorization shared across right-hand sides: interior-face
/// velocity unknowns, cell pressures, mean-zero fix bordered with cell areas.
class FineSolver {
public:
    explicit FineSolver(const FineSystem& sys) : sys_(&sys) {
        const Grid& g = *sys.grid;
        const int ni = static_cast<int>(sys.interior_faces.size());
        face_to_interior_.assign(g.num_faces(), -1);
        for (int k = 0; k < ni; ++k) face_to_interior_[sys.interior_faces[k]] = k;

        std::vector<Triplet> mtrip, btrip;
        for (int k = 0; k < sys.M.outerSize(); ++k)
            for (SparseMat::InnerIterator it(sys.M, k); it; ++it) {
                const int r = face_to_interior_[it.row()], c = face_to_interior_[it.col()];
                if (r >= 0 && c >= 0) mtrip.emplace_back(r, c, it.value());
            }
        for (int k = 0; k < sys.B_fine.outerSize(); ++k)
            for (SparseMat::InnerIterator it(sys.B_fine, k); it; ++it) {
                const int c = face_to_interior_[it.col()];
                if (c >= 0) btrip.emplace_back(it.row(), c, it.value());
            }
        SparseMat Mi(ni, ni), Bi(g.num_cells(), ni);
        Mi.setFromTriplets(mtrip.begin(), mtrip.end());
        Bi.setFromTriplets(btrip.begin(), btrip.end());
        solver_.emplace(Mi, Bi, PressureFix::MeanZero,
                        Vec::Constant(g.num_cells(), g.cell_area()));
    }

    /// Solve with a per-cell source density.
    FineSolution solve_cells(const Vec& f_cell) const {
        const Grid& g = *sys_->grid;
        if (f_cell.size() != g.num_cells())
            throw std::invalid_argument("solve_fine: source size mismatch");
        const Vec rhs_p = f_cell * g.cell_area();
        double total = rhs_p.sum(), scale = rhs_p.cwiseAbs().maxCoeff();
        if (std::abs(total) > rel_tol(scale, 1e-12))
            throw std::invalid_argument("solve_fine: incompatible source");
        auto [v_int, y] = solver_->solve(Vec::Zero(solver_->n()), rhs_p);
        FineSolution sol;
        sol.velocity = Vec::Zero(g.num_faces());
        for (std::size_t k = 0; k < sys_->interior_faces.size(); ++k)
            sol.velocity[sys_->interior_faces[k]] = v_int[k];
        sol.pressure = -y;  // the solver's multiplier is the negative pressure

        // the first equation holds against zero-trace test functions only
        Vec res_v = sys_->M * sol.velocity - SparseMat(sys_->B_fine.transpose()) * sol.pressure;
        for (int f = 0; f < g.num_faces(); ++f)
            if (sys_->is_boundary_face[f]) res_v[f] = 0.0;
        const double rv = res_v.norm();
        const double rp = (sys_->B_fine * sol.velocity - rhs_p).norm();
        const double s = std::max({sol.velocity.norm(), sol.pressure.norm(), rhs_p.norm()});
        if (rv > rel_tol(s, 1e-10) || rp > rel_tol(s, 1e-10))
            throw std::runtime_error("solve_fine: residual check failed");
        return sol;
    }

    FineSolution solve(const SourceField& f) const {
        const Grid& g = *sys_->grid;
        validate_source(g, f);
        Vec f_cell(g.num_cells());
        for (int c = 0; c < g.num_cells(); ++c) f_cell[c] = f.f[g.cell_block[c]];
        return solve_cells(f_cell);
    }

private:
    const FineSystem* sys_;
    std::vector<int> face_to_interior_;
    std::optional<SaddleSolver> solver_;
};

inline FineSolution solve_fine(const FineSystem& sys, const SourceField& f) {
    return FineSolver(sys).solve(f);
}

/// Galerkin solution over a column space: coefficients, the expanded fine
/// velocity, and mean-zero coarse-block pressures.
struct GalerkinSolution {
    Vec coeffs;
    Vec velocity;
    Vec pressure;
};

/// Solve the coarse saddle problem on span(W) against coarse-block pressures.
/// Every column of W must have zero normal trace on the domain boundary.
inline GalerkinSolution solve_galerkin(const FineSystem& sys, const SparseMat& W,
                                       const SourceField& f) {
    const Grid& g = *sys.grid;
    validate_source(g, f);
    const SparseMat A = SparseMat(W.transpose() * SparseMat(sys.M * W)).pruned();
    const SparseMat B = SparseMat(sys.B_coarse * W).pruned();
    Vec F(g.num_blocks());
    for (int b = 0; b < g.num_blocks(); ++b) F[b] = f.f[b] * g.block_area();

    auto [c, y] = solve_saddle(A, B, Vec::Zero(W.cols()), F, PressureFix::MeanZero,
                               Vec::Constant(g.num_blocks(), g.block_area()));
    GalerkinSolution sol;
    sol.coeffs = std::move(c);
    sol.velocity = W * sol.coeffs;
    sol.pressure = -y;
    return sol;
}

}  // namespace mixedms
