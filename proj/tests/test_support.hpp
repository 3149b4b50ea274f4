#pragma once

// Shared test oracles, independent of the library's assembled-matrix paths:
// pointwise reconstruction of the face-flux field and Gauss quadrature of
// the weighted integrals it enters.

#include <array>
#include <cmath>

#include "mixedms/fem.hpp"

namespace mixedms::testsupport {

/// Velocity of the reconstructed field at local cell coordinates
/// (xi across, eta down), physical components.
inline std::array<double, 2> velocity_at(const Grid& g, const Vec& v, int cell, double xi,
                                         double eta) {
    const auto cf = g.cell_faces(cell);
    const double vx = v[cf.left] * (1.0 - xi) + v[cf.right] * xi;
    // y faces carry the downward normal, so the physical y component flips sign
    const double vy = -(v[cf.top] * (1.0 - eta) + v[cf.bottom] * eta);
    return {vx, vy};
}

inline double cell_div(const Grid& g, const Vec& v, int cell) {
    const auto cf = g.cell_faces(cell);
    return (v[cf.right] - v[cf.left]) / g.hx + (v[cf.bottom] - v[cf.top]) / g.hy;
}

inline constexpr std::array<double, 2> kGauss2 = {0.5 - 0.28867513459481287,
                                                  0.5 + 0.28867513459481287};

/// Exact quadrature of the kappa^{-1}-weighted inner product of two
/// reconstructed fields over a cell set (2x2 Gauss is exact here).
template <typename CellRange>
double quad_inner_l2k(const FineSystem& sys, const Vec& u, const Vec& v, const CellRange& cells) {
    const Grid& g = *sys.grid;
    double acc = 0.0;
    for (int cell : cells) {
        double s = 0.0;
        for (double xi : kGauss2)
            for (double eta : kGauss2) {
                const auto a = velocity_at(g, u, cell, xi, eta);
                const auto b = velocity_at(g, v, cell, xi, eta);
                s += a[0] * b[0] + a[1] * b[1];
            }
        acc += 0.25 * s * g.cell_area() / sys.kappa[cell];
    }
    return acc;
}

struct ManufacturedCase {
    // p* = cos(pi x) cos(pi y), v* = -grad p*, f = div v*
    static double vx(double x, double y) { return M_PI * std::sin(M_PI * x) * std::cos(M_PI * y); }
    static double vy(double x, double y) { return M_PI * std::cos(M_PI * x) * std::sin(M_PI * y); }

    /// Exact cell averages of the source keep the discrete compatibility exact.
    static Vec source_cell_averages(const Grid& g) {
        Vec f(g.num_cells());
        for (int cell = 0; cell < g.num_cells(); ++cell) {
            const double x0 = g.cell_col(cell) * g.hx, x1 = x0 + g.hx;
            const double ytop = g.spec.height - g.cell_row(cell) * g.hy, ybot = ytop - g.hy;
            f[cell] = 2.0 * (std::sin(M_PI * x1) - std::sin(M_PI * x0)) *
                      (std::sin(M_PI * ytop) - std::sin(M_PI * ybot)) / g.cell_area();
        }
        return f;
    }

    /// L2 velocity error of a discrete solution, 3x3 Gauss per cell.
    static double velocity_error(const Grid& g, const Vec& v) {
        static const std::array<double, 3> pts = {0.5 - 0.5 * std::sqrt(0.6), 0.5,
                                                  0.5 + 0.5 * std::sqrt(0.6)};
        static const std::array<double, 3> wts = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
        double acc = 0.0;
        for (int cell = 0; cell < g.num_cells(); ++cell) {
            const double x0 = g.cell_col(cell) * g.hx;
            const double ytop = g.spec.height - g.cell_row(cell) * g.hy;
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const double x = x0 + pts[i] * g.hx;
                    const double y = ytop - pts[j] * g.hy;
                    const auto vh = velocity_at(g, v, cell, pts[i], pts[j]);
                    const double ex = vh[0] - vx(x, y), ey = vh[1] - vy(x, y);
                    acc += wts[i] * wts[j] * (ex * ex + ey * ey) * g.cell_area();
                }
        }
        return std::sqrt(acc);
    }
};

}  // namespace mixedms::testsupport
