#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedms/grid.hpp"

namespace mixedms {

/// Per-fine-cell conductivity, all values positive and finite.
struct PermField {
    std::vector<double> kappa;  ///< indexed like Grid fine cells

    double operator[](int cell) const { return kappa[cell]; }
    double inv(int cell) const { return 1.0 / kappa[cell]; }
};

/// Axis-aligned rectangle of fine cells, inclusive bounds in (row, col).
struct GeomRect {
    int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
};

/// One-cell-wide channel: a polyline of (row, col) waypoints connected by
/// axis-aligned segments (each consecutive pair must share a row or column).
struct GeomChannel {
    std::vector<std::pair<int, int>> waypoints;
};

struct FieldSpec {
    double background = 1.0;
    double contrast = 1.0;  ///< value assigned inside inclusions and channels
    std::vector<GeomRect> rects;
    std::vector<GeomChannel> channels;
    // randomized placement, deterministic given the seed
    unsigned seed = 0;
    int random_rects = 0;
    int random_channels = 0;
};

/// Per-coarse-block source density f_K.
struct SourceField {
    std::vector<double> f;  ///< indexed like Grid coarse blocks
};

inline void validate_field(const Grid& grid, const PermField& field) {
    if (static_cast<int>(field.kappa.size()) != grid.num_cells())
        throw std::invalid_argument("perm field size does not match grid");
    for (double v : field.kappa)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error("perm field requires positive finite values");
}

/// Zero-mean check for a block-constant source under homogeneous Neumann data.
inline void validate_source(const Grid& grid, const SourceField& src) {
    if (static_cast<int>(src.f.size()) != grid.num_blocks())
        throw std::invalid_argument("source field size does not match grid");
    double sum = 0.0, scale = 0.0;
    for (double fK : src.f) {
        sum += fK * grid.block_area();
        scale = std::max(scale, std::abs(fK) * grid.block_area());
    }
    if (scale > 0.0 && std::abs(sum) > 1e-12 * scale)
        throw std::invalid_argument("incompatible source: nonzero total at zero boundary flux");
}

inline PermField generate_field(const Grid& grid, const FieldSpec& spec) {
    if (!(spec.contrast > 0.0) || !(spec.background > 0.0))
        throw std::invalid_argument("field values must be positive");

    PermField out;
    out.kappa.assign(grid.num_cells(), spec.background);
    auto paint = [&](int row, int col) {
        if (row < 0 || row >= grid.ny || col < 0 || col >= grid.nx)
            throw std::invalid_argument("field geometry out of grid bounds");
        out.kappa[grid.cell_index(row, col)] = spec.contrast;
    };
    auto paint_rect = [&](const GeomRect& r) {
        if (r.row1 < r.row0 || r.col1 < r.col0)
            throw std::invalid_argument("field geometry: empty rectangle");
        for (int row = r.row0; row <= r.row1; ++row)
            for (int col = r.col0; col <= r.col1; ++col)
                paint(row, col);
    };
    auto paint_channel = [&](const GeomChannel& ch) {
        if (ch.waypoints.size() < 2)
            throw std::invalid_argument("field geometry: channel needs two waypoints");
        for (std::size_t k = 0; k + 1 < ch.waypoints.size(); ++k) {
            auto [r0, c0] = ch.waypoints[k];
            auto [r1, c1] = ch.waypoints[k + 1];
            if (r0 != r1 && c0 != c1)
                throw std::invalid_argument("field geometry: channel segments must be axis-aligned");
            const int dr = (r1 > r0) - (r1 < r0), dc = (c1 > c0) - (c1 < c0);
            paint(r0, c0);
            while (r0 != r1 || c0 != c1) {
                r0 += dr;
                c0 += dc;
                paint(r0, c0);
            }
        }
    };

    for (const GeomRect& r : spec.rects) paint_rect(r);
    for (const GeomChannel& ch : spec.channels) paint_channel(ch);

    if (spec.random_rects > 0 || spec.random_channels > 0) {
        std::mt19937 rng(spec.seed);
        std::uniform_int_distribution<int> row(0, grid.ny - 1), col(0, grid.nx - 1);
        std::uniform_int_distribution<int> extent(1, std::max(1, grid.spec.nf / 2));
        for (int k = 0; k < spec.random_rects; ++k) {
            GeomRect r;
            r.row0 = row(rng);
            r.col0 = col(rng);
            r.row1 = std::min(grid.ny - 1, r.row0 + extent(rng));
            r.col1 = std::min(grid.nx - 1, r.col0 + extent(rng));
            paint_rect(r);
        }
        std::uniform_int_distribution<int> nseg(2, 4);
        std::uniform_int_distribution<int> step(grid.spec.nf / 2 + 1, 2 * grid.spec.nf);
        std::bernoulli_distribution flip(0.5);
        for (int k = 0; k < spec.random_channels; ++k) {
            GeomChannel ch;
            int r = row(rng), c = col(rng);
            ch.waypoints.emplace_back(r, c);
            bool horizontal = flip(rng);
            const int segments = nseg(rng);
            for (int s = 0; s < segments; ++s) {
                const int len = step(rng) * (flip(rng) ? 1 : -1);
                if (horizontal)
                    c = std::clamp(c + len, 0, grid.nx - 1);
                else
                    r = std::clamp(r + len, 0, grid.ny - 1);
                ch.waypoints.emplace_back(r, c);
                horizontal = !horizontal;
            }
            paint_channel(ch);
        }
    }
    return out;
}

/// Raster text format: one line per fine-cell row, bottom row first,
/// whitespace-separated values.
inline void save_field(const Grid& grid, const PermField& field, const std::string& path) {
    validate_field(grid, field);
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open for write: " + path);
    char buf[32];
    for (int row = grid.ny - 1; row >= 0; --row) {
        for (int col = 0; col < grid.nx; ++col) {
            std::snprintf(buf, sizeof buf, "%.17g", field.kappa[grid.cell_index(row, col)]);
            os << buf << (col + 1 == grid.nx ? "" : " ");
        }
        os << '\n';
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline PermField load_field(const Grid& grid, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open raster: " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (!ls.eof())
            throw std::runtime_error(path + ": non-numeric entry on line " +
                                     std::to_string(rows.size() + 1));
        if (!vals.empty()) rows.push_back(std::move(vals));
    }
    if (static_cast<int>(rows.size()) != grid.ny)
        throw std::runtime_error(path + ": expected " + std::to_string(grid.ny) +
                                 " rows, got " + std::to_string(rows.size()));
    PermField out;
    out.kappa.assign(grid.num_cells(), 0.0);
    for (int k = 0; k < grid.ny; ++k) {
        if (static_cast<int>(rows[k].size()) != grid.nx)
            throw std::runtime_error(path + ": row " + std::to_string(k + 1) + " has " +
                                     std::to_string(rows[k].size()) + " values, expected " +
                                     std::to_string(grid.nx));
        const int row = grid.ny - 1 - k;  // file is bottom row first
        for (int col = 0; col < grid.nx; ++col)
            out.kappa[grid.cell_index(row, col)] = rows[k][col];
    }
    validate_field(grid, out);
    return out;
}

/// Unit source on the top-left coarse block, unit sink on the bottom-right.
inline SourceField corner_source(const Grid& grid) {
    const int ncx = grid.spec.ncx, ncy = grid.spec.ncy;
    const int src = grid.block_index(0, 0);            // top-left
    const int snk = grid.block_index(ncy - 1, ncx - 1);  // bottom-right
    if (src == snk)
        throw std::invalid_argument("corner source needs at least 2 coarse blocks");
    SourceField out;
    out.f.assign(grid.num_blocks(), 0.0);
    out.f[src] = 1.0;
    out.f[snk] = -1.0;
    validate_source(grid, out);
    return out;
}

/// Deterministic inclusion field: scattered rectangles of a few fine cells,
/// several of them straddling coarse interfaces. Scales with the grid.
inline FieldSpec inclusion_preset(const Grid& grid, double contrast) {
    FieldSpec spec;
    spec.contrast = contrast;
    const int nf = grid.spec.nf;
    auto clamp_rect = [&](GeomRect r) {
        r.row0 = std::clamp(r.row0, 0, grid.ny - 1);
        r.row1 = std::clamp(r.row1, 0, grid.ny - 1);
        r.col0 = std::clamp(r.col0, 0, grid.nx - 1);
        r.col1 = std::clamp(r.col1, 0, grid.nx - 1);
        return r;
    };
    // one blob per coarse block, phase-shifted so that every other blob
    // crosses the interface to the right/below
    for (int R = 0; R < grid.spec.ncy; ++R) {
        for (int C = 0; C < grid.spec.ncx; ++C) {
            const int r0 = R * nf, c0 = C * nf;
            const int sz = std::max(1, nf / 4);
            if ((R + C) % 2 == 0) {
                spec.rects.push_back(clamp_rect(
                    {r0 + nf / 3, c0 + nf / 3, r0 + nf / 3 + sz, c0 + nf / 3 + sz}));
            } else {
                // straddle the vertical interface on the right
                spec.rects.push_back(clamp_rect(
                    {r0 + nf / 2, c0 + nf - sz, r0 + nf / 2 + sz, c0 + nf + sz}));
            }
            if ((R * 3 + C) % 4 == 1) {
                // straddle the horizontal interface below
                spec.rects.push_back(clamp_rect(
                    {r0 + nf - sz, c0 + nf / 4, r0 + nf + sz, c0 + nf / 4 + sz}));
            }
        }
    }
    return spec;
}

/// Deterministic channel maze: long one-cell-wide channels crossing many
/// coarse interfaces, laid out so no coarse face is crossed more than twice.
inline FieldSpec channel_preset(const Grid& grid, double contrast) {
    FieldSpec spec;
    spec.contrast = contrast;
    const int nf = grid.spec.nf;
    auto cl_row = [&](int r) { return std::clamp(r, 0, grid.ny - 1); };
    auto cl_col = [&](int c) { return std::clamp(c, 0, grid.nx - 1); };
    // horizontal channels spanning the full width, one per coarse row,
    // placed off-center inside the row
    for (int R = 0; R < grid.spec.ncy; ++R) {
        const int r = cl_row(R * nf + nf / 3 + (R % 2) * (nf / 3));
        spec.channels.push_back({{{r, 0}, {r, grid.nx - 1}}});
    }
    // vertical channels through every other coarse column
    for (int C = 0; C < grid.spec.ncx; C += 2) {
        const int c = cl_col(C * nf + (2 * nf) / 3);
        spec.channels.push_back({{{0, c}, {grid.ny - 1, c}}});
    }
    // a couple of L-shaped connectors
    for (int C = 1; C < grid.spec.ncx; C += 3) {
        const int c = cl_col(C * nf + nf / 4);
        const int r = cl_row((grid.spec.ncy / 2) * nf + nf / 6);
        spec.channels.push_back({{{cl_row(nf / 2), c}, {r, c}, {r, cl_col(c + nf + nf / 2)}}});
    }
    return spec;
}

}  // namespace mixedms
