#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mixedms {

/// Face orientation. X faces sit between column-neighbours and carry the
/// fixed unit normal +x. Y faces sit between row-neighbours and carry the
/// fixed unit normal -y (rows are counted from the top, so the normal always
/// points from the lower-indexed cell/block to the higher-indexed one).
enum class FaceAxis : std::uint8_t { X, Y };

/// Two-level Cartesian mesh specification: ncx x ncy coarse blocks, each
/// subdivided into nf x nf fine cells.
struct GridSpec {
    int ncx = 1;
    int ncy = 1;
    int nf = 1;
    double width = 1.0;
    double height = 1.0;
};

struct FineFace {
    FaceAxis axis;
    int prev = -1;    ///< cell the normal points away from (-1 on the domain boundary)
    int next = -1;    ///< cell the normal points into (-1 on the domain boundary)
    int coarse = -1;  ///< owning interior coarse face, -1 otherwise
};

/// Interior coarse face E_i with its member fine faces ordered along the face.
struct CoarseFace {
    FaceAxis axis;
    int prev_block = -1;
    int next_block = -1;
    std::vector<int> fine_faces;
};

/// Coarse face on the domain boundary; enumerated for completeness but it
/// carries no snapshot space under homogeneous Neumann data.
struct BoundaryCoarseFace {
    FaceAxis axis;
    int block = -1;
    std::vector<int> fine_faces;
};

/// Immutable two-level rectangular mesh. Cells and blocks are indexed
/// row-major with row 0 at the top of the domain; x grows to the right.
class Grid {
public:
    GridSpec spec;
    int nx = 0;   ///< fine cells along x
    int ny = 0;   ///< fine cells along y
    double hx = 0.0, hy = 0.0;  ///< fine cell size
    double Hx = 0.0, Hy = 0.0;  ///< coarse block size

    std::vector<FineFace> faces;
    std::vector<int> cell_block;            ///< owning coarse block per fine cell
    std::vector<CoarseFace> coarse_faces;   ///< interior faces, index 0..N_e-1
    std::vector<BoundaryCoarseFace> boundary_coarse_faces;
    std::vector<std::vector<int>> block_coarse_faces;  ///< interior faces adjacent to each block

    int num_cells() const { return nx * ny; }
    int num_faces() const { return static_cast<int>(faces.size()); }
    int num_x_faces() const { return ny * (nx + 1); }
    int num_blocks() const { return spec.ncx * spec.ncy; }
    int num_coarse_faces() const { return static_cast<int>(coarse_faces.size()); }

    double cell_area() const { return hx * hy; }
    double block_area() const { return Hx * Hy; }

    /// Geometric measure |e| of a fine face.
    double face_measure(int f) const { return faces[f].axis == FaceAxis::X ? hy : hx; }

    int cell_index(int row, int col) const { return row * nx + col; }
    int cell_row(int cell) const { return cell / nx; }
    int cell_col(int cell) const { return cell % nx; }

    int block_index(int brow, int bcol) const { return brow * spec.ncx + bcol; }
    int block_row(int block) const { return block / spec.ncx; }
    int block_col(int block) const { return block % spec.ncx; }

    /// Physical center of a fine cell (y measured upward from the bottom).
    double cell_cx(int cell) const { return (cell_col(cell) + 0.5) * hx; }
    double cell_cy(int cell) const { return spec.height - (cell_row(cell) + 0.5) * hy; }

    int x_face(int row, int ix) const { return row * (nx + 1) + ix; }
    int y_face(int t, int col) const { return num_x_faces() + t * nx + col; }

    /// The four faces of a fine cell: left, right, top, bottom.
    struct CellFaces {
        int left, right, top, bottom;
    };
    CellFaces cell_faces(int cell) const {
        const int r = cell_row(cell), c = cell_col(cell);
        return {x_face(r, c), x_face(r, c + 1), y_face(r, c), y_face(r + 1, c)};
    }

    /// Fine cells of a coarse block, ascending cell index.
    std::vector<int> block_cells(int block) const {
        const int br = block_row(block), bc = block_col(block);
        std::vector<int> cells;
        cells.reserve(spec.nf * spec.nf);
        for (int r = br * spec.nf; r < (br + 1) * spec.nf; ++r)
            for (int c = bc * spec.nf; c < (bc + 1) * spec.nf; ++c)
                cells.push_back(cell_index(r, c));
        return cells;
    }

    /// The two blocks of the neighbourhood omega_i.
    std::pair<int, int> neighborhood_blocks(int i) const {
        const CoarseFace& cf = coarse_faces.at(i);
        return {cf.prev_block, cf.next_block};
    }

    /// Interior coarse faces j with omega_j sharing at least one block with
    /// omega_i (includes i itself); ascending, unique.
    std::vector<int> coarse_face_neighbors(int i) const {
        const CoarseFace& cf = coarse_faces.at(i);
        std::vector<int> out;
        for (int b : {cf.prev_block, cf.next_block})
            for (int j : block_coarse_faces[b])
                out.push_back(j);
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

/// Fine faces supported in a neighbourhood omega_i: `interior` have both
/// adjacent cells inside, `boundary` lie on the boundary of omega_i (where
/// snapshots carry zero normal flux). Both ascending.
struct NeighborhoodFaces {
    std::vector<int> interior;
    std::vector<int> boundary;
};

inline Grid build_grid(const GridSpec& spec) {
    if (spec.ncx < 1 || spec.ncy < 1 || spec.nf < 1)
        throw std::invalid_argument("build_grid: ncx, ncy, nf must be positive");
    if (!(spec.width > 0.0) || !(spec.height > 0.0))
        throw std::invalid_argument("build_grid: domain dimensions must be positive");

    Grid g;
    g.spec = spec;
    g.nx = spec.ncx * spec.nf;
    g.ny = spec.ncy * spec.nf;
    g.hx = spec.width / g.nx;
    g.hy = spec.height / g.ny;
    g.Hx = spec.width / spec.ncx;
    g.Hy = spec.height / spec.ncy;

    g.cell_block.resize(g.num_cells());
    for (int cell = 0; cell < g.num_cells(); ++cell) {
        const int br = g.cell_row(cell) / spec.nf;
        const int bc = g.cell_col(cell) / spec.nf;
        g.cell_block[cell] = g.block_index(br, bc);
    }

    // Fine faces: all X faces first (row-major over (row, ix)), then Y faces
    // (row-major over (rowline, col)).
    g.faces.resize(g.num_x_faces() + (g.ny + 1) * g.nx);
    for (int r = 0; r < g.ny; ++r) {
        for (int ix = 0; ix <= g.nx; ++ix) {
            FineFace& f = g.faces[g.x_face(r, ix)];
            f.axis = FaceAxis::X;
            f.prev = ix > 0 ? g.cell_index(r, ix - 1) : -1;
            f.next = ix < g.nx ? g.cell_index(r, ix) : -1;
        }
    }
    for (int t = 0; t <= g.ny; ++t) {
        for (int c = 0; c < g.nx; ++c) {
            FineFace& f = g.faces[g.y_face(t, c)];
            f.axis = FaceAxis::Y;
            f.prev = t > 0 ? g.cell_index(t - 1, c) : -1;
            f.next = t < g.ny ? g.cell_index(t, c) : -1;
        }
    }

    // Interior coarse faces: vertical before horizontal, row-major.
    const int nvc = spec.ncy * (spec.ncx - 1);
    g.coarse_faces.resize(nvc + spec.ncx * (spec.ncy - 1));
    for (int R = 0; R < spec.ncy; ++R) {
        for (int C = 0; C + 1 < spec.ncx; ++C) {
            CoarseFace& cf = g.coarse_faces[R * (spec.ncx - 1) + C];
            cf.axis = FaceAxis::X;
            cf.prev_block = g.block_index(R, C);
            cf.next_block = g.block_index(R, C + 1);
            const int ix = (C + 1) * spec.nf;
            for (int r = R * spec.nf; r < (R + 1) * spec.nf; ++r)
                cf.fine_faces.push_back(g.x_face(r, ix));
        }
    }
    for (int T = 1; T < spec.ncy; ++T) {
        for (int C = 0; C < spec.ncx; ++C) {
            CoarseFace& cf = g.coarse_faces[nvc + (T - 1) * spec.ncx + C];
            cf.axis = FaceAxis::Y;
            cf.prev_block = g.block_index(T - 1, C);
            cf.next_block = g.block_index(T, C);
            const int t = T * spec.nf;
            for (int c = C * spec.nf; c < (C + 1) * spec.nf; ++c)
                cf.fine_faces.push_back(g.y_face(t, c));
        }
    }
    for (int i = 0; i < g.num_coarse_faces(); ++i)
        for (int f : g.coarse_faces[i].fine_faces)
            g.faces[f].coarse = i;

    // Boundary coarse faces, flagged separately from the interior list.
    auto add_boundary = [&](FaceAxis axis, int block, std::vector<int> fine) {
        g.boundary_coarse_faces.push_back({axis, block, std::move(fine)});
    };
    for (int R = 0; R < spec.ncy; ++R) {
        for (int side = 0; side < 2; ++side) {
            const int ix = side == 0 ? 0 : g.nx;
            std::vector<int> fine;
            for (int r = R * spec.nf; r < (R + 1) * spec.nf; ++r)
                fine.push_back(g.x_face(r, ix));
            add_boundary(FaceAxis::X, g.block_index(R, side == 0 ? 0 : spec.ncx - 1), std::move(fine));
        }
    }
    for (int C = 0; C < spec.ncx; ++C) {
        for (int side = 0; side < 2; ++side) {
            const int t = side == 0 ? 0 : g.ny;
            std::vector<int> fine;
            for (int c = C * spec.nf; c < (C + 1) * spec.nf; ++c)
                fine.push_back(g.y_face(t, c));
            add_boundary(FaceAxis::Y, g.block_index(side == 0 ? 0 : spec.ncy - 1, C), std::move(fine));
        }
    }

    g.block_coarse_faces.resize(g.num_blocks());
    for (int i = 0; i < g.num_coarse_faces(); ++i) {
        g.block_coarse_faces[g.coarse_faces[i].prev_block].push_back(i);
        g.block_coarse_faces[g.coarse_faces[i].next_block].push_back(i);
    }
    return g;
}

inline NeighborhoodFaces neighborhood_fine_faces(const Grid& grid, int i) {
    if (i < 0 || i >= grid.num_coarse_faces())
        throw std::out_of_range("neighborhood_fine_faces: coarse face index " + std::to_string(i));
    const auto [b1, b2] = grid.neighborhood_blocks(i);
    auto inside = [&](int cell) {
        return cell >= 0 && (grid.cell_block[cell] == b1 || grid.cell_block[cell] == b2);
    };
    NeighborhoodFaces out;
    for (int f = 0; f < grid.num_faces(); ++f) {
        const bool p = inside(grid.faces[f].prev);
        const bool q = inside(grid.faces[f].next);
        if (p && q)
            out.interior.push_back(f);
        else if (p || q)
            out.boundary.push_back(f);
    }
    return out;
}

}  // namespace mixedms
