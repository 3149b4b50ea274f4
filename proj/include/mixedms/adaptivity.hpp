#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedms/indicators.hpp"
#include "mixedms/ms_space.hpp"
#include "mixedms/parallel.hpp"
#include "mixedms/snapshot.hpp"
#include "mixedms/spectral.hpp"

namespace mixedms {

struct OfflineConfig {
    double theta = 0.2;
    double delta0 = 0.5;
    int initial_count = 2;
    double tol_rel = 1e-10;      ///< stop when sum eta^2 drops below tol_rel * initial
    double dof_fraction = 0.5;   ///< stop when dof reaches this fraction of dim V_snap
    int max_levels = 25;
};

enum class RegionStrategy { Neighborhood, Blocks2x2 };

struct OnlineConfig {
    SpectralProblem spectral = SpectralProblem::SP1;
    int initial_count = 3;
    RegionStrategy strategy = RegionStrategy::Neighborhood;
    double tol_rel = 1e-10;
    double dof_fraction = 0.5;
    int max_levels = 25;
    double skip_rel = 1e-12;  ///< skip representers below this times ||v_ms||
};

/// One enrichment level. For online runs, `sum_region_dual2` is the squared
/// representer mass added AT this level and `contraction_ok` checks the
/// predicted decrease FROM the previous level.
struct LevelRecord {
    int level = 0;
    int dof = 0;
    double error = 0.0;       ///< snapshot error e
    double sum_eta2 = 0.0;
    double lambda_min = 0.0;
    std::vector<int> counts;  ///< per-face l_i
    std::vector<double> eta2;
    std::vector<int> enriched_faces;  ///< offline: faces enriched after this solve
    int regions_used = 0;
    int regions_skipped = 0;
    double sum_region_dual2 = 0.0;
    bool contraction_ok = true;
    double pythagoras_rel = 0.0;  ///< nested-space identity residual vs previous level
    double wall_ms = 0.0;
};

struct EnrichmentHistory {
    std::vector<LevelRecord> levels;
};

/// Everything a run needs, assembled once by the caller.
struct ProblemContext {
    const Grid* grid = nullptr;
    const FineSystem* sys = nullptr;
    const SnapshotSpace* space = nullptr;
    const std::vector<FaceEigen>* eigen = nullptr;  ///< flavor matches the run
    const GramCache* grams = nullptr;
    const SourceField* source = nullptr;
    const GalerkinSolution* snap_ref = nullptr;
};

/// Offline step 3: smallest k with theta^2 * sum eta^2 <= sum of the k
/// largest; empty when every indicator vanishes.
inline std::vector<int> select_faces(const ResidualReport& report, double theta) {
    if (!(theta > 0.0) || !(theta < 1.0))
        throw std::invalid_argument("select_faces: theta must lie in (0,1)");
    if (report.total_eta2 <= 0.0) return {};
    const double target = theta * theta * report.total_eta2;
    std::vector<int> out;
    double partial = 0.0;
    for (int face : report.order) {
        out.push_back(face);
        partial += report.eta2[face];
        if (partial >= target) return out;
    }
    return out;
}

/// Offline step 4: smallest s >= 1 with lambda_{l+1}/lambda_{l+s+1} <= delta0;
/// the whole tail (with `took_all`) when no ratio drops enough.
struct BasisCount {
    int count = 0;
    bool took_all = false;
};

inline BasisCount count_new_bases(const FaceEigen& eigen, int current, double delta0) {
    if (!(delta0 > 0.0) || !(delta0 <= 1.0))
        throw std::invalid_argument("count_new_bases: delta0 must lie in (0,1]");
    const int J = eigen.dim();
    if (current >= J) throw std::invalid_argument("count_new_bases: face already saturated");
    const double threshold = eigen.values[current];  // lambda_{l+1}
    for (int s = 1; current + s + 1 <= J; ++s)
        if (threshold / eigen.values[current + s] <= delta0) return {s, false};
    return {J - current, true};
}

inline EnrichmentHistory run_offline(const OfflineConfig& cfg, const ProblemContext& ctx) {
    if (!(cfg.theta > 0.0 && cfg.theta < 1.0) || !(cfg.delta0 > 0.0 && cfg.delta0 < 1.0))
        throw std::invalid_argument("run_offline: theta and delta0 must lie in (0,1)");
    if (cfg.initial_count < 1) throw std::invalid_argument("run_offline: initial count");
    if ((*ctx.eigen)[0].problem != SpectralProblem::SP1)
        throw std::invalid_argument("run_offline: only spectral problem 1 is admissible");

    const Grid& grid = *ctx.grid;
    const FineSystem& sys = *ctx.sys;
    const SnapshotSpace& space = *ctx.space;

    std::vector<int> counts(grid.num_coarse_faces());
    for (int i = 0; i < grid.num_coarse_faces(); ++i)
        counts[i] = std::min(cfg.initial_count, space.at(i).dim());

    EnrichmentHistory hist;
    double initial_eta2 = -1.0;
    Vec prev_velocity;
    const auto t0 = std::chrono::steady_clock::now();

    for (int level = 0; level < cfg.max_levels; ++level) {
        const MsBasisSelection sel = select_offline(*ctx.eigen, counts);
        const MsSpace ms = build_ms_space(grid, sys, space, sel, *ctx.eigen);
        const MsSolution sol = solve_ms(ms, sys, *ctx.source);
        const ResidualReport rep =
            eta(sys, space, *ctx.grams, sel, sol, SpectralProblem::SP1);
        if (initial_eta2 < 0.0) initial_eta2 = rep.total_eta2;

        LevelRecord rec;
        rec.level = level;
        rec.dof = ms.dof();
        rec.error = snapshot_error(sol, *ctx.snap_ref, sys);
        rec.sum_eta2 = rep.total_eta2;
        rec.lambda_min = sel.lambda_min;
        rec.counts = counts;
        rec.eta2 = rep.eta2;
        if (prev_velocity.size() > 0) {
            auto sq = [&](const Vec& v) { return v.dot(sys.M * v); };
            const Vec& vs = ctx.snap_ref->velocity;
            const double lhs = sq(vs - prev_velocity);
            const double rhs = sq(vs - sol.velocity) + sq(sol.velocity - prev_velocity);
            rec.pythagoras_rel = std::abs(lhs - rhs) / std::max(lhs, kAbsFloor);
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();
        prev_velocity = sol.velocity;

        const bool converged = rep.total_eta2 <= cfg.tol_rel * initial_eta2;
        const bool budget = ms.dof() >= cfg.dof_fraction * space.total_dim;
        if (converged || budget || level + 1 == cfg.max_levels) {
            hist.levels.push_back(std::move(rec));
            break;
        }

        bool enriched = false;
        for (int face : select_faces(rep, cfg.theta)) {
            if (counts[face] >= space.at(face).dim()) continue;  // saturated
            const BasisCount bc = count_new_bases((*ctx.eigen)[face], counts[face], cfg.delta0);
            counts[face] = std::min(counts[face] + bc.count, space.at(face).dim());
            rec.enriched_faces.push_back(face);
            enriched = true;
        }
        hist.levels.push_back(std::move(rec));
        if (!enriched) break;  // nothing selectable remains
    }
    return hist;
}

/// Disjoint regions for one online level.
///
/// Neighborhood strategy: a fixed four-coloring (vertical-even, vertical-odd,
/// horizontal-even, horizontal-odd faces) rotated by level, so every face is
/// scheduled once per four levels.
///
/// Blocks2x2 strategy: 2x2-superblock tiles, regions being the neighborhoods
/// interior to a tile; odd levels shift the tiling by one block in both axes
/// (keeping partial edge tiles) so interfaces between tiles are covered too.
inline std::vector<Region> pick_regions(const Grid& grid, RegionStrategy strategy, int level) {
    std::vector<Region> regions;
    if (strategy == RegionStrategy::Neighborhood) {
        const int color = level % 4;
        for (int i = 0; i < grid.num_coarse_faces(); ++i) {
            const CoarseFace& cf = grid.coarse_faces[i];
            const bool vertical = cf.axis == FaceAxis::X;
            const int lane = vertical ? grid.block_col(cf.prev_block)
                                      : grid.block_row(cf.prev_block);
            const int face_color = (vertical ? 0 : 2) + (lane % 2);
            if (face_color != color) continue;
            const auto [b1, b2] = grid.neighborhood_blocks(i);
            regions.push_back({static_cast<int>(regions.size()), {i}, {b1, b2}});
        }
        return regions;
    }

    if (grid.spec.ncx % 2 != 0 || grid.spec.ncy % 2 != 0)
        throw std::invalid_argument("pick_regions: 2x2 blocks need even coarse dimensions");
    const int offset = level % 2;
    auto groups = [&](int n) {
        std::vector<std::pair<int, int>> out;  // [lo, hi] inclusive block ranges
        int lo = 0;
        if (offset == 1) {
            out.emplace_back(0, 0);
            lo = 1;
        }
        for (; lo < n; lo += 2) out.emplace_back(lo, std::min(lo + 1, n - 1));
        return out;
    };
    const auto cols = groups(grid.spec.ncx), rows = groups(grid.spec.ncy);
    for (const auto& [r0, r1] : rows) {
        for (const auto& [c0, c1] : cols) {
            Region region;
            region.id = static_cast<int>(regions.size());
            for (int R = r0; R <= r1; ++R)
                for (int C = c0; C <= c1; ++C) region.blocks.push_back(grid.block_index(R, C));
            for (int i = 0; i < grid.num_coarse_faces(); ++i) {
                const auto [b1, b2] = grid.neighborhood_blocks(i);
                auto in = [&](int b) {
                    const int R = grid.block_row(b), C = grid.block_col(b);
                    return R >= r0 && R <= r1 && C >= c0 && C <= c1;
                };
                if (in(b1) && in(b2)) region.faces.push_back(i);
            }
            if (!region.faces.empty()) regions.push_back(std::move(region));
        }
    }
    return regions;
}

/// Divergence-free Riesz representer of the region residual, computed from
/// the bordered saddle system on V_Omega (no nullspace basis is formed).
/// Returns the pre-normalization norm (= the dual norm of R_Omega on the
/// divergence-free subspace) and the normalized column, or a skip.
struct OnlineBasisResult {
    bool skipped = true;
    double dual_norm = 0.0;
    Vec phi;
};

inline OnlineBasisResult online_basis(const Region& region, const MsSolution& sol,
                                      const FineSystem& sys, const Grid& grid,
                                      const SnapshotSpace& space, double skip_abs) {
    const Vec r = region_residual(sol, region, grid, sys, space);

    std::vector<Triplet> trip;
    int col = 0;
    for (int i : region.faces) {
        const SparseMat& W = space.at(i).columns;
        for (int k = 0; k < W.outerSize(); ++k)
            for (SparseMat::InnerIterator it(W, k); it; ++it)
                trip.emplace_back(static_cast<int>(it.row()), col + static_cast<int>(it.col()),
                                  it.value());
        col += space.at(i).dim();
    }
    SparseMat W(grid.num_faces(), col);
    W.setFromTriplets(trip.begin(), trip.end());

    const SparseMat G = SparseMat(W.transpose() * SparseMat(sys.M * W)).pruned();
    // divergence constraint rows: the region's blocks only
    const SparseMat BcW = SparseMat(sys.B_coarse * W).pruned();
    std::vector<Triplet> dtrip;
    for (int k = 0; k < BcW.outerSize(); ++k)
        for (SparseMat::InnerIterator it(BcW, k); it; ++it) {
            const auto pos = std::find(region.blocks.begin(), region.blocks.end(),
                                       static_cast<int>(it.row()));
            if (pos != region.blocks.end())
                dtrip.emplace_back(static_cast<int>(pos - region.blocks.begin()),
                                   static_cast<int>(it.col()), it.value());
        }
    SparseMat D(region.blocks.size(), col);
    D.setFromTriplets(dtrip.begin(), dtrip.end());

    auto [c, mu] = solve_saddle(G, D, r, Vec::Zero(D.rows()), PressureFix::MeanZero,
                                Vec::Constant(D.rows(), grid.block_area()));
    const double norm2 = c.dot(r);  // = c^T G c by the constraint block
    OnlineBasisResult out;
    out.dual_norm = std::sqrt(std::max(0.0, norm2));
    if (out.dual_norm < skip_abs) return out;
    out.skipped = false;
    out.phi = (W * c) / out.dual_norm;
    if (block_div_ratio(sys, out.phi) > 1e-10)
        throw std::runtime_error("online_basis: representer is not divergence free");
    return out;
}

inline EnrichmentHistory run_online(const OnlineConfig& cfg, const ProblemContext& ctx) {
    if (cfg.initial_count < 1) throw std::invalid_argument("run_online: initial count");
    const Grid& grid = *ctx.grid;
    const FineSystem& sys = *ctx.sys;
    const SnapshotSpace& space = *ctx.space;
    if ((*ctx.eigen)[0].problem != cfg.spectral)
        throw std::invalid_argument("run_online: eigenpairs do not match the configured problem");

    std::vector<int> counts(grid.num_coarse_faces());
    for (int i = 0; i < grid.num_coarse_faces(); ++i)
        counts[i] = std::min(cfg.initial_count, space.at(i).dim());
    const MsBasisSelection sel = select_offline(*ctx.eigen, counts);
    MsSpace ms = build_ms_space(grid, sys, space, sel, *ctx.eigen);

    EnrichmentHistory hist;
    double initial_eta2 = -1.0;
    Vec prev_velocity;
    double prev_err2 = 0.0, prev_sum_dual2 = 0.0;
    int idle_levels = 0;
    const int cycle = cfg.strategy == RegionStrategy::Neighborhood ? 4 : 2;
    const auto t0 = std::chrono::steady_clock::now();
    auto sq = [&](const Vec& v) { return v.dot(sys.M * v); };

    for (int level = 0; level < cfg.max_levels; ++level) {
        const MsSolution sol = solve_ms(ms, sys, *ctx.source);
        const ResidualReport rep = eta(sys, space, *ctx.grams, sel, sol, cfg.spectral);
        if (initial_eta2 < 0.0) initial_eta2 = rep.total_eta2;

        LevelRecord rec;
        rec.level = level;
        rec.dof = ms.dof();
        rec.error = snapshot_error(sol, *ctx.snap_ref, sys);
        rec.sum_eta2 = rep.total_eta2;
        rec.lambda_min = sel.lambda_min;
        rec.counts = counts;
        rec.eta2 = rep.eta2;

        const double err2 = sq(ctx.snap_ref->velocity - sol.velocity);
        if (!hist.levels.empty()) {
            const double slack = 1e-8 * sq(ctx.snap_ref->velocity);
            rec.contraction_ok = err2 <= prev_err2 - prev_sum_dual2 + slack;
            const double lhs = prev_err2;
            const double rhs = err2 + sq(sol.velocity - prev_velocity);
            rec.pythagoras_rel = std::abs(lhs - rhs) / std::max(lhs, kAbsFloor);
        }
        prev_err2 = err2;
        prev_velocity = sol.velocity;

        const bool converged = rep.total_eta2 <= cfg.tol_rel * initial_eta2;
        const bool budget = ms.dof() >= cfg.dof_fraction * space.total_dim;
        if (converged || budget || level + 1 == cfg.max_levels) {
            rec.wall_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0).count();
            hist.levels.push_back(std::move(rec));
            break;
        }

        const std::vector<Region> regions = pick_regions(grid, cfg.strategy, level);
        const double skip_abs =
            cfg.skip_rel * std::sqrt(std::max(sq(sol.velocity), kAbsFloor));
        std::vector<OnlineBasisResult> results(regions.size());
        parallel_for(static_cast<int>(regions.size()), [&](int k) {
            results[k] = online_basis(regions[k], sol, sys, grid, space, skip_abs);
        });

        double sum_dual2 = 0.0;
        for (std::size_t k = 0; k < regions.size(); ++k) {
            if (results[k].skipped) {
                ++rec.regions_skipped;
                continue;
            }
            ++rec.regions_used;
            sum_dual2 += results[k].dual_norm * results[k].dual_norm;
            append_online_column(ms, grid, space, results[k].phi,
                                 level * 100000 + regions[k].id);
        }
        rec.sum_region_dual2 = sum_dual2;
        prev_sum_dual2 = sum_dual2;
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0).count();

        // all-skip levels only rotate the schedule; recording them would
        // repeat a row at unchanged dof
        const bool appended = rec.regions_used > 0;
        if (appended || hist.levels.empty()) hist.levels.push_back(std::move(rec));
        if (!appended) {
            if (++idle_levels >= cycle) break;  // a full schedule cycle added nothing
        } else {
            idle_levels = 0;
        }
    }
    return hist;
}

}  // namespace mixedms
