#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixedms/adaptivity.hpp"
#include "mixedms/fields.hpp"
#include "mixedms/indicators.hpp"

namespace mixedms {

/// Experiment description, parsed from the sectioned text format below.
///
///   [grid]    ncx, ncy, nf, width, height
///   [field]   preset = none|inclusions|channels, contrast, background, seed,
///             random_rects, random_channels, rect = r0 c0 r1 c1 (repeatable),
///             channel = r0 c0 r1 c1 ... (repeatable), raster = path
///   [source]  kind = corners
///   [method]  type = uniform|offline|online, spectral = sp1|sp2,
///             theta, delta0, initial_basis, regions = neighborhoods|blocks2x2,
///             max_levels, tol, dof_fraction, skip_tol,
///             uniform_min, uniform_max
///   [sweeps]  contrasts = v1 v2 ..., initial_basis = l1 l2 ...
///   [output]  dir = path
struct ExperimentConfig {
    GridSpec grid;
    FieldSpec field;
    std::string preset = "none";
    std::string raster;
    std::string source_kind = "corners";

    std::string method = "uniform";
    SpectralProblem spectral = SpectralProblem::SP1;
    double theta = 0.2;
    double delta0 = 0.5;
    int initial_basis = 2;
    RegionStrategy regions = RegionStrategy::Neighborhood;
    int max_levels = 25;
    double tol = 1e-10;
    double dof_fraction = 0.5;
    double skip_tol = 1e-12;
    int uniform_min = 2;
    int uniform_max = 6;

    std::vector<double> contrast_sweep;
    std::vector<int> initial_sweep;
    std::string output_dir = "out";
};

struct ReportRow {
    std::string method;
    double contrast = 0.0;
    int level = 0;
    int dof = 0;
    double e = 0.0;
    double sum_eta2 = 0.0;
    double lambda_min = 0.0;
    double wall_ms = 0.0;
};

inline constexpr const char* kCsvHeader = "method,contrast,level,dof,e,sum_eta2,lambda_min,wall_ms";

namespace cfgdetail {

struct Entry {
    std::string value;
    int line = 0;
};

struct RawConfig {
    std::map<std::string, std::vector<std::pair<std::string, Entry>>> sections;

    std::optional<Entry> get(const std::string& sec, const std::string& key) const {
        auto it = sections.find(sec);
        if (it == sections.end()) return std::nullopt;
        std::optional<Entry> found;
        for (const auto& [k, e] : it->second)
            if (k == key) found = e;  // last one wins
        return found;
    }
    std::vector<Entry> get_all(const std::string& sec, const std::string& key) const {
        std::vector<Entry> out;
        auto it = sections.find(sec);
        if (it == sections.end()) return out;
        for (const auto& [k, e] : it->second)
            if (k == key) out.push_back(e);
        return out;
    }
};

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

inline RawConfig parse_raw(std::istream& is, const std::string& name) {
    RawConfig raw;
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            raw.sections[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos || section.empty())
            throw std::invalid_argument(name + ":" + std::to_string(lineno) +
                                        ": expected key = value inside a section");
        raw.sections[section].emplace_back(trim(line.substr(0, eq)),
                                           Entry{trim(line.substr(eq + 1)), lineno});
    }
    return raw;
}

template <typename T>
T parse_num(const Entry& e, const std::string& name, const std::string& key) {
    std::istringstream ss(e.value);
    T v;
    ss >> v;
    if (ss.fail() || !(ss >> std::ws).eof())
        throw std::invalid_argument(name + ":" + std::to_string(e.line) + ": bad value for " +
                                    key + ": '" + e.value + "'");
    return v;
}

template <typename T>
std::vector<T> parse_list(const Entry& e, const std::string& name, const std::string& key) {
    std::istringstream ss(e.value);
    std::vector<T> out;
    T v;
    while (ss >> v) out.push_back(v);
    if (!ss.eof())
        throw std::invalid_argument(name + ":" + std::to_string(e.line) + ": bad list for " + key);
    return out;
}

}  // namespace cfgdetail

inline ExperimentConfig parse_config(std::istream& is, const std::string& name = "config") {
    using namespace cfgdetail;
    const RawConfig raw = parse_raw(is, name);
    ExperimentConfig cfg;

    auto num = [&](const char* sec, const char* key, auto& dst) {
        if (const auto e = raw.get(sec, key)) dst = parse_num<std::decay_t<decltype(dst)>>(*e, name, key);
    };
    auto str = [&](const char* sec, const char* key, std::string& dst) {
        if (const auto e = raw.get(sec, key)) dst = e->value;
    };

    num("grid", "ncx", cfg.grid.ncx);
    num("grid", "ncy", cfg.grid.ncy);
    num("grid", "nf", cfg.grid.nf);
    num("grid", "width", cfg.grid.width);
    num("grid", "height", cfg.grid.height);

    str("field", "preset", cfg.preset);
    num("field", "contrast", cfg.field.contrast);
    num("field", "background", cfg.field.background);
    num("field", "seed", cfg.field.seed);
    num("field", "random_rects", cfg.field.random_rects);
    num("field", "random_channels", cfg.field.random_channels);
    str("field", "raster", cfg.raster);
    for (const auto& e : raw.get_all("field", "rect")) {
        const auto v = parse_list<int>(e, name, "rect");
        if (v.size() != 4)
            throw std::invalid_argument(name + ":" + std::to_string(e.line) +
                                        ": rect needs r0 c0 r1 c1");
        cfg.field.rects.push_back({v[0], v[1], v[2], v[3]});
    }
    for (const auto& e : raw.get_all("field", "channel")) {
        const auto v = parse_list<int>(e, name, "channel");
        if (v.size() < 4 || v.size() % 2 != 0)
            throw std::invalid_argument(name + ":" + std::to_string(e.line) +
                                        ": channel needs pairs of waypoints");
        GeomChannel ch;
        for (std::size_t k = 0; k < v.size(); k += 2) ch.waypoints.emplace_back(v[k], v[k + 1]);
        cfg.field.channels.push_back(std::move(ch));
    }

    str("source", "kind", cfg.source_kind);

    str("method", "type", cfg.method);
    std::string spectral = "sp1";
    str("method", "spectral", spectral);
    if (spectral == "sp1")
        cfg.spectral = SpectralProblem::SP1;
    else if (spectral == "sp2")
        cfg.spectral = SpectralProblem::SP2;
    else
        throw std::invalid_argument(name + ": spectral must be sp1 or sp2");
    num("method", "theta", cfg.theta);
    num("method", "delta0", cfg.delta0);
    num("method", "initial_basis", cfg.initial_basis);
    std::string regions = "neighborhoods";
    str("method", "regions", regions);
    if (regions == "neighborhoods")
        cfg.regions = RegionStrategy::Neighborhood;
    else if (regions == "blocks2x2")
        cfg.regions = RegionStrategy::Blocks2x2;
    else
        throw std::invalid_argument(name + ": regions must be neighborhoods or blocks2x2");
    num("method", "max_levels", cfg.max_levels);
    num("method", "tol", cfg.tol);
    num("method", "dof_fraction", cfg.dof_fraction);
    num("method", "skip_tol", cfg.skip_tol);
    num("method", "uniform_min", cfg.uniform_min);
    num("method", "uniform_max", cfg.uniform_max);

    if (const auto e = raw.get("sweeps", "contrasts"))
        cfg.contrast_sweep = parse_list<double>(*e, name, "contrasts");
    if (const auto e = raw.get("sweeps", "initial_basis"))
        cfg.initial_sweep = parse_list<int>(*e, name, "initial_basis");

    str("output", "dir", cfg.output_dir);
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open config: " + path);
    return parse_config(is, path);
}

/// Full invariant check before any solve; returns one message per violation.
inline std::vector<std::string> validate_config(const ExperimentConfig& cfg) {
    std::vector<std::string> errors;
    auto check = [&](bool ok, const std::string& msg) {
        if (!ok) errors.push_back(msg);
    };
    check(cfg.grid.ncx >= 1 && cfg.grid.ncy >= 1 && cfg.grid.nf >= 1,
          "grid: ncx, ncy, nf must be positive");
    check(cfg.grid.width > 0 && cfg.grid.height > 0, "grid: domain dimensions must be positive");
    check(cfg.grid.ncx * cfg.grid.ncy >= 2, "source: corners needs at least two coarse blocks");
    check(cfg.method == "uniform" || cfg.method == "offline" || cfg.method == "online",
          "method: type must be uniform, offline or online");
    check(cfg.preset == "none" || cfg.preset == "inclusions" || cfg.preset == "channels",
          "field: preset must be none, inclusions or channels");
    check(cfg.raster.empty() || cfg.preset == "none",
          "field: raster and preset are mutually exclusive");
    check(cfg.source_kind == "corners", "source: kind must be corners");
    check(cfg.field.contrast > 0 && cfg.field.background > 0,
          "field: contrast and background must be positive");
    for (double c : cfg.contrast_sweep) check(c > 0, "sweeps: contrasts must be positive");
    if (cfg.method == "offline") {
        check(cfg.spectral == SpectralProblem::SP1,
              "method: the offline loop admits spectral problem 1 only");
        check(cfg.theta > 0 && cfg.theta < 1, "method: theta must lie in (0,1)");
        check(cfg.delta0 > 0 && cfg.delta0 < 1, "method: delta0 must lie in (0,1)");
    }
    if (cfg.method == "online" && cfg.regions == RegionStrategy::Blocks2x2)
        check(cfg.grid.ncx % 2 == 0 && cfg.grid.ncy % 2 == 0,
              "method: blocks2x2 regions need even coarse dimensions");
    if (cfg.method == "uniform")
        check(cfg.uniform_min >= 1 && cfg.uniform_min <= cfg.uniform_max &&
                  cfg.uniform_max <= cfg.grid.nf,
              "method: uniform range must satisfy 1 <= min <= max <= nf");
    check(cfg.initial_basis >= 1 && cfg.initial_basis <= cfg.grid.nf,
          "method: initial_basis must lie in [1, nf]");
    for (int l : cfg.initial_sweep)
        check(l >= 1 && l <= cfg.grid.nf, "sweeps: initial_basis entries must lie in [1, nf]");
    check(cfg.max_levels >= 1, "method: max_levels must be positive");
    check(cfg.tol >= 0, "method: tol must be nonnegative");
    check(cfg.dof_fraction > 0, "method: dof_fraction must be positive");
    return errors;
}

namespace cfgdetail {

inline std::string fmt(double v) {
    if (std::isinf(v)) return "inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string contrast_tag(double c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2e", c);
    return buf;
}

inline void write_rows_atomic(const std::filesystem::path& path,
                              const std::vector<ReportRow>& rows) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os << kCsvHeader << '\n';
        for (const ReportRow& r : rows) {
            char wall[32];
            std::snprintf(wall, sizeof wall, "%.3f", r.wall_ms);
            os << r.method << ',' << fmt(r.contrast) << ',' << r.level << ',' << r.dof << ','
               << fmt(r.e) << ',' << fmt(r.sum_eta2) << ',' << fmt(r.lambda_min) << ',' << wall
               << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace cfgdetail

/// One sweep point run to completion, with the rows it produced.
struct JobResult {
    std::string method_tag;
    double contrast = 0.0;
    std::vector<ReportRow> rows;
};

inline PermField realize_field(const Grid& grid, const ExperimentConfig& cfg, double contrast) {
    if (!cfg.raster.empty()) return load_field(grid, cfg.raster);
    FieldSpec spec;
    if (cfg.preset == "inclusions")
        spec = inclusion_preset(grid, contrast);
    else if (cfg.preset == "channels")
        spec = channel_preset(grid, contrast);
    else {
        spec = cfg.field;
        spec.contrast = contrast;
    }
    return generate_field(grid, spec);
}

/// Run one sweep point (contrast, initial basis count).
inline JobResult run_job(const ExperimentConfig& cfg, double contrast, int initial,
                         bool tag_initial) {
    JobResult job;
    job.contrast = contrast;
    job.method_tag = cfg.method + (tag_initial ? "_b" + std::to_string(initial) : "");

    const Grid grid = build_grid(cfg.grid);
    const FineSystem sys = assemble(grid, realize_field(grid, cfg, contrast));
    const SnapshotSpace space = assemble_space(grid, sys);
    const SourceField f = corner_source(grid);
    const GalerkinSolution ref = solve_snapshot_reference(space, sys, f);
    const GramCache grams(sys, space);

    std::vector<FaceEigen> eigen;
    for (int i = 0; i < grid.num_coarse_faces(); ++i)
        eigen.push_back(solve_spectral(grid, sys, space, i, cfg.spectral));
    const ProblemContext ctx{&grid, &sys, &space, &eigen, &grams, &f, &ref};

    auto emit = [&](const EnrichmentHistory& hist) {
        for (const LevelRecord& rec : hist.levels)
            job.rows.push_back({job.method_tag, contrast, rec.level, rec.dof, rec.error,
                                rec.sum_eta2, rec.lambda_min, rec.wall_ms});
    };

    if (cfg.method == "uniform") {
        const auto t0 = std::chrono::steady_clock::now();
        for (int l = cfg.uniform_min; l <= cfg.uniform_max; ++l) {
            std::vector<int> counts(grid.num_coarse_faces());
            for (int i = 0; i < grid.num_coarse_faces(); ++i)
                counts[i] = std::min(l, space.at(i).dim());
            const MsBasisSelection sel = select_offline(eigen, counts);
            const MsSpace ms = build_ms_space(grid, sys, space, sel, eigen);
            const MsSolution sol = solve_ms(ms, sys, f);
            const ResidualReport rep = eta(sys, space, grams, sel, sol, cfg.spectral);
            const double wall = std::chrono::duration<double, std::milli>(
                                    std::chrono::steady_clock::now() - t0).count();
            job.rows.push_back({job.method_tag, contrast, l, ms.dof(),
                                snapshot_error(sol, ref, sys), rep.total_eta2, sel.lambda_min,
                                wall});
        }
    } else if (cfg.method == "offline") {
        OfflineConfig oc;
        oc.theta = cfg.theta;
        oc.delta0 = cfg.delta0;
        oc.initial_count = initial;
        oc.tol_rel = cfg.tol;
        oc.dof_fraction = cfg.dof_fraction;
        oc.max_levels = cfg.max_levels;
        emit(run_offline(oc, ctx));
    } else if (cfg.method == "online") {
        OnlineConfig on;
        on.spectral = cfg.spectral;
        on.initial_count = initial;
        on.strategy = cfg.regions;
        on.tol_rel = cfg.tol;
        on.dof_fraction = cfg.dof_fraction;
        on.max_levels = cfg.max_levels;
        on.skip_rel = cfg.skip_tol;
        emit(run_online(on, ctx));
    } else {
        throw std::invalid_argument("run_job: unknown method " + cfg.method);
    }
    return job;
}

/// Run every sweep point and write one CSV per (method tag, contrast) plus a
/// combined plot-data file (dof vs e, one series per method tag).
inline std::vector<std::string> run_experiment(const ExperimentConfig& cfg) {
    if (const auto errors = validate_config(cfg); !errors.empty()) {
        std::string all = "invalid config:";
        for (const auto& e : errors) all += "\n  " + e;
        throw std::invalid_argument(all);
    }
    const std::vector<double> contrasts =
        cfg.contrast_sweep.empty() ? std::vector<double>{cfg.field.contrast} : cfg.contrast_sweep;
    const std::vector<int> initials =
        cfg.initial_sweep.empty() ? std::vector<int>{cfg.initial_basis} : cfg.initial_sweep;
    const bool tag_initial = initials.size() > 1;

    std::filesystem::create_directories(cfg.output_dir);
    std::vector<std::string> written;
    std::vector<JobResult> jobs;
    for (int l : initials)
        for (double c : contrasts) jobs.push_back(run_job(cfg, c, l, tag_initial));

    for (const JobResult& job : jobs) {
        const std::filesystem::path path =
            std::filesystem::path(cfg.output_dir) /
            (job.method_tag + "_c" + cfgdetail::contrast_tag(job.contrast) + ".csv");
        cfgdetail::write_rows_atomic(path, job.rows);
        written.push_back(path.string());
    }

    const std::filesystem::path plot = std::filesystem::path(cfg.output_dir) / "plot_dof_e.csv";
    {
        const std::filesystem::path tmp = plot.string() + ".tmp";
        std::ofstream os(tmp);
        if (!os) throw std::runtime_error("cannot write " + tmp.string());
        os << "method,contrast,dof,e\n";
        for (const JobResult& job : jobs)
            for (const ReportRow& r : job.rows)
                os << r.method << ',' << cfgdetail::fmt(r.contrast) << ',' << r.dof << ','
                   << cfgdetail::fmt(r.e) << '\n';
        os.close();
        std::filesystem::rename(tmp, plot);
    }
    written.push_back(plot.string());
    return written;
}

/// Resolved-parameter dump for the dry-run mode of `validate`.
inline std::string describe_config(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "grid: " << cfg.grid.ncx << " x " << cfg.grid.ncy << " coarse, " << cfg.grid.nf
       << " fine per block, domain " << cfg.grid.width << " x " << cfg.grid.height << "\n";
    os << "field: preset=" << cfg.preset;
    if (!cfg.raster.empty()) os << " raster=" << cfg.raster;
    os << " contrast=" << cfgdetail::fmt(cfg.field.contrast)
       << " background=" << cfgdetail::fmt(cfg.field.background) << " seed=" << cfg.field.seed
       << " rects=" << cfg.field.rects.size() + cfg.field.random_rects
       << " channels=" << cfg.field.channels.size() + cfg.field.random_channels << "\n";
    os << "source: " << cfg.source_kind << "\n";
    os << "method: " << cfg.method << " spectral=" << to_string(cfg.spectral);
    if (cfg.method == "offline") os << " theta=" << cfg.theta << " delta0=" << cfg.delta0;
    if (cfg.method == "online")
        os << " regions="
           << (cfg.regions == RegionStrategy::Neighborhood ? "neighborhoods" : "blocks2x2");
    if (cfg.method == "uniform")
        os << " range=[" << cfg.uniform_min << "," << cfg.uniform_max << "]";
    else
        os << " initial_basis=" << cfg.initial_basis;
    os << " max_levels=" << cfg.max_levels << " tol=" << cfgdetail::fmt(cfg.tol) << "\n";
    os << "sweeps: contrasts=";
    if (cfg.contrast_sweep.empty())
        os << "(field contrast)";
    else
        for (double c : cfg.contrast_sweep) os << " " << cfgdetail::fmt(c);
    os << " initial_basis=";
    if (cfg.initial_sweep.empty())
        os << "(method initial)";
    else
        for (int l : cfg.initial_sweep) os << " " << l;
    os << "\noutput: " << cfg.output_dir << "\n";
    return os.str();
}

}  // namespace mixedms
