// Experiment CLI: validate and run experiment configs, generate and inspect
// permeability rasters. Exit codes: 0 ok, 1 config error, 2 runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "mixedms/harness.hpp"

using namespace mixedms;

namespace {

int do_validate(const std::string& path) {
    const ExperimentConfig cfg = load_config(path);
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << path << ": " << e << "\n";
        return 1;
    }
    std::cout << describe_config(cfg);
    std::cout << "ok\n";
    return 0;
}

int do_run(const std::string& path, const std::string& out_override) {
    ExperimentConfig cfg = load_config(path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << path << ": " << e << "\n";
        return 1;
    }
    for (const std::string& file : run_experiment(cfg)) std::cout << file << "\n";
    return 0;
}

int do_field_gen(const std::string& path, const std::string& out) {
    const ExperimentConfig cfg = load_config(path);
    const auto errors = validate_config(cfg);
    if (!errors.empty()) {
        for (const auto& e : errors) std::cerr << path << ": " << e << "\n";
        return 1;
    }
    const Grid grid = build_grid(cfg.grid);
    const PermField field = realize_field(grid, cfg, cfg.field.contrast);
    save_field(grid, field, out);
    std::cout << out << "\n";
    return 0;
}

int do_field_inspect(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        std::cerr << "cannot open raster: " << path << "\n";
        return 1;
    }
    int rows = 0;
    long cols = -1;
    double lo = 0.0, hi = 0.0;
    bool first = true;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        double v;
        long n = 0;
        while (ls >> v) {
            if (first || v < lo) lo = v;
            if (first || v > hi) hi = v;
            first = false;
            ++n;
        }
        if (n == 0) continue;
        if (cols >= 0 && n != cols) {
            std::cerr << path << ": ragged rows (" << n << " vs " << cols << ")\n";
            return 1;
        }
        cols = n;
        ++rows;
    }
    if (first) {
        std::cerr << path << ": no numeric data\n";
        return 1;
    }
    std::printf("rows %d cols %ld min %.6g max %.6g contrast %.6g\n", rows, cols, lo, hi,
                hi / lo);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"adaptive mixed multiscale flow experiments"};
    app.require_subcommand(1);

    std::string config, output, raster;

    auto* run = app.add_subcommand("run", "run an experiment config");
    run->add_option("config", config, "config file")->required();
    run->add_option("-o,--output", output, "override the output directory");

    auto* validate = app.add_subcommand("validate", "check a config and print resolved parameters");
    validate->add_option("config", config, "config file")->required();

    auto* field = app.add_subcommand("field", "permeability raster utilities");
    field->require_subcommand(1);
    auto* gen = field->add_subcommand("gen", "generate the config's field as a raster");
    gen->add_option("config", config, "config file")->required();
    gen->add_option("-o,--output", raster, "raster path")->required();
    auto* inspect = field->add_subcommand("inspect", "print raster dimensions and range");
    inspect->add_option("raster", raster, "raster file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return do_run(config, output);
        if (validate->parsed()) return do_validate(config);
        if (gen->parsed()) return do_field_gen(config, raster);
        if (inspect->parsed()) return do_field_inspect(raster);
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 2;
}
