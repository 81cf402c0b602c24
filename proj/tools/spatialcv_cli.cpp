#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spatialcv/cli/commands.hpp"

namespace fs = std::filesystem;
using namespace spatialcv;

namespace {

// Flags shared by the manifest-driven commands; each maps onto a manifest key.
struct RunFlags {
    std::string manifest;
    std::vector<std::string> set;
    std::string folds, selection, selection_folds, objective, mtry, out;
    std::optional<std::size_t> k, n_trees, jobs;
    std::optional<std::uint64_t> seed;

    void attach(CLI::App& app) {
        app.add_option("manifest", manifest, "run manifest")->required();
        app.add_option("--set", set, "override a manifest entry, e.g. --set forest.n_trees=100");
        app.add_option("--folds", folds, "fold strategy: random, block or cluster");
        app.add_option("--k", k, "number of random folds");
        app.add_option("--selection", selection, "selection strategy: none, ffs or rfe");
        app.add_option("--selection-folds", selection_folds, "fold strategy used during selection");
        app.add_option("--objective", objective, "accuracy, kappa, rmse or r2");
        app.add_option("--mtry", mtry, "comma-separated mtry grid");
        app.add_option("--n-trees", n_trees, "trees per forest");
        app.add_option("--seed", seed, "forest seed");
        app.add_option("--jobs", jobs, "worker threads");
        app.add_option("--out", out, "output directory");
    }

    cli::RunConfig load() const {
        std::vector<std::string> overrides = set;
        auto put = [&](const char* key, const std::string& v) {
            if (!v.empty()) overrides.push_back(std::string(key) + "=" + v);
        };
        put("cv.folds", folds);
        put("selection.method", selection);
        put("selection.folds", selection_folds);
        put("cv.objective", objective);
        put("cv.mtry", mtry);
        if (k) put("cv.k", std::to_string(*k));
        if (n_trees) put("forest.n_trees", std::to_string(*n_trees));
        if (seed) put("forest.seed", std::to_string(*seed));
        if (jobs) put("run.jobs", std::to_string(*jobs));
        auto config = cli::load_run_config(manifest, overrides);
        // A command-line output directory is relative to the working directory.
        if (!out.empty()) config.output_dir = out;
        return config;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Random forest cross-validation with spatial folds and feature selection"};
    app.require_subcommand(1);

    RunFlags cv_flags, select_flags, matrix_flags;
    auto* cv = app.add_subcommand("cv", "cross-validate a forest on all features");
    cv_flags.attach(*cv);
    auto* select = app.add_subcommand("select", "select features (ffs or rfe), then cross-validate them");
    select_flags.attach(*select);
    auto* matrix = app.add_subcommand("matrix", "run the four variable sets under random and spatial folds");
    matrix_flags.attach(*matrix);

    std::string model_path, stack_path, out_path;
    std::size_t predict_jobs = 1;
    auto* predict = app.add_subcommand("predict", "predict a raster stack with a saved model");
    predict->add_option("--model", model_path, "model JSON")->required();
    predict->add_option("--stack", stack_path, "stack manifest")->required();
    predict->add_option("--out", out_path, "output ASCII grid")->required();
    predict->add_option("--jobs", predict_jobs, "worker threads")->check(CLI::PositiveNumber);

    std::string spec_path, synth_out;
    std::vector<std::string> synth_set;
    std::optional<std::uint64_t> synth_seed;
    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark");
    synth->add_option("--spec", spec_path, "benchmark spec file");
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "benchmark seed");
    synth->add_option("--set", synth_set, "override a spec entry, e.g. --set task=classification");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code(ErrorKind::config);
    }

    try {
        if (*cv) {
            cli::cmd_cv(cv_flags.load(), std::cout, std::cerr);
        } else if (*select) {
            cli::cmd_select(select_flags.load(), std::cout, std::cerr);
        } else if (*matrix) {
            cli::cmd_matrix(matrix_flags.load(), std::cout, std::cerr);
        } else if (*predict) {
            cli::cmd_predict(model_path, stack_path, out_path, predict_jobs, std::cout, std::cerr);
        } else if (*synth) {
            if (synth_seed) synth_set.push_back("seed=" + std::to_string(*synth_seed));
            std::optional<fs::path> spec;
            if (!spec_path.empty()) spec = spec_path;
            cli::cmd_synth(spec, synth_out, synth_set, std::cout, std::cerr);
        }
    } catch (const Error& e) {
        std::cerr << "spatialcv: error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "spatialcv: error: " << e.what() << '\n';
        return exit_code(ErrorKind::data);
    } catch (const std::exception& e) {
        std::cerr << "spatialcv: internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
