#pragma once

// Batch commands behind the spatialcv executable. Each command writes its
// results under the configured output directory, logs to `log`, and prints a
// single summary line to `out`.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "spatialcv/cli/run_config.hpp"
#include "spatialcv/cv_engine.hpp"
#include "spatialcv/error.hpp"
#include "spatialcv/folds.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/prediction.hpp"
#include "spatialcv/raster.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/selection.hpp"
#include "spatialcv/synthgen.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv::cli {

namespace fs = std::filesystem;

inline void require_exists(const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw IoError(std::string(what) + " " + p.string() + " does not exist");
}

inline void check_paths(const RunConfig& c) {
    require_exists(c.samples, "sample table");
    if (c.stack) require_exists(*c.stack, "stack manifest");
}

inline SampleTable load_samples(const RunConfig& c) { return read_samples_csv(c.samples, c.schema, c.task); }

inline std::size_t count_groups(const SampleTable& table) {
    std::set<std::int64_t> groups;
    for (const auto& r : table.rows()) groups.insert(r.group.value);
    return groups.size();
}

/// Random folds default to one fold per sample group so that random and
/// grouped plans hold the same number of folds.
inline FoldPlan make_plan(const SampleTable& table, const FoldSettings& s) {
    switch (s.strategy) {
        case FoldStrategy::random: return random_folds(table, s.k ? s.k : count_groups(table), s.seed);
        case FoldStrategy::spatial_block: return spatial_block_folds(table, s.block_cols, s.block_rows);
        case FoldStrategy::cluster: return cluster_folds(table);
    }
    throw ConfigError("unknown fold strategy");
}

inline TuneGrid grid_for(const RunConfig& c, std::size_t n_features) {
    if (c.grid) return *c.grid;
    return n_features >= 2 ? default_mtry_grid(n_features) : TuneGrid{{1}};
}

inline std::string summary_line(const CvReport& r) {
    auto value = [](std::optional<double> v) { return v ? format_double(*v) : std::string("NA"); };
    return std::string(to_string(r.strategy)) + ' ' + std::string(to_string(r.objective)) + '=' +
           value(r.metric(r.objective, MetricScope::per_fold_mean)) + " (per-fold) / " +
           value(r.metric(r.objective, MetricScope::global)) + " (global)";
}

/// Report, held-out predictions, fold assignment, and a model refit on every
/// sample with the chosen mtry.
inline void write_cv_outputs(const SampleTable& table, const FoldPlan& plan, const CvReport& report,
                             const fs::path& dir, bool timing, std::size_t jobs) {
    write_cv_report(report, dir / "report.json", dir / "held_out.csv", timing);
    write_fold_plan_csv(table, plan, dir / "folds.csv");
    write_forest(train(table, report.config, jobs), dir / "model.json");
}

inline CvReport cmd_cv(const RunConfig& c, std::ostream& out, std::ostream& log) {
    check_paths(c);
    const auto table = load_samples(c);
    const auto plan = make_plan(table, c.folds);
    log << "spatialcv: cv on " << table.size() << " samples, " << table.n_features() << " features, "
        << to_string(plan.strategy) << " folds (k=" << plan.k << ")\n";
    const auto report =
        cross_validate(table, plan, c.forest, grid_for(c, table.n_features()), c.objective, c.jobs);
    write_cv_outputs(table, plan, report, c.output_dir, c.timing, c.jobs);
    out << summary_line(report) << '\n';
    return report;
}

inline SelectionTrace run_selection(const SampleTable& table, const FoldPlan& plan, SelectionChoice method,
                                    const RunConfig& c) {
    const SelectionOptions options{c.epsilon, c.jobs};
    if (method == SelectionChoice::ffs) return forward_feature_selection(table, plan, c.forest, c.objective, options);
    if (method == SelectionChoice::rfe)
        return recursive_feature_elimination(table, plan, c.forest, c.objective, c.rfe_sizes, options);
    throw ConfigError("selection.method must be ffs or rfe for this command");
}

struct SelectResult {
    SelectionTrace trace;
    CvReport report;
};

inline SelectResult cmd_select(const RunConfig& c, std::ostream& out, std::ostream& log) {
    if (c.selection == SelectionChoice::none) throw ConfigError("selection.method must be ffs or rfe for select");
    check_paths(c);
    const auto table = load_samples(c);
    if (table.n_features() < 2) throw ArgumentError("feature selection needs at least two features");
    const auto selection_plan = make_plan(table, c.selection_folds);
    const auto plan = make_plan(table, c.folds);
    log << "spatialcv: " << (c.selection == SelectionChoice::ffs ? "ffs" : "rfe") << " over "
        << table.n_features() << " features with " << to_string(selection_plan.strategy) << " folds\n";
    auto trace = run_selection(table, selection_plan, c.selection, c);
    write_selection_trace(trace, c.output_dir / "trace.json", c.output_dir / "trace.csv");

    const auto sub = table.select_features(trace.final_features);
    log << "spatialcv: selected " << join(trace.final_features, ", ") << "; validating with "
        << to_string(plan.strategy) << " folds\n";
    auto report = cross_validate(sub, plan, c.forest, grid_for(c, sub.n_features()), c.objective, c.jobs);
    write_cv_outputs(sub, plan, report, c.output_dir, c.timing, c.jobs);
    out << "selected " << join(trace.final_features, ",") << " | " << summary_line(report) << '\n';
    return {std::move(trace), std::move(report)};
}

/// Legend path next to a prediction grid: "map.asc" -> "map.legend.csv".
inline fs::path legend_path(const fs::path& grid_path) {
    auto p = grid_path;
    p.replace_extension(".legend.csv");
    return p;
}

inline RasterGrid cmd_predict(const fs::path& model_path, const fs::path& stack_manifest, const fs::path& out_path,
                              std::size_t jobs, std::ostream& out, std::ostream& log) {
    require_exists(model_path, "model");
    require_exists(stack_manifest, "stack manifest");
    const auto model = read_forest(model_path);
    const auto stack = read_stack_manifest(stack_manifest);
    log << "spatialcv: predicting " << stack.geometry().cell_count() << " cells with " << model.trees.size()
        << " trees\n";
    auto surface = predict_surface(model, stack, jobs);
    write_ascii_grid(surface, out_path);
    if (model.task == Task::classification) write_text_file(legend_path(out_path), format_legend_csv(model));
    out << "wrote " << out_path.string() << '\n';
    return surface;
}

inline Benchmark cmd_synth(const std::optional<fs::path>& spec_path, const fs::path& out_dir,
                           const std::vector<std::string>& overrides, std::ostream& out, std::ostream& log) {
    Settings settings;
    if (spec_path) {
        require_exists(*spec_path, "benchmark spec");
        settings = parse_manifest(read_text_file(*spec_path));
    }
    apply_overrides(settings, overrides);
    const auto spec = make_benchmark_spec(settings);
    log << "spatialcv: generating " << spec.ncols << "x" << spec.nrows << " " << to_string(spec.task)
        << " benchmark, seed " << spec.seed << '\n';
    auto b = make_benchmark(spec);
    write_benchmark(b, out_dir);
    out << "wrote " << b.table.size() << " samples in " << spec.design.n_clusters << " clusters to "
        << out_dir.string() << '\n';
    return b;
}

// ---------------------------------------------------------------------------
// Experiment matrix: four variable sets, each validated with random and
// spatial folds.

struct MatrixCell {
    std::string model;     // "all", "rfe", "ffs_random", "ffs_spatial"
    std::string validation;  // "random" or "spatial"
    std::vector<std::string> features;
    CvReport report;
};

inline std::string matrix_table(const std::vector<MatrixCell>& cells, Metric objective) {
    std::ostringstream s;
    auto cell = [](std::optional<double> v) {
        std::ostringstream t;
        if (v) t << std::fixed << std::setprecision(4) << *v;
        else t << "NA";
        return t.str();
    };
    s << std::left << std::setw(14) << "model" << std::setw(20) << ("random " + std::string(to_string(objective)))
      << std::setw(20) << ("spatial " + std::string(to_string(objective))) << "features\n";
    s << std::setw(14) << "" << std::setw(10) << "By Fold" << std::setw(10) << "Global" << std::setw(10)
      << "By Fold" << std::setw(10) << "Global" << '\n';
    for (std::size_t i = 0; i + 1 < cells.size(); i += 2) {
        const auto& r = cells[i].report;
        const auto& sp = cells[i + 1].report;
        s << std::setw(14) << cells[i].model << std::setw(10) << cell(r.metric(objective, MetricScope::per_fold_mean))
          << std::setw(10) << cell(r.metric(objective, MetricScope::global)) << std::setw(10)
          << cell(sp.metric(objective, MetricScope::per_fold_mean)) << std::setw(10)
          << cell(sp.metric(objective, MetricScope::global)) << join(cells[i].features, ",") << '\n';
    }
    return s.str();
}

inline std::string format_matrix_csv(const std::vector<MatrixCell>& cells) {
    std::string out = "model,validation,features,metric,by_fold,global\n";
    for (const auto& c : cells) {
        for (Metric m : task_metrics(c.report.task)) {
            auto v = [](std::optional<double> x) { return x ? format_double(*x) : std::string("NA"); };
            out += c.model + ',' + c.validation + ',' + csv_escape(join(c.features, ";")) + ',' +
                   std::string(to_string(m)) + ',' + v(c.report.metric(m, MetricScope::per_fold_mean)) + ',' +
                   v(c.report.metric(m, MetricScope::global)) + '\n';
        }
    }
    return out;
}

inline std::vector<MatrixCell> cmd_matrix(const RunConfig& c, std::ostream& out, std::ostream& log) {
    if (c.folds.strategy == FoldStrategy::random)
        throw ConfigError("matrix needs a spatial fold strategy (cv.folds = cluster or block)");
    check_paths(c);
    const auto table = load_samples(c);
    if (table.n_features() < 2) throw ArgumentError("the experiment matrix needs at least two features");
    const auto spatial = make_plan(table, c.folds);
    FoldSettings random_settings = c.folds;
    random_settings.strategy = FoldStrategy::random;
    if (!random_settings.k) random_settings.k = spatial.k;
    const auto random = make_plan(table, random_settings);
    std::optional<RasterStack> stack;
    if (c.stack) stack = read_stack_manifest(*c.stack);

    struct Row {
        std::string name;
        std::vector<std::string> features;
    };
    std::vector<Row> rows{{"all", table.feature_names()}};
    auto select = [&](const char* name, SelectionChoice method, const FoldPlan& plan) {
        log << "spatialcv: matrix selection " << name << '\n';
        const auto trace = run_selection(table, plan, method, c);
        write_selection_trace(trace, c.output_dir / name / "trace.json", c.output_dir / name / "trace.csv");
        rows.push_back({name, trace.final_features});
    };
    select("rfe", SelectionChoice::rfe, spatial);
    select("ffs_random", SelectionChoice::ffs, random);
    select("ffs_spatial", SelectionChoice::ffs, spatial);

    std::vector<MatrixCell> cells;
    for (const auto& row : rows) {
        const auto sub = table.select_features(row.features);
        const auto grid = grid_for(c, sub.n_features());
        for (const auto* plan : {&random, &spatial}) {
            const std::string validation = plan == &random ? "random" : "spatial";
            log << "spatialcv: matrix cell " << row.name << " / " << validation << '\n';
            auto report = cross_validate(sub, *plan, c.forest, grid, c.objective, c.jobs);
            const auto dir = c.output_dir / row.name / validation;
            write_cv_report(report, dir / "report.json", dir / "held_out.csv", c.timing);
            cells.push_back({row.name, validation, row.features, std::move(report)});
        }
        if (stack) {
            // Map from the spatially validated configuration.
            const auto model = train(sub, cells.back().report.config, c.jobs);
            write_forest(model, c.output_dir / row.name / "model.json");
            const auto path = c.output_dir / row.name / "prediction.asc";
            write_ascii_grid(predict_surface(model, *stack, c.jobs), path);
            if (model.task == Task::classification) write_text_file(legend_path(path), format_legend_csv(model));
        }
    }
    const auto text = matrix_table(cells, c.objective);
    write_text_file(c.output_dir / "matrix.txt", text);
    write_text_file(c.output_dir / "matrix.csv", format_matrix_csv(cells));
    out << text;
    return cells;
}

}  // namespace spatialcv::cli
