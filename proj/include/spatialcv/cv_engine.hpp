#pragma once

// Cross-validation of random forests over a fold plan with mtry tuning.
//
// Tuning and reporting share the same folds (no nested CV), so the reported
// skill of the winning mtry is optimistic in the same way caret's is.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialcv/error.hpp"
#include "spatialcv/folds.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/metrics.hpp"
#include "spatialcv/parallel.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

struct TuneGrid {
    std::vector<std::size_t> mtry_values;  // ascending
};

/// {2, ..., n_features} thinned to at most eight evenly spaced values that
/// include both ends.
inline TuneGrid default_mtry_grid(std::size_t n_features) {
    if (n_features < 2) throw ArgumentError("default mtry grid needs at least two features");
    const std::size_t span = n_features - 2;
    const std::size_t count = std::min<std::size_t>(8, span + 1);
    TuneGrid grid;
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t v =
            count == 1 ? 2 : 2 + static_cast<std::size_t>(std::llround(static_cast<double>(i * span) / static_cast<double>(count - 1)));
        if (grid.mtry_values.empty() || grid.mtry_values.back() != v) grid.mtry_values.push_back(v);
    }
    return grid;
}

inline void validate_grid(const TuneGrid& grid, std::size_t n_features) {
    if (grid.mtry_values.empty()) throw ConfigError("mtry grid is empty");
    for (std::size_t i = 0; i < grid.mtry_values.size(); ++i) {
        const std::size_t m = grid.mtry_values[i];
        if (m < 1 || m > n_features)
            throw ConfigError("mtry " + std::to_string(m) + " outside [1, " + std::to_string(n_features) + "]");
        if (i && m <= grid.mtry_values[i - 1]) throw ConfigError("mtry grid must be strictly ascending");
    }
}

/// The metrics reported for a task, objective candidates first.
inline std::vector<Metric> task_metrics(Task task) {
    return task == Task::classification ? std::vector<Metric>{Metric::accuracy, Metric::kappa}
                                        : std::vector<Metric>{Metric::rmse, Metric::r2};
}

inline Metric default_objective(Task task) { return task == Task::classification ? Metric::kappa : Metric::rmse; }

struct HeldOutPrediction {
    std::int64_t id = 0;
    std::size_t fold = 0;
    double observed = 0.0;
    double predicted = 0.0;
};

struct TuningPoint {
    std::size_t mtry = 0;
    double objective = 0.0;  // per-fold mean
};

struct CvReport {
    FoldStrategy strategy = FoldStrategy::random;
    std::size_t k = 0;
    std::vector<std::size_t> fold_sizes;
    Task task = Task::regression;
    Metric objective = Metric::rmse;
    std::size_t chosen_mtry = 0;
    std::vector<TuningPoint> tuning;
    std::vector<MetricValue> metrics;
    std::vector<HeldOutPrediction> held_out;  // table order
    ForestConfig config;                      // mtry field holds chosen_mtry
    std::vector<std::string> feature_names;
    std::vector<std::string> class_labels;
    double wall_seconds = 0.0;

    std::optional<double> metric(Metric m, MetricScope scope) const {
        for (const auto& v : metrics)
            if (v.name == m && v.scope == scope) return v.value;
        return std::nullopt;
    }

    /// Per-fold mean of the objective for the chosen mtry.
    double objective_value() const {
        for (const auto& t : tuning)
            if (t.mtry == chosen_mtry) return t.objective;
        throw ArgumentError("report has no tuning entry for the chosen mtry");
    }
};

/// For each mtry in the grid and each fold, trains on the other folds and
/// predicts the held-out fold. The mtry with the best per-fold-mean objective
/// wins (ties to the smaller mtry); its held-out predictions fill the report.
inline CvReport cross_validate(const SampleTable& table, const FoldPlan& plan, const ForestConfig& config,
                               const TuneGrid& grid, Metric objective, std::size_t jobs = 1) {
    const auto started = std::chrono::steady_clock::now();
    validate_plan(table, plan);
    validate_grid(grid, table.n_features());
    if (is_classification_metric(objective) != (table.task() == Task::classification))
        throw ConfigError("objective " + std::string(to_string(objective)) + " does not fit a " +
                          std::string(to_string(table.task())) + " task");

    const auto x = FeatureMatrix::from(table);
    const auto y = table.responses();
    const TrainingData data{x, y, table.task(), table.n_classes()};
    const std::size_t k = plan.k;
    const std::size_t n_grid = grid.mtry_values.size();

    std::vector<std::vector<std::size_t>> test_rows(k), train_rows(k);
    for (std::size_t f = 0; f < k; ++f) {
        test_rows[f] = plan.members(f);
        train_rows[f] = plan.complement(f);
        if (table.task() == Task::classification) {
            const double first = y[train_rows[f].front()];
            if (std::all_of(train_rows[f].begin(), train_rows[f].end(), [&](std::size_t r) { return y[r] == first; }))
                throw DegenerateError("training partition for fold " + std::to_string(f) + " holds a single class");
        }
    }

    // Every held-out row must be absent from its training partition.
    for (std::size_t f = 0; f < k; ++f) {
        std::vector<char> in_train(table.size(), 0);
        for (std::size_t r : train_rows[f]) in_train[r] = 1;
        for (std::size_t r : test_rows[f])
            if (in_train[r]) throw ArgumentError("fold plan leaks sample " + std::to_string(table.row(r).id));
    }

    std::vector<std::vector<double>> predictions(n_grid * k);
    parallel_for(n_grid * k, jobs, [&](std::size_t cell) {
        const std::size_t g = cell / k, f = cell % k;
        ForestConfig c = config;
        c.mtry = grid.mtry_values[g];
        const Forest model = train(data, train_rows[f], c, table.feature_names(), table.class_labels());
        predictions[cell] = model.predict(x, test_rows[f]);
    });

    auto fold_predictions = [&](std::size_t g) {
        std::vector<FoldPredictions> out(k);
        for (std::size_t f = 0; f < k; ++f) {
            out[f].fold = f;
            for (std::size_t r : test_rows[f]) out[f].observed.push_back(y[r]);
            out[f].predicted = predictions[g * k + f];
        }
        return out;
    };

    CvReport report;
    report.strategy = plan.strategy;
    report.k = k;
    report.fold_sizes = plan.fold_sizes();
    report.task = table.task();
    report.objective = objective;
    report.feature_names = table.feature_names();
    report.class_labels = table.class_labels();

    std::size_t best = 0;
    for (std::size_t g = 0; g < n_grid; ++g) {
        const double value = per_fold_mean(objective, fold_predictions(g), table.n_classes()).value;
        report.tuning.push_back({grid.mtry_values[g], value});
        if (g && improves(objective, value, report.tuning[best].objective)) best = g;
    }
    report.chosen_mtry = grid.mtry_values[best];
    report.config = config;
    report.config.mtry = report.chosen_mtry;

    const auto folds = fold_predictions(best);
    for (Metric m : task_metrics(table.task())) {
        try {
            report.metrics.push_back(per_fold_mean(m, folds, table.n_classes()));
        } catch (const UndefinedMetricError&) {
        }
        try {
            report.metrics.push_back(global_metric(m, folds, table.n_classes()));
        } catch (const UndefinedMetricError&) {
        }
    }

    report.held_out.resize(table.size());
    for (std::size_t f = 0; f < k; ++f) {
        for (std::size_t i = 0; i < test_rows[f].size(); ++i) {
            const std::size_t r = test_rows[f][i];
            report.held_out[r] = {table.row(r).id, f, y[r], predictions[best * k + f][i]};
        }
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// ---------------------------------------------------------------------------
// Serialization

/// Report document. Wall time is left out unless requested so that identical
/// runs produce identical files.
inline nlohmann::json to_json(const CvReport& r, bool include_timing = false) {
    nlohmann::json tuning = nlohmann::json::array();
    for (const auto& t : r.tuning) tuning.push_back({{"mtry", t.mtry}, {"objective", t.objective}});
    nlohmann::json metrics = nlohmann::json::array();
    for (const auto& m : r.metrics) {
        nlohmann::json v{{"name", to_string(m.name)}, {"scope", to_string(m.scope)}, {"value", m.value}};
        if (m.scope == MetricScope::per_fold_mean) {
            v["folds_used"] = m.folds_used;
            v["folds_skipped"] = m.folds_skipped;
        }
        metrics.push_back(std::move(v));
    }
    nlohmann::json held = nlohmann::json::array();
    for (const auto& h : r.held_out)
        held.push_back({{"id", h.id}, {"fold", h.fold}, {"observed", h.observed}, {"predicted", h.predicted}});
    nlohmann::json doc{
        {"plan", {{"strategy", to_string(r.strategy)}, {"k", r.k}, {"fold_sizes", r.fold_sizes}}},
        {"task", to_string(r.task)},
        {"objective", to_string(r.objective)},
        {"chosen_mtry", r.chosen_mtry},
        {"tuning", std::move(tuning)},
        {"metrics", std::move(metrics)},
        {"config",
         {{"n_trees", r.config.n_trees},
          {"mtry", r.config.mtry},
          {"min_node_size", effective_min_node_size(r.config, r.task)},
          {"seed", r.config.seed},
          {"bootstrap", r.config.bootstrap}}},
        {"feature_names", r.feature_names},
        {"class_labels", r.class_labels},
        {"held_out", std::move(held)},
    };
    if (include_timing) doc["wall_seconds"] = r.wall_seconds;
    return doc;
}

inline std::string format_held_out_csv(const CvReport& r) {
    std::string out = "id,fold,observed,predicted\n";
    auto value = [&](double v) {
        return r.task == Task::classification ? csv_escape(r.class_labels.at(static_cast<std::size_t>(v)))
                                              : format_double(v);
    };
    for (const auto& h : r.held_out)
        out += std::to_string(h.id) + ',' + std::to_string(h.fold) + ',' + value(h.observed) + ',' +
               value(h.predicted) + '\n';
    return out;
}

inline void write_cv_report(const CvReport& report, const std::filesystem::path& json_path,
                            const std::filesystem::path& held_out_csv_path, bool include_timing = false) {
    write_text_file(json_path, to_json(report, include_timing).dump(2) + "\n");
    write_text_file(held_out_csv_path, format_held_out_csv(report));
}

}  // namespace spatialcv
