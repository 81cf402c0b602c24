#pragma once

// Forward feature selection driven by a caller-chosen fold plan, and
// importance-based recursive feature elimination for comparison.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "spatialcv/cv_engine.hpp"
#include "spatialcv/error.hpp"
#include "spatialcv/folds.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/metrics.hpp"
#include "spatialcv/parallel.hpp"
#include "spatialcv/sample_store.hpp"

namespace spatialcv {

enum class SelectionMethod { ffs, rfe };

inline std::string_view to_string(SelectionMethod m) { return m == SelectionMethod::ffs ? "ffs" : "rfe"; }

struct SelectionOptions {
    double epsilon = 1e-6;  // minimum objective improvement, in objective units
    std::size_t jobs = 1;
};

struct SelectionStep {
    std::size_t stage = 0;  // FFS: 1 for pairs, 2+ for additions. RFE: position in the size schedule
    std::vector<std::string> features;
    std::optional<double> objective;  // per-fold mean; empty when the model was degenerate
    bool accepted = false;
};

struct SelectionTrace {
    SelectionMethod method = SelectionMethod::ffs;
    FoldStrategy plan_strategy = FoldStrategy::random;
    Metric objective = Metric::rmse;
    std::vector<SelectionStep> steps;
    std::vector<std::string> final_features;

    std::vector<const SelectionStep*> accepted_steps() const {
        std::vector<const SelectionStep*> out;
        for (const auto& s : steps)
            if (s.accepted) out.push_back(&s);
        return out;
    }
};

namespace detail {

/// Per-fold-mean objective of a fixed-mtry forest on a feature subset, or
/// nullopt when the subset cannot be modelled on this plan.
inline std::optional<double> evaluate_subset(const SampleTable& table, const std::vector<std::string>& features,
                                             const FoldPlan& plan, ForestConfig config, Metric objective) {
    const auto sub = table.select_features(features);
    config.mtry = std::min<std::size_t>(2, features.size());
    try {
        return cross_validate(sub, plan, config, TuneGrid{{config.mtry}}, objective).objective_value();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::degenerate) return std::nullopt;
        throw;
    }
}

}  // namespace detail

/// Greedy forward selection. Every pair of features is scored first (mtry 2);
/// the best pair is then extended one feature at a time while the best
/// addition improves the per-fold-mean objective by more than epsilon.
inline SelectionTrace forward_feature_selection(const SampleTable& table, const FoldPlan& plan,
                                                const ForestConfig& config, Metric objective,
                                                const SelectionOptions& options = {}) {
    const std::size_t p = table.n_features();
    if (p < 2) throw ArgumentError("forward feature selection needs at least two features");
    validate_plan(table, plan);
    const auto& names = table.feature_names();

    SelectionTrace trace{SelectionMethod::ffs, plan.strategy, objective, {}, {}};

    std::vector<std::vector<std::size_t>> pairs;
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = i + 1; j < p; ++j) pairs.push_back({i, j});

    auto to_names = [&](const std::vector<std::size_t>& idx) {
        std::vector<std::string> out;
        for (std::size_t j : idx) out.push_back(names[j]);
        return out;
    };
    auto evaluate_all = [&](const std::vector<std::vector<std::size_t>>& candidates) {
        std::vector<std::optional<double>> scores(candidates.size());
        parallel_for(candidates.size(), options.jobs, [&](std::size_t c) {
            scores[c] = detail::evaluate_subset(table, to_names(candidates[c]), plan, config, objective);
        });
        return scores;
    };
    auto pick_best = [&](const std::vector<std::optional<double>>& scores) {
        std::optional<std::size_t> best;
        for (std::size_t c = 0; c < scores.size(); ++c)
            if (scores[c] && (!best || improves(objective, *scores[c], *scores[*best]))) best = c;
        return best;
    };

    const auto pair_scores = evaluate_all(pairs);
    const auto best_pair = pick_best(pair_scores);
    const std::size_t first_step = trace.steps.size();
    for (std::size_t c = 0; c < pairs.size(); ++c) trace.steps.push_back({1, to_names(pairs[c]), pair_scores[c], false});
    if (!best_pair) throw SelectionFailure("every feature pair produced a degenerate model");
    trace.steps[first_step + *best_pair].accepted = true;

    std::vector<std::size_t> incumbent = pairs[*best_pair];
    double incumbent_score = *pair_scores[*best_pair];
    for (std::size_t stage = 2; incumbent.size() < p; ++stage) {
        std::vector<std::vector<std::size_t>> candidates;
        for (std::size_t j = 0; j < p; ++j) {
            if (std::find(incumbent.begin(), incumbent.end(), j) != incumbent.end()) continue;
            auto c = incumbent;
            c.push_back(j);
            candidates.push_back(std::move(c));
        }
        const auto scores = evaluate_all(candidates);
        const auto best = pick_best(scores);
        const std::size_t offset = trace.steps.size();
        for (std::size_t c = 0; c < candidates.size(); ++c)
            trace.steps.push_back({stage, to_names(candidates[c]), scores[c], false});
        if (!best || !improves(objective, *scores[*best], incumbent_score, options.epsilon)) break;
        trace.steps[offset + *best].accepted = true;
        incumbent = candidates[*best];
        incumbent_score = *scores[*best];
    }
    trace.final_features = to_names(incumbent);
    return trace;
}

/// Sizes p, p-1, ..., 2.
inline std::vector<std::size_t> default_rfe_sizes(std::size_t p) {
    std::vector<std::size_t> out;
    for (std::size_t s = p; s >= 2; --s) out.push_back(s);
    return out;
}

/// Backward elimination by impurity importance. Within each fold the
/// full-feature forest is trained on the training partition only, its
/// importances rank the features, and every subset size is scored on the
/// held-out fold with that fold's top-ranked features. The smallest size
/// within epsilon of the best objective wins; the returned features are the
/// top of the fold-averaged importance ranking.
inline SelectionTrace recursive_feature_elimination(const SampleTable& table, const FoldPlan& plan,
                                                    const ForestConfig& config, Metric objective,
                                                    std::vector<std::size_t> subset_sizes,
                                                    const SelectionOptions& options = {}) {
    const std::size_t p = table.n_features();
    if (p < 2) throw ArgumentError("recursive feature elimination needs at least two features");
    validate_plan(table, plan);
    if (subset_sizes.empty()) subset_sizes = default_rfe_sizes(p);
    for (std::size_t i = 0; i < subset_sizes.size(); ++i) {
        if (subset_sizes[i] < 2 || subset_sizes[i] > p)
            throw ArgumentError("subset size " + std::to_string(subset_sizes[i]) + " outside [2, " + std::to_string(p) + "]");
        if (i && subset_sizes[i] >= subset_sizes[i - 1]) throw ArgumentError("subset sizes must be strictly descending");
    }
    if (is_classification_metric(objective) != (table.task() == Task::classification))
        throw ConfigError("objective does not fit the task");

    const auto x = FeatureMatrix::from(table);
    const auto y = table.responses();
    const std::size_t k = plan.k;
    const std::size_t n_sizes = subset_sizes.size();

    std::vector<std::vector<double>> fold_importance(k);
    std::vector<std::vector<std::vector<double>>> predictions(k, std::vector<std::vector<double>>(n_sizes));
    std::vector<std::vector<std::size_t>> test_rows(k);
    for (std::size_t f = 0; f < k; ++f) test_rows[f] = plan.members(f);

    parallel_for(k, options.jobs, [&](std::size_t f) {
        const auto train_rows = plan.complement(f);
        ForestConfig full = config;
        full.mtry = std::min(config.mtry, p);
        const TrainingData data{x, y, table.task(), table.n_classes()};
        const Forest model = train(data, train_rows, full, table.feature_names(), table.class_labels());
        fold_importance[f] = model.importance;

        std::vector<std::size_t> order(p);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return model.importance[a] > model.importance[b]; });
        for (std::size_t s = 0; s < n_sizes; ++s) {
            const std::size_t size = subset_sizes[s];
            if (size == p) {
                predictions[f][s] = model.predict(x, test_rows[f]);
                continue;
            }
            std::vector<std::size_t> keep(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size));
            FeatureMatrix sub{x.n_rows, size, {}};
            std::vector<std::string> sub_names;
            for (std::size_t j : keep) {
                const auto col = x.column(j);
                sub.values.insert(sub.values.end(), col.begin(), col.end());
                sub_names.push_back(table.feature_names()[j]);
            }
            ForestConfig c = config;
            c.mtry = std::min(config.mtry, size);
            const TrainingData sub_data{sub, y, table.task(), table.n_classes()};
            const Forest m = train(sub_data, train_rows, c, sub_names, table.class_labels());
            predictions[f][s] = m.predict(sub, test_rows[f]);
        }
    });

    std::vector<double> mean_importance(p, 0.0);
    for (const auto& imp : fold_importance)
        for (std::size_t j = 0; j < p; ++j) mean_importance[j] += imp[j] / static_cast<double>(k);
    std::vector<std::size_t> ranking(p);
    std::iota(ranking.begin(), ranking.end(), 0);
    std::stable_sort(ranking.begin(), ranking.end(),
                     [&](std::size_t a, std::size_t b) { return mean_importance[a] > mean_importance[b]; });

    SelectionTrace trace{SelectionMethod::rfe, plan.strategy, objective, {}, {}};
    std::optional<double> best;
    for (std::size_t s = 0; s < n_sizes; ++s) {
        std::vector<FoldPredictions> folds(k);
        for (std::size_t f = 0; f < k; ++f) {
            folds[f].fold = f;
            for (std::size_t r : test_rows[f]) folds[f].observed.push_back(y[r]);
            folds[f].predicted = predictions[f][s];
        }
        std::optional<double> value;
        try {
            value = per_fold_mean(objective, folds, table.n_classes()).value;
        } catch (const UndefinedMetricError&) {
        }
        std::vector<std::string> names;
        for (std::size_t i = 0; i < subset_sizes[s]; ++i) names.push_back(table.feature_names()[ranking[i]]);
        trace.steps.push_back({s, std::move(names), value, false});
        if (value && (!best || improves(objective, *value, *best))) best = value;
    }
    if (!best) throw SelectionFailure("every subset size produced an undefined objective");

    // Smallest subset whose objective is within epsilon of the best.
    std::size_t chosen = 0;
    for (std::size_t s = 0; s < n_sizes; ++s) {
        const auto& v = trace.steps[s].objective;
        if (v && !improves(objective, *best, *v, options.epsilon)) chosen = s;
    }
    trace.steps[chosen].accepted = true;
    trace.final_features = trace.steps[chosen].features;
    return trace;
}

/// Cross-validates the selected features with mtry tuned over
/// {2, ..., |selected|}.
inline CvReport refit_selected(const SampleTable& table, const SelectionTrace& trace, const FoldPlan& plan,
                               const ForestConfig& config, std::optional<TuneGrid> grid = std::nullopt,
                               std::size_t jobs = 1) {
    if (trace.final_features.empty()) throw ArgumentError("selection trace has no final features");
    const auto sub = table.select_features(trace.final_features);
    const TuneGrid g = grid ? *grid
                            : (sub.n_features() >= 2 ? default_mtry_grid(sub.n_features()) : TuneGrid{{1}});
    return cross_validate(sub, plan, config, g, trace.objective, jobs);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const SelectionTrace& t) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : t.steps)
        steps.push_back({{"stage", s.stage},
                         {"features", s.features},
                         {"objective", s.objective ? nlohmann::json(*s.objective) : nlohmann::json(nullptr)},
                         {"accepted", s.accepted}});
    return {{"method", to_string(t.method)},
            {"plan_strategy", to_string(t.plan_strategy)},
            {"objective", to_string(t.objective)},
            {"final_features", t.final_features},
            {"steps", std::move(steps)}};
}

inline std::string format_trace_csv(const SelectionTrace& t) {
    std::string out = "step,stage,features,objective,accepted\n";
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        const auto& s = t.steps[i];
        out += std::to_string(i) + ',' + std::to_string(s.stage) + ',' + csv_escape(join(s.features, ";")) + ',' +
               (s.objective ? format_double(*s.objective) : std::string("NA")) + ',' + (s.accepted ? "1" : "0") + '\n';
    }
    return out;
}

inline void write_selection_trace(const SelectionTrace& trace, const std::filesystem::path& json_path,
                                  const std::filesystem::path& csv_path) {
    write_text_file(json_path, to_json(trace).dump(2) + "\n");
    write_text_file(csv_path, format_trace_csv(trace));
}

}  // namespace spatialcv
