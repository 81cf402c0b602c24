#pragma once

// CART trees and a bagged random forest for classification and regression.
//
// Trees split on `value <= threshold` with thresholds at midpoints between
// consecutive distinct values. Classification minimises weighted Gini
// impurity, regression the children's summed squared error. Equal-quality
// splits resolve toward the lower feature index, then the lower threshold.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spatialcv/error.hpp"
#include "spatialcv/metrics.hpp"
#include "spatialcv/parallel.hpp"
#include "spatialcv/random.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

struct ForestConfig {
    std::size_t n_trees = 500;
    std::size_t mtry = 2;
    std::size_t min_node_size = 0;  // 0 selects the task default
    std::uint64_t seed = 1;
    bool bootstrap = true;  // false grows every tree on all rows (no out-of-bag rows)

    bool operator==(const ForestConfig&) const = default;
};

/// 1 for classification, 5 for regression.
inline std::size_t default_min_node_size(Task task) { return task == Task::classification ? 1 : 5; }

inline std::size_t effective_min_node_size(const ForestConfig& config, Task task) {
    return config.min_node_size ? config.min_node_size : default_min_node_size(task);
}

struct TreeNode {
    static constexpr std::int32_t kLeaf = -1;
    std::int32_t feature = kLeaf;
    double threshold = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    double value = 0.0;              // leaf: mean response, or predicted class index
    std::uint32_t distribution = 0;  // leaf, classification: offset into Tree::distributions

    bool is_leaf() const { return feature == kLeaf; }
};

/// Flat tree; node 0 is the root and children follow their parent in preorder.
class Tree {
public:
    std::vector<TreeNode> nodes;
    std::vector<double> distributions;  // n_classes entries per classification leaf
    std::size_t n_classes = 0;

    const TreeNode& leaf_for(std::span<const double> row) const {
        const TreeNode* node = &nodes.front();
        while (!node->is_leaf())
            node = &nodes[row[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right];
        return *node;
    }

    double predict(std::span<const double> row) const { return leaf_for(row).value; }

    std::span<const double> distribution(const TreeNode& leaf) const {
        return {distributions.data() + leaf.distribution, n_classes};
    }

    std::size_t split_count() const {
        return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
    }
};

/// Borrowed training data: features, responses (class indices for
/// classification) and the task.
struct TrainingData {
    const FeatureMatrix& features;
    std::span<const double> response;
    Task task;
    std::size_t n_classes = 0;
};

namespace detail {

inline std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k)
        if (values[k] > values[best]) best = k;
    return best;
}

/// Relative tolerance when comparing split scores; near-equal scores count as
/// ties so the lower feature/threshold wins regardless of summation order.
inline bool score_beats(double candidate, double best) {
    return candidate > best + 1e-12 * std::max(1.0, std::abs(best));
}

class TreeBuilder {
public:
    TreeBuilder(const TrainingData& data, std::size_t mtry, std::size_t min_node_size, Rng& rng,
                std::vector<double>& importance)
        : data_(data), mtry_(mtry), min_node_size_(min_node_size), rng_(rng), importance_(importance) {
        feature_pool_.resize(data.features.n_cols);
        std::iota(feature_pool_.begin(), feature_pool_.end(), 0);
        if (data.task == Task::classification) {
            labels_.resize(data.response.size());
            for (std::size_t i = 0; i < labels_.size(); ++i) labels_[i] = static_cast<std::uint32_t>(data.response[i]);
            counts_.resize(data.n_classes);
            left_counts_.resize(data.n_classes);
        }
    }

    Tree build(std::vector<std::uint32_t> rows) {
        rows_ = std::move(rows);
        tree_ = Tree{};
        tree_.n_classes = data_.task == Task::classification ? data_.n_classes : 0;
        grow(0, rows_.size());
        return std::move(tree_);
    }

private:
    struct Split {
        std::size_t feature = 0;
        double threshold = 0.0;
        double score = -std::numeric_limits<double>::infinity();
        bool found = false;
    };

    std::uint32_t grow(std::size_t begin, std::size_t end) {
        const auto index = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const std::size_t n = end - begin;

        double parent_score = 0.0;
        bool pure = false;
        if (data_.task == Task::classification) {
            std::fill(counts_.begin(), counts_.end(), 0.0);
            for (std::size_t i = begin; i < end; ++i) counts_[labels_[rows_[i]]] += 1.0;
            double sq = 0.0;
            for (double c : counts_) {
                sq += c * c;
                pure = pure || c == static_cast<double>(n);
            }
            parent_score = sq / static_cast<double>(n);
        } else {
            double sum = 0.0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
            for (std::size_t i = begin; i < end; ++i) {
                const double y = data_.response[rows_[i]];
                sum += y;
                lo = std::min(lo, y);
                hi = std::max(hi, y);
            }
            parent_score = sum * sum / static_cast<double>(n);
            pure = lo == hi;
        }

        Split split;
        if (!pure && n > min_node_size_) split = find_split(begin, end);
        if (!split.found) {
            make_leaf(index, begin, end);
            return index;
        }

        importance_[split.feature] += std::max(0.0, split.score - parent_score);
        const auto column = data_.features.column(split.feature);
        const auto mid = std::partition(rows_.begin() + static_cast<std::ptrdiff_t>(begin),
                                        rows_.begin() + static_cast<std::ptrdiff_t>(end),
                                        [&](std::uint32_t r) { return column[r] <= split.threshold; });
        const auto middle = static_cast<std::size_t>(mid - rows_.begin());

        const std::uint32_t left = grow(begin, middle);
        const std::uint32_t right = grow(middle, end);
        auto& node = tree_.nodes[index];
        node.feature = static_cast<std::int32_t>(split.feature);
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        return index;
    }

    void make_leaf(std::uint32_t index, std::size_t begin, std::size_t end) {
        auto& node = tree_.nodes[index];
        const auto n = static_cast<double>(end - begin);
        if (data_.task == Task::classification) {
            node.distribution = static_cast<std::uint32_t>(tree_.distributions.size());
            for (double c : counts_) tree_.distributions.push_back(c / n);
            node.value = static_cast<double>(argmax_lowest(counts_));
        } else {
            double sum = 0.0;
            for (std::size_t i = begin; i < end; ++i) sum += data_.response[rows_[i]];
            node.value = sum / n;
        }
    }

    Split find_split(std::size_t begin, std::size_t end) {
        const std::size_t p = feature_pool_.size();
        candidates_.clear();
        for (std::size_t k = 0; k < mtry_; ++k) {
            const auto j = k + static_cast<std::size_t>(rng_.below(p - k));
            std::swap(feature_pool_[k], feature_pool_[j]);
            candidates_.push_back(feature_pool_[k]);
        }
        std::sort(candidates_.begin(), candidates_.end());

        Split best;
        const std::size_t n = end - begin;
        for (std::size_t f : candidates_) {
            const auto column = data_.features.column(f);
            sorted_.clear();
            for (std::size_t i = begin; i < end; ++i) sorted_.push_back({column[rows_[i]], rows_[i]});
            std::sort(sorted_.begin(), sorted_.end(), [](const Entry& a, const Entry& b) {
                return a.x < b.x || (a.x == b.x && a.row < b.row);
            });
            if (sorted_.front().x == sorted_.back().x) continue;

            if (data_.task == Task::classification) {
                std::fill(left_counts_.begin(), left_counts_.end(), 0.0);
                double sq_left = 0.0, sq_right = 0.0;
                for (double c : counts_) sq_right += c * c;
                std::vector<double>& right_counts = right_counts_;
                right_counts = counts_;
                for (std::size_t i = 0; i + 1 < n; ++i) {
                    const std::uint32_t k = labels_[sorted_[i].row];
                    sq_left += 2.0 * left_counts_[k] + 1.0;
                    sq_right -= 2.0 * right_counts[k] - 1.0;
                    left_counts_[k] += 1.0;
                    right_counts[k] -= 1.0;
                    if (sorted_[i].x == sorted_[i + 1].x) continue;
                    const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
                    const double score = sq_left / nl + sq_right / nr;
                    if (!best.found || score_beats(score, best.score))
                        best = {f, midpoint(sorted_[i].x, sorted_[i + 1].x), score, true};
                }
            } else {
                double total = 0.0;
                for (const auto& e : sorted_) total += data_.response[e.row];
                double left = 0.0;
                for (std::size_t i = 0; i + 1 < n; ++i) {
                    left += data_.response[sorted_[i].row];
                    if (sorted_[i].x == sorted_[i + 1].x) continue;
                    const double right = total - left;
                    const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
                    const double score = left * left / nl + right * right / nr;
                    if (!best.found || score_beats(score, best.score))
                        best = {f, midpoint(sorted_[i].x, sorted_[i + 1].x), score, true};
                }
            }
        }
        return best;
    }

    static double midpoint(double a, double b) {
        const double m = a + (b - a) / 2.0;
        // Guard against rounding onto the upper value for adjacent doubles.
        return m < b ? m : a;
    }

    struct Entry {
        double x;
        std::uint32_t row;
    };

    const TrainingData& data_;
    std::size_t mtry_;
    std::size_t min_node_size_;
    Rng& rng_;
    std::vector<double>& importance_;

    std::vector<std::uint32_t> rows_;
    std::vector<std::uint32_t> labels_;
    std::vector<std::size_t> feature_pool_;
    std::vector<std::size_t> candidates_;
    std::vector<Entry> sorted_;
    std::vector<double> counts_, left_counts_, right_counts_;
    Tree tree_;
};

}  // namespace detail

/// Bootstrap draw (with replacement) of `n` positions for tree `tree_index`.
/// Training uses exactly this sample, so callers can audit in-bag membership.
inline std::vector<std::uint32_t> bootstrap_sample(std::uint64_t seed, std::size_t tree_index, std::size_t n) {
    Rng rng(derive_seed(seed, tree_index));
    std::vector<std::uint32_t> out(n);
    for (auto& v : out) v = static_cast<std::uint32_t>(rng.below(n));
    return out;
}

/// Trained ensemble. Immutable after training; predict is thread-safe.
class Forest {
public:
    Task task = Task::regression;
    ForestConfig config;
    std::vector<std::string> feature_names;
    std::vector<std::string> class_labels;
    std::vector<Tree> trees;
    std::vector<double> importance;  // scaled so the maximum is 1 (all zero if no splits)
    std::optional<double> oob_score; // accuracy or r2 over rows that were out of bag at least once

    std::size_t n_features() const { return feature_names.size(); }
    std::size_t n_classes() const { return class_labels.size(); }

    /// Majority vote (ties to the lowest class index) or mean of tree outputs.
    double predict(std::span<const double> row) const {
        if (row.size() != n_features())
            throw FeatureMismatchError("row has " + std::to_string(row.size()) + " features, model expects " +
                                       std::to_string(n_features()));
        if (task == Task::classification) {
            std::vector<double> votes(std::max<std::size_t>(n_classes(), 1), 0.0);
            for (const auto& t : trees) votes[static_cast<std::size_t>(t.predict(row))] += 1.0;
            return static_cast<double>(detail::argmax_lowest(votes));
        }
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(row);
        return sum / static_cast<double>(trees.size());
    }

    /// Predictions for the given rows of a feature matrix whose columns match
    /// feature_names.
    std::vector<double> predict(const FeatureMatrix& x, std::span<const std::size_t> rows) const {
        if (x.n_cols != n_features()) throw FeatureMismatchError("feature matrix width does not match the model");
        std::vector<double> out;
        out.reserve(rows.size());
        std::vector<double> buf(x.n_cols);
        for (std::size_t r : rows) {
            for (std::size_t j = 0; j < x.n_cols; ++j) buf[j] = x(r, j);
            out.push_back(predict(buf));
        }
        return out;
    }
};

/// Grows config.n_trees trees on bootstrap samples of `rows` (positions into
/// `data`). Trees are independent given the seed, so `jobs` does not change
/// the result.
inline Forest train(const TrainingData& data, std::span<const std::size_t> rows, const ForestConfig& config,
                    std::vector<std::string> feature_names, std::vector<std::string> class_labels = {},
                    std::size_t jobs = 1) {
    const std::size_t p = data.features.n_cols;
    if (config.n_trees == 0) throw ConfigError("n_trees must be at least 1");
    if (p == 0) throw ArgumentError("training needs at least one feature");
    if (config.mtry < 1 || config.mtry > p)
        throw ConfigError("mtry must lie in [1, " + std::to_string(p) + "], got " + std::to_string(config.mtry));
    if (feature_names.size() != p) throw ArgumentError("feature name count does not match the feature matrix");
    if (rows.size() < 2) throw DegenerateError("training needs at least two rows");
    if (data.task == Task::classification) {
        if (data.n_classes == 0 || class_labels.size() != data.n_classes)
            throw ArgumentError("class labels do not match the class count");
        const double first = data.response[rows.front()];
        bool mixed = false;
        for (std::size_t r : rows) mixed = mixed || data.response[r] != first;
        if (!mixed) throw DegenerateError("classification training data holds a single class");
    }

    // Sub-view over the selected rows so tree indices are 0..n-1.
    FeatureMatrix x{rows.size(), p, {}};
    x.values.resize(rows.size() * p);
    std::vector<double> y(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        y[i] = data.response[rows[i]];
        for (std::size_t j = 0; j < p; ++j) x.values[j * rows.size() + i] = data.features(rows[i], j);
    }
    const TrainingData local{x, y, data.task, data.n_classes};
    const std::size_t min_node = effective_min_node_size(config, data.task);
    const std::size_t n = rows.size();

    Forest forest;
    forest.task = data.task;
    forest.config = config;
    forest.feature_names = std::move(feature_names);
    forest.class_labels = std::move(class_labels);
    forest.trees.resize(config.n_trees);
    std::vector<std::vector<double>> tree_importance(config.n_trees, std::vector<double>(p, 0.0));
    std::vector<std::vector<std::uint32_t>> in_bag(config.n_trees);

    parallel_for(config.n_trees, jobs, [&](std::size_t t) {
        std::vector<std::uint32_t> sample;
        if (config.bootstrap) {
            sample = bootstrap_sample(config.seed, t, n);
        } else {
            sample.resize(n);
            std::iota(sample.begin(), sample.end(), 0u);
        }
        in_bag[t] = sample;
        Rng rng(derive_seed(derive_seed(config.seed, t), 0x5eed));
        detail::TreeBuilder builder(local, config.mtry, min_node, rng, tree_importance[t]);
        forest.trees[t] = builder.build(std::move(sample));
    });

    forest.importance.assign(p, 0.0);
    for (const auto& imp : tree_importance)
        for (std::size_t j = 0; j < p; ++j) forest.importance[j] += imp[j];
    const double top = *std::max_element(forest.importance.begin(), forest.importance.end());
    if (top > 0.0)
        for (double& v : forest.importance) v /= top;

    // Out-of-bag aggregation in tree order.
    const std::size_t n_classes = std::max<std::size_t>(data.n_classes, 1);
    std::vector<double> votes(data.task == Task::classification ? n * n_classes : 0, 0.0);
    std::vector<double> sums(n, 0.0);
    std::vector<std::size_t> counts(n, 0);
    std::vector<char> bagged(n);
    std::vector<double> buf(p);
    for (std::size_t t = 0; t < config.n_trees; ++t) {
        std::fill(bagged.begin(), bagged.end(), 0);
        for (auto r : in_bag[t]) bagged[r] = 1;
        for (std::size_t i = 0; i < n; ++i) {
            if (bagged[i]) continue;
            for (std::size_t j = 0; j < p; ++j) buf[j] = x(i, j);
            const double pred = forest.trees[t].predict(buf);
            ++counts[i];
            if (data.task == Task::classification) votes[i * n_classes + static_cast<std::size_t>(pred)] += 1.0;
            else sums[i] += pred;
        }
    }
    std::vector<double> obs, pred;
    for (std::size_t i = 0; i < n; ++i) {
        if (!counts[i]) continue;
        obs.push_back(y[i]);
        if (data.task == Task::classification)
            pred.push_back(static_cast<double>(detail::argmax_lowest({votes.data() + i * n_classes, n_classes})));
        else
            pred.push_back(sums[i] / static_cast<double>(counts[i]));
    }
    if (!obs.empty())
        forest.oob_score = try_metric(data.task == Task::classification ? Metric::accuracy : Metric::r2, obs, pred,
                                      data.n_classes);
    return forest;
}

inline Forest train(const SampleTable& table, const ForestConfig& config, std::size_t jobs = 1) {
    const auto x = FeatureMatrix::from(table);
    const auto y = table.responses();
    const TrainingData data{x, y, table.task(), table.n_classes()};
    std::vector<std::size_t> rows(table.size());
    std::iota(rows.begin(), rows.end(), 0);
    return train(data, rows, config, table.feature_names(), table.class_labels(), jobs);
}

struct RankedFeature {
    std::string name;
    double importance = 0.0;
};

/// Features by descending importance; equal importances keep feature order.
inline std::vector<RankedFeature> importance_ranking(const Forest& model) {
    std::vector<RankedFeature> out;
    for (std::size_t j = 0; j < model.n_features(); ++j) out.push_back({model.feature_names[j], model.importance[j]});
    std::stable_sort(out.begin(), out.end(),
                     [](const RankedFeature& a, const RankedFeature& b) { return a.importance > b.importance; });
    return out;
}

// ---------------------------------------------------------------------------
// JSON model documents

inline constexpr int kForestFormatVersion = 1;

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, std::uint32_t index) {
    const auto& node = tree.nodes[index];
    if (node.is_leaf()) {
        nlohmann::json leaf{{"value", node.value}};
        if (tree.n_classes) {
            const auto d = tree.distribution(node);
            leaf["distribution"] = std::vector<double>(d.begin(), d.end());
        }
        return leaf;
    }
    return {{"feature", node.feature},
            {"threshold", node.threshold},
            {"left", node_to_json(tree, node.left)},
            {"right", node_to_json(tree, node.right)}};
}

inline std::uint32_t node_from_json(Tree& tree, const nlohmann::json& j, std::size_t n_features) {
    const auto index = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("feature")) {
        const auto feature = j.at("feature").get<std::int32_t>();
        if (feature < 0 || static_cast<std::size_t>(feature) >= n_features)
            throw FormatError("model split references feature " + std::to_string(feature));
        const double threshold = j.at("threshold").get<double>();
        const auto left = node_from_json(tree, j.at("left"), n_features);
        const auto right = node_from_json(tree, j.at("right"), n_features);
        auto& node = tree.nodes[index];
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
    } else {
        auto& node = tree.nodes[index];
        node.value = j.at("value").get<double>();
        if (tree.n_classes) {
            const auto d = j.at("distribution").get<std::vector<double>>();
            if (d.size() != tree.n_classes) throw FormatError("leaf distribution has the wrong length");
            node.distribution = static_cast<std::uint32_t>(tree.distributions.size());
            tree.distributions.insert(tree.distributions.end(), d.begin(), d.end());
        }
    }
    return index;
}

}  // namespace detail

inline nlohmann::json to_json(const Forest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : forest.trees) trees.push_back(detail::node_to_json(t, 0));
    return {{"format", "spatialcv-forest"},
            {"version", kForestFormatVersion},
            {"task", to_string(forest.task)},
            {"config",
             {{"n_trees", forest.config.n_trees},
              {"mtry", forest.config.mtry},
              {"min_node_size", effective_min_node_size(forest.config, forest.task)},
              {"seed", forest.config.seed},
              {"bootstrap", forest.config.bootstrap}}},
            {"feature_names", forest.feature_names},
            {"class_labels", forest.class_labels},
            {"oob_score", forest.oob_score ? nlohmann::json(*forest.oob_score) : nlohmann::json(nullptr)},
            {"importance", forest.importance},
            {"trees", std::move(trees)}};
}

inline Forest forest_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "spatialcv-forest") throw FormatError("not a spatialcv forest document");
        if (j.at("version").get<int>() != kForestFormatVersion)
            throw FormatError("unsupported forest format version " + std::to_string(j.at("version").get<int>()));
        Forest f;
        f.task = parse_task(j.at("task").get<std::string>());
        const auto& c = j.at("config");
        f.config.n_trees = c.at("n_trees").get<std::size_t>();
        f.config.mtry = c.at("mtry").get<std::size_t>();
        f.config.min_node_size = c.at("min_node_size").get<std::size_t>();
        f.config.seed = c.at("seed").get<std::uint64_t>();
        f.config.bootstrap = c.value("bootstrap", true);
        f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        f.class_labels = j.at("class_labels").get<std::vector<std::string>>();
        if (!j.at("oob_score").is_null()) f.oob_score = j.at("oob_score").get<double>();
        f.importance = j.at("importance").get<std::vector<double>>();
        if (f.importance.size() != f.feature_names.size()) throw FormatError("importance length mismatch");
        for (const auto& tj : j.at("trees")) {
            Tree t;
            t.n_classes = f.task == Task::classification ? f.class_labels.size() : 0;
            detail::node_from_json(t, tj, f.feature_names.size());
            f.trees.push_back(std::move(t));
        }
        if (f.trees.empty()) throw FormatError("model holds no trees");
        return f;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed model document: ") + e.what());
    }
}

inline void write_forest(const Forest& forest, const std::filesystem::path& path) {
    write_text_file(path, to_json(forest).dump(1) + "\n");
}

inline Forest read_forest(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return forest_from_json(j);
}

}  // namespace spatialcv
