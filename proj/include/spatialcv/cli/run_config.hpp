#pragma once

// Run manifests: "key = value" lines grouped under [section] headers.
// Command-line overrides use the same "section.key" names and win over the
// file.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "spatialcv/cv_engine.hpp"
#include "spatialcv/error.hpp"
#include "spatialcv/folds.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/metrics.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/synthgen.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv::cli {

using Settings = std::map<std::string, std::string>;

/// Flattens a sectioned manifest into "section.key" entries. Keys before the
/// first header belong to no section.
inline Settings parse_manifest(std::string_view text) {
    Settings out;
    std::string section;
    std::size_t line_no = 0, start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("manifest line " + std::to_string(line_no) + ": unterminated section");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("manifest line " + std::to_string(line_no) + ": expected 'key = value'");
        const auto key = std::string(trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError("manifest line " + std::to_string(line_no) + ": empty key");
        out[section.empty() ? key : section + "." + key] = std::string(trim(line.substr(eq + 1)));
    }
    return out;
}

/// Applies "section.key=value" overrides.
inline void apply_overrides(Settings& settings, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
        settings[std::string(trim(std::string_view(o).substr(0, eq)))] = std::string(trim(std::string_view(o).substr(eq + 1)));
    }
}

namespace detail {

class Reader {
public:
    explicit Reader(const Settings& s) : s_(s) {}

    std::optional<std::string> text(const std::string& key) {
        used_.insert(key);
        const auto it = s_.find(key);
        if (it == s_.end() || it->second.empty()) return std::nullopt;
        return it->second;
    }
    std::string text(const std::string& key, const std::string& fallback) { return text(key).value_or(fallback); }

    template <typename T>
    T integer(const std::string& key, T fallback) {
        const auto v = text(key);
        if (!v) return fallback;
        const auto n = parse_integer(*v);
        if (!n || *n < 0) throw ConfigError(key + " must be a non-negative integer, got '" + *v + "'");
        return static_cast<T>(*n);
    }

    double real(const std::string& key, double fallback) {
        const auto v = text(key);
        if (!v) return fallback;
        const auto d = parse_double(*v);
        if (!d) throw ConfigError(key + " must be a number, got '" + *v + "'");
        return *d;
    }

    bool flag(const std::string& key, bool fallback) {
        const auto v = text(key);
        if (!v) return fallback;
        const auto l = to_lower(*v);
        if (l == "true" || l == "yes" || l == "1") return true;
        if (l == "false" || l == "no" || l == "0") return false;
        throw ConfigError(key + " must be true or false, got '" + *v + "'");
    }

    template <typename T>
    std::vector<T> list(const std::string& key) {
        std::vector<T> out;
        const auto v = text(key);
        if (!v) return out;
        std::string_view rest = *v;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto item = trim(rest.substr(0, comma));
            if constexpr (std::is_floating_point_v<T>) {
                const auto d = parse_double(item);
                if (!d) throw ConfigError(key + ": '" + std::string(item) + "' is not a number");
                out.push_back(*d);
            } else {
                const auto n = parse_integer(item);
                if (!n || *n < 0) throw ConfigError(key + ": '" + std::string(item) + "' is not a non-negative integer");
                out.push_back(static_cast<T>(*n));
            }
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        return out;
    }

    /// Rejects keys nobody asked for, which are almost always typos.
    void reject_unknown() const {
        for (const auto& [k, v] : s_)
            if (!used_.count(k)) throw ConfigError("unknown setting '" + k + "'");
    }

private:
    const Settings& s_;
    std::set<std::string> used_;
};

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() ? base / path : path;
}

}  // namespace detail

enum class SelectionChoice { none, ffs, rfe };

inline SelectionChoice parse_selection(std::string_view s) {
    if (s == "none") return SelectionChoice::none;
    if (s == "ffs") return SelectionChoice::ffs;
    if (s == "rfe") return SelectionChoice::rfe;
    throw ConfigError("unknown selection strategy '" + std::string(s) + "' (expected none, ffs or rfe)");
}

struct FoldSettings {
    FoldStrategy strategy = FoldStrategy::cluster;
    std::size_t k = 0;  // random folds; 0 means "as many folds as groups"
    std::size_t block_cols = 5;
    std::size_t block_rows = 4;
    std::uint64_t seed = 1;
};

struct RunConfig {
    Task task = Task::regression;
    std::filesystem::path samples;
    std::optional<std::filesystem::path> stack;
    CsvSchema schema;
    FoldSettings folds;
    FoldSettings selection_folds;
    SelectionChoice selection = SelectionChoice::none;
    Metric objective = Metric::rmse;
    std::optional<TuneGrid> grid;  // empty: default grid for the feature count
    ForestConfig forest{500, 2, 0, 1, true};
    double epsilon = 1e-6;
    std::vector<std::size_t> rfe_sizes;
    std::filesystem::path output_dir = "out";
    bool timing = false;
    std::size_t jobs = 1;
};

/// Builds a RunConfig. Relative paths resolve against `base_dir` (the
/// manifest's directory).
inline RunConfig make_run_config(const Settings& settings, const std::filesystem::path& base_dir) {
    detail::Reader r(settings);
    RunConfig c;
    c.task = parse_task(r.text("data.task", "regression"));
    const auto samples = r.text("data.samples");
    if (!samples) throw ConfigError("data.samples is required");
    c.samples = detail::resolve(base_dir, *samples);
    if (const auto stack = r.text("data.stack")) c.stack = detail::resolve(base_dir, *stack);
    c.schema.id = r.text("data.id_column", "id");
    c.schema.group = r.text("data.group_column", "group");
    c.schema.x = r.text("data.x_column", "x");
    c.schema.y = r.text("data.y_column", "y");
    c.schema.response = r.text("data.response_column", "response");

    c.folds.strategy = parse_fold_strategy(r.text("cv.folds", "cluster"));
    c.folds.k = r.integer<std::size_t>("cv.k", 0);
    c.folds.block_cols = r.integer<std::size_t>("cv.block_cols", 5);
    c.folds.block_rows = r.integer<std::size_t>("cv.block_rows", 4);
    c.folds.seed = r.integer<std::uint64_t>("cv.seed", 1);
    c.objective = parse_metric(r.text("cv.objective", std::string(to_string(default_objective(c.task)))));
    if (const auto m = r.text("cv.mtry"); m && *m != "default") {
        c.grid = TuneGrid{r.list<std::size_t>("cv.mtry")};
    }

    c.forest.n_trees = r.integer<std::size_t>("forest.n_trees", 500);
    c.forest.min_node_size = r.integer<std::size_t>("forest.min_node_size", 0);
    c.forest.seed = r.integer<std::uint64_t>("forest.seed", 1);
    c.forest.bootstrap = r.flag("forest.bootstrap", true);

    c.selection = parse_selection(r.text("selection.method", "none"));
    c.selection_folds = c.folds;
    if (const auto s = r.text("selection.folds")) c.selection_folds.strategy = parse_fold_strategy(*s);
    c.epsilon = r.real("selection.epsilon", 1e-6);
    c.rfe_sizes = r.list<std::size_t>("selection.rfe_sizes");
    c.forest.mtry = r.integer<std::size_t>("selection.mtry", 2);

    c.output_dir = detail::resolve(base_dir, r.text("output.dir", "out"));
    c.timing = r.flag("output.timing", false);
    c.jobs = r.integer<std::size_t>("run.jobs", 1);
    if (c.jobs == 0) throw ConfigError("run.jobs must be at least 1");
    r.reject_unknown();
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& manifest, const std::vector<std::string>& overrides) {
    if (!std::filesystem::exists(manifest)) throw IoError("manifest " + manifest.string() + " does not exist");
    auto settings = parse_manifest(read_text_file(manifest));
    apply_overrides(settings, overrides);
    return make_run_config(settings, manifest.parent_path());
}

/// Benchmark spec from a "key = value" file (sections optional and ignored).
inline BenchmarkSpec make_benchmark_spec(const Settings& settings) {
    Settings flat;
    for (const auto& [k, v] : settings) {
        const auto dot = k.rfind('.');
        flat[dot == std::string::npos ? k : k.substr(dot + 1)] = v;
    }
    detail::Reader r(flat);
    BenchmarkSpec s;
    s.task = parse_task(r.text("task", "regression"));
    s.seed = r.integer<std::uint64_t>("seed", s.seed);
    s.ncols = r.integer<std::size_t>("ncols", s.ncols);
    s.nrows = r.integer<std::size_t>("nrows", s.nrows);
    s.cell_size = r.real("cell_size", s.cell_size);
    s.n_signal = r.integer<std::size_t>("n_signal", s.n_signal);
    s.n_distractor = r.integer<std::size_t>("n_distractor", s.n_distractor);
    s.field_range = r.real("field_range", s.field_range);
    if (auto w = r.list<double>("signal_weights"); !w.empty()) s.signal_weights = std::move(w);
    else if (s.signal_weights.size() != s.n_signal) s.signal_weights.assign(s.n_signal, 1.0);
    s.interaction_weight = r.real("interaction_weight", s.interaction_weight);
    s.noise_fraction = r.real("noise_fraction", s.noise_fraction);
    s.noise_range = r.real("noise_range", s.noise_range);
    s.n_classes = r.integer<std::size_t>("n_classes", s.n_classes);
    s.design.n_clusters = r.integer<std::size_t>("n_clusters", s.design.n_clusters);
    s.design.cluster_radius = r.real("cluster_radius", s.design.cluster_radius);
    s.design.samples_per_cluster = r.integer<std::size_t>("samples_per_cluster", s.design.samples_per_cluster);
    s.design.seed = r.integer<std::uint64_t>("design_seed", s.design.seed);
    r.reject_unknown();
    return s;
}

}  // namespace spatialcv::cli
