#pragma once

// Fold plans for random k-fold, spatial block and leave-one-cluster-out
// cross-validation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spatialcv/error.hpp"
#include "spatialcv/random.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

enum class FoldStrategy { random, spatial_block, cluster };

inline std::string_view to_string(FoldStrategy s) {
    switch (s) {
        case FoldStrategy::random: return "random";
        case FoldStrategy::spatial_block: return "spatial_block";
        case FoldStrategy::cluster: return "cluster";
    }
    return "?";
}

inline FoldStrategy parse_fold_strategy(std::string_view s) {
    if (s == "random") return FoldStrategy::random;
    if (s == "spatial_block" || s == "block") return FoldStrategy::spatial_block;
    if (s == "cluster") return FoldStrategy::cluster;
    throw ConfigError("unknown fold strategy '" + std::string(s) + "' (expected random, block or cluster)");
}

struct BlockGeometry {
    double x_origin = 0.0;  // west edge of the sample bounding box
    double y_origin = 0.0;  // north edge
    double block_width = 0.0;
    double block_height = 0.0;
    std::size_t columns = 0;
    std::size_t rows = 0;
};

/// Assignment of every table row (by position) to one of k folds.
struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> assignment;
    FoldStrategy strategy = FoldStrategy::random;
    std::optional<BlockGeometry> block_geometry;

    std::vector<std::size_t> fold_sizes() const {
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t f : assignment) ++sizes[f];
        return sizes;
    }

    std::vector<std::size_t> members(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] == fold) out.push_back(i);
        return out;
    }

    std::vector<std::size_t> complement(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignment.size(); ++i)
            if (assignment[i] != fold) out.push_back(i);
        return out;
    }
};

/// Checks that `plan` covers `table` with k >= 2 non-empty folds.
inline void validate_plan(const SampleTable& table, const FoldPlan& plan) {
    if (plan.k < 2) throw ArgumentError("a fold plan needs at least two folds");
    if (plan.assignment.size() != table.size())
        throw ArgumentError("fold plan covers " + std::to_string(plan.assignment.size()) + " samples, table has " +
                            std::to_string(table.size()));
    for (std::size_t f : plan.assignment)
        if (f >= plan.k) throw ArgumentError("fold index out of range");
    const auto sizes = plan.fold_sizes();
    for (std::size_t f = 0; f < sizes.size(); ++f)
        if (sizes[f] == 0) throw ArgumentError("fold " + std::to_string(f) + " is empty");
}

/// Random permutation of the rows (taken in ascending id order) cut into k
/// contiguous parts; the first n mod k parts get one extra sample.
inline FoldPlan random_folds(const SampleTable& table, std::size_t k, std::uint64_t seed) {
    const std::size_t n = table.size();
    if (k < 2 || k > n)
        throw ArgumentError("random folds need 2 <= k <= n (k=" + std::to_string(k) + ", n=" + std::to_string(n) + ")");
    std::vector<std::size_t> by_id(n);
    std::iota(by_id.begin(), by_id.end(), 0);
    std::sort(by_id.begin(), by_id.end(), [&](std::size_t a, std::size_t b) { return table.row(a).id < table.row(b).id; });
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(by_id));

    FoldPlan plan{k, std::vector<std::size_t>(n, 0), FoldStrategy::random, std::nullopt};
    const std::size_t base = n / k, extra = n % k;
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = base + (f < extra ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) plan.assignment[by_id[pos++]] = f;
    }
    return plan;
}

/// Partitions the sample bounding box into columns x rows equal blocks
/// (numbered row-major from the north-west corner). Each group goes to the
/// block holding most of its samples, ties to the lower block index; empty
/// blocks are dropped and the remaining ones renumbered in block order.
inline FoldPlan spatial_block_folds(const SampleTable& table, std::size_t n_block_cols, std::size_t n_block_rows) {
    if (n_block_cols == 0 || n_block_rows == 0) throw ArgumentError("block grid needs at least one column and row");
    if (table.empty()) throw ArgumentError("cannot block an empty table");
    double x0 = table.row(0).x, x1 = x0, y0 = table.row(0).y, y1 = y0;
    for (const auto& r : table.rows()) {
        x0 = std::min(x0, r.x);
        x1 = std::max(x1, r.x);
        y0 = std::min(y0, r.y);
        y1 = std::max(y1, r.y);
    }
    BlockGeometry geom{x0, y1, (x1 - x0) / static_cast<double>(n_block_cols),
                       (y1 - y0) / static_cast<double>(n_block_rows), n_block_cols, n_block_rows};

    auto block_of = [&](const SampleRow& r) {
        std::size_t col = 0, row = 0;
        if (geom.block_width > 0.0)
            col = std::min(n_block_cols - 1, static_cast<std::size_t>(std::floor((r.x - x0) / geom.block_width)));
        if (geom.block_height > 0.0)
            row = std::min(n_block_rows - 1, static_cast<std::size_t>(std::floor((y1 - r.y) / geom.block_height)));
        return row * n_block_cols + col;
    };

    std::map<GroupId, std::map<std::size_t, std::size_t>> votes;
    for (const auto& r : table.rows()) ++votes[r.group][block_of(r)];
    std::map<GroupId, std::size_t> group_block;
    for (const auto& [group, counts] : votes) {
        std::size_t best_block = 0, best_count = 0;
        for (const auto& [block, count] : counts) {
            if (count > best_count) {
                best_block = block;
                best_count = count;
            }
        }
        group_block[group] = best_block;
    }

    std::vector<std::size_t> used;
    for (const auto& [group, block] : group_block) used.push_back(block);
    std::sort(used.begin(), used.end());
    used.erase(std::unique(used.begin(), used.end()), used.end());
    if (used.size() < 2)
        throw DegenerateError("spatial blocking produced " + std::to_string(used.size()) +
                              " non-empty block(s); at least two are required");

    FoldPlan plan{used.size(), {}, FoldStrategy::spatial_block, geom};
    plan.assignment.reserve(table.size());
    for (const auto& r : table.rows()) {
        const std::size_t block = group_block.at(r.group);
        plan.assignment.push_back(
            static_cast<std::size_t>(std::lower_bound(used.begin(), used.end(), block) - used.begin()));
    }
    return plan;
}

/// One fold per group; fold index is the dense rank of the group id.
inline FoldPlan cluster_folds(const SampleTable& table) {
    std::vector<GroupId> groups;
    for (const auto& r : table.rows()) groups.push_back(r.group);
    std::sort(groups.begin(), groups.end());
    groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    if (groups.size() < 2) throw ArgumentError("leave-one-cluster-out needs at least two groups");
    FoldPlan plan{groups.size(), {}, FoldStrategy::cluster, std::nullopt};
    plan.assignment.reserve(table.size());
    for (const auto& r : table.rows())
        plan.assignment.push_back(
            static_cast<std::size_t>(std::lower_bound(groups.begin(), groups.end(), r.group) - groups.begin()));
    return plan;
}

inline std::string format_fold_plan_csv(const SampleTable& table, const FoldPlan& plan) {
    std::string out = "id,fold\n";
    for (std::size_t i = 0; i < table.size(); ++i)
        out += std::to_string(table.row(i).id) + ',' + std::to_string(plan.assignment.at(i)) + '\n';
    return out;
}

inline void write_fold_plan_csv(const SampleTable& table, const FoldPlan& plan, const std::filesystem::path& path) {
    write_text_file(path, format_fold_plan_csv(table, plan));
}

}  // namespace spatialcv
