// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "spatialcv/spatialcv.hpp"

using namespace spatialcv;

namespace {

// Tolerances and run sizes.
constexpr double kExact = 1e-12;
constexpr double kOracleTie = 1e-9;
constexpr std::size_t kGapTrees = 100;
constexpr std::size_t kSelectionTrees = 50;
constexpr std::size_t kImportanceTrees = 100;
constexpr std::uint64_t kShippedSeed = 2019;
constexpr int kRuns = 10;

int failures = 0;

void report(int id, bool ok, const std::string& what) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", id, what.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(double v) { return format_double(v); }

bool has_coordinate(const std::vector<std::string>& features) {
    return std::any_of(features.begin(), features.end(),
                       [](const std::string& f) { return f == "coord_x" || f == "coord_y"; });
}

Benchmark benchmark(std::uint64_t seed, Task task = Task::regression) {
    BenchmarkSpec spec;
    spec.seed = seed;
    spec.task = task;
    return make_benchmark(spec);
}

// ---------------------------------------------------------------------------
// 1. Metric oracles

void metric_oracles() {
    // Confusion matrix [[20,5],[10,15]] as observed/predicted pairs.
    std::vector<double> obs, pred;
    auto add = [&](double o, double p, int n) {
        for (int i = 0; i < n; ++i) obs.push_back(o), pred.push_back(p);
    };
    add(0, 0, 20);
    add(0, 1, 5);
    add(1, 0, 10);
    add(1, 1, 15);
    const double kappa = compute_metric(Metric::kappa, obs, pred, 2);
    const double acc = compute_metric(Metric::accuracy, obs, pred, 2);
    const double rmse = compute_metric(Metric::rmse, std::vector<double>{1, 2, 3}, std::vector<double>{2, 2, 2});
    const double r2 = compute_metric(Metric::r2, std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 2, 4, 3});
    const bool ok = std::abs(kappa - 0.4) <= kExact && std::abs(acc - 0.7) <= kExact &&
                    std::abs(rmse - std::sqrt(2.0 / 3.0)) <= kExact && std::abs(r2 - 0.64) <= kExact;
    report(1, ok, "kappa=" + fmt(kappa) + " accuracy=" + fmt(acc) + " rmse=" + fmt(rmse) + " r2=" + fmt(r2));
}

// ---------------------------------------------------------------------------
// 2. Single tree against an exhaustive CART

struct OracleNode {
    bool leaf = true;
    std::size_t feature = 0;
    double threshold = 0;
    double value = 0;
    std::unique_ptr<OracleNode> left, right;
};

double impurity(const std::vector<double>& y, const std::vector<std::size_t>& rows, bool classification) {
    const auto n = static_cast<double>(rows.size());
    if (classification) {
        std::map<double, double> counts;
        for (auto r : rows) counts[y[r]] += 1;
        double g = 1.0;
        for (const auto& [c, k] : counts) g -= (k / n) * (k / n);
        return g * n;
    }
    double m = 0;
    for (auto r : rows) m += y[r];
    m /= n;
    double sse = 0;
    for (auto r : rows) sse += (y[r] - m) * (y[r] - m);
    return sse;
}

std::unique_ptr<OracleNode> oracle_grow(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
                                        const std::vector<std::size_t>& rows, bool classification) {
    auto node = std::make_unique<OracleNode>();
    if (classification) {
        std::map<double, int> counts;
        for (auto r : rows) counts[y[r]]++;
        int best = -1;
        for (const auto& [c, k] : counts)
            if (k > best) best = k, node->value = c;
    } else {
        double m = 0;
        for (auto r : rows) m += y[r];
        node->value = m / static_cast<double>(rows.size());
    }
    const bool pure = std::all_of(rows.begin(), rows.end(), [&](std::size_t r) { return y[r] == y[rows[0]]; });
    if (pure || rows.size() <= 1) return node;

    const double parent = impurity(y, rows, classification);
    std::optional<double> best_gain;
    std::size_t best_f = 0;
    double best_t = 0;
    for (std::size_t f = 0; f < x[0].size(); ++f) {
        std::vector<double> vals;
        for (auto r : rows) vals.push_back(x[r][f]);
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            const double t = (vals[i] + vals[i + 1]) / 2;
            std::vector<std::size_t> l, r;
            for (auto row : rows) (x[row][f] <= t ? l : r).push_back(row);
            const double gain = parent - impurity(y, l, classification) - impurity(y, r, classification);
            if (!best_gain || gain > *best_gain + kOracleTie * std::max(1.0, std::abs(*best_gain)))
                best_gain = gain, best_f = f, best_t = t;
        }
    }
    if (!best_gain) return node;
    std::vector<std::size_t> l, r;
    for (auto row : rows) (x[row][best_f] <= best_t ? l : r).push_back(row);
    node->leaf = false;
    node->feature = best_f;
    node->threshold = best_t;
    node->left = oracle_grow(x, y, l, classification);
    node->right = oracle_grow(x, y, r, classification);
    return node;
}

double oracle_predict(const OracleNode& n, const std::vector<double>& row) {
    if (n.leaf) return n.value;
    return oracle_predict(row[n.feature] <= n.threshold ? *n.left : *n.right, row);
}

void cart_oracle() {
    Rng rng(77);
    int tables = 0, agree = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const bool classification = trial % 2 == 0;
        const std::size_t p = 2 + rng.below(3);
        std::vector<std::vector<double>> x(8, std::vector<double>(p));
        std::vector<double> y(8);
        std::vector<SampleRow> rows;
        std::vector<std::string> names;
        for (std::size_t j = 0; j < p; ++j) names.push_back("f" + std::to_string(j));
        for (std::size_t i = 0; i < 8; ++i) {
            for (auto& v : x[i]) v = static_cast<double>(rng.below(5));
            y[i] = classification ? static_cast<double>(rng.below(3)) : std::round(rng.normal() * 100) / 10;
            rows.push_back({static_cast<std::int64_t>(i + 1), GroupId{0}, 0, 0, x[i], y[i]});
        }
        const auto table = classification
                               ? SampleTable(Task::classification, names, rows, {"a", "b", "c"})
                               : SampleTable(Task::regression, names, rows);
        const auto model = train(table, ForestConfig{1, p, 1, 5, false});
        std::vector<std::size_t> all(8);
        std::iota(all.begin(), all.end(), 0);
        const auto oracle = oracle_grow(x, y, all, classification);
        bool same = true;
        for (std::size_t i = 0; i < 8; ++i) same = same && model.predict(x[i]) == oracle_predict(*oracle, x[i]);
        ++tables;
        agree += same;
    }
    report(2, agree == tables && tables >= 20,
           std::to_string(agree) + "/" + std::to_string(tables) + " random 8-row tables match brute-force CART");
}

// ---------------------------------------------------------------------------
// 3. Random vs cluster CV gap

double objective_for(const SampleTable& t, const FoldPlan& plan, Metric m, std::uint64_t seed) {
    const auto r = cross_validate(t, plan, ForestConfig{kGapTrees, 2, 0, seed}, default_mtry_grid(t.n_features()), m);
    return r.objective_value();
}

void cv_gap() {
    const auto reg = benchmark(kShippedSeed);
    const auto reg_cluster = cluster_folds(reg.table);
    const double rmse_cluster = objective_for(reg.table, reg_cluster, Metric::rmse, kShippedSeed);
    const double rmse_random =
        objective_for(reg.table, random_folds(reg.table, reg_cluster.k, kShippedSeed), Metric::rmse, kShippedSeed);

    const auto cls = benchmark(kShippedSeed, Task::classification);
    const auto cls_cluster = cluster_folds(cls.table);
    const double kappa_cluster = objective_for(cls.table, cls_cluster, Metric::kappa, kShippedSeed);
    const double kappa_random =
        objective_for(cls.table, random_folds(cls.table, cls_cluster.k, kShippedSeed), Metric::kappa, kShippedSeed);

    report(3, rmse_random <= 0.75 * rmse_cluster && kappa_random - kappa_cluster >= 0.2,
           "rmse random=" + fmt(rmse_random) + " cluster=" + fmt(rmse_cluster) + "; kappa random=" + fmt(kappa_random) +
               " cluster=" + fmt(kappa_cluster));
}

// ---------------------------------------------------------------------------
// 4. Location proxies dominate importance

void spurious_importance() {
    int hits = 0;
    std::string detail;
    for (int s = 1; s <= kRuns; ++s) {
        const auto b = benchmark(static_cast<std::uint64_t>(s));
        const auto model = train(b.table, ForestConfig{kImportanceTrees, 2, 0, static_cast<std::uint64_t>(s)});
        const auto ranking = importance_ranking(model);
        bool hit = false;
        for (std::size_t i = 0; i < 3 && i < ranking.size(); ++i) {
            const auto& n = ranking[i].name;
            hit = hit || n == "coord_x" || n == "coord_y" || n == kElevationBand;
        }
        hits += hit;
    }
    report(4, hits >= 8, std::to_string(hits) + "/10 runs rank a coordinate or elevation in the top 3");
}

// ---------------------------------------------------------------------------
// 5. and 6. Selection under cluster folds

void selection_runs() {
    int ffs_excluded = 0, ffs_random_included = 0, rfe_retained = 0;
    for (int s = 1; s <= kRuns; ++s) {
        const auto seed = static_cast<std::uint64_t>(s);
        const auto b = benchmark(seed);
        const ForestConfig cfg{kSelectionTrees, 2, 0, seed};
        const auto cluster = cluster_folds(b.table);
        const auto random = random_folds(b.table, cluster.k, seed);
        const auto ffs_c = forward_feature_selection(b.table, cluster, cfg, Metric::rmse);
        const auto ffs_r = forward_feature_selection(b.table, random, cfg, Metric::rmse);
        const auto rfe_c = recursive_feature_elimination(b.table, cluster, cfg, Metric::rmse, {});
        ffs_excluded += !has_coordinate(ffs_c.final_features);
        ffs_random_included += has_coordinate(ffs_r.final_features);
        rfe_retained += has_coordinate(rfe_c.final_features);
        std::printf("  seed %d: ffs cluster [%s] ffs random [%s] rfe cluster [%s]\n", s,
                    join(ffs_c.final_features, ",").c_str(), join(ffs_r.final_features, ",").c_str(),
                    join(rfe_c.final_features, ",").c_str());
        std::fflush(stdout);
    }
    report(5, ffs_excluded >= 9 && ffs_random_included >= 6,
           "cluster FFS excludes coordinates in " + std::to_string(ffs_excluded) + "/10, random FFS includes one in " +
               std::to_string(ffs_random_included) + "/10");
    report(6, rfe_retained >= 7, "cluster RFE retains a coordinate in " + std::to_string(rfe_retained) + "/10");
}

// ---------------------------------------------------------------------------
// 7. and 8. Shipped seed: selection benefit and prediction artefacts

double midline_jump(const RasterGrid& g) {
    auto stat = [&](std::size_t c) {
        double s = 0;
        for (std::size_t r = 0; r < g.nrows(); ++r) s += std::abs(g(r, c) - g(r, c - 1));
        return s / static_cast<double>(g.nrows());
    };
    const std::size_t mid = g.ncols() / 2;
    return stat(mid) - stat(mid - 1);
}

void shipped_seed() {
    const auto b = benchmark(kShippedSeed);
    const ForestConfig cfg{kGapTrees, 2, 0, kShippedSeed};
    const auto cluster = cluster_folds(b.table);
    const auto all = cross_validate(b.table, cluster, cfg, default_mtry_grid(b.table.n_features()), Metric::rmse);
    const auto trace = forward_feature_selection(b.table, cluster,
                                                 ForestConfig{kSelectionTrees, 2, 0, kShippedSeed}, Metric::rmse);
    const auto refit = refit_selected(b.table, trace, cluster, cfg);
    report(7, refit.objective_value() <= all.objective_value(),
           "cluster rmse selected [" + join(trace.final_features, ",") + "]=" + fmt(refit.objective_value()) +
               " all features=" + fmt(all.objective_value()));

    const auto with_coords = train(b.table, all.config);
    const auto selected = train(b.table.select_features(trace.final_features), refit.config);
    const double j_coords = midline_jump(predict_surface(with_coords, b.stack));
    const double j_selected = midline_jump(predict_surface(selected, b.stack));
    report(8, j_coords > j_selected, "J with coordinates=" + fmt(j_coords) + " spatial FFS=" + fmt(j_selected));
}

// ---------------------------------------------------------------------------
// 9. Leakage and determinism

void invariants() {
    Rng rng(9);
    int broken = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t groups = 2 + rng.below(10);
        const std::size_t n = groups + rng.below(50);
        std::vector<SampleRow> rows;
        for (std::size_t i = 0; i < n; ++i) {
            const auto g = static_cast<std::int64_t>(i < groups ? i : rng.below(groups));
            rows.push_back({static_cast<std::int64_t>(i + 1), GroupId{g * 3}, static_cast<double>(g) * 10 + rng.uniform(0, 3),
                            rng.uniform(0, 30), {0.0}, 0.0});
        }
        const SampleTable t(Task::regression, {"f"}, rows);
        std::vector<FoldPlan> plans{cluster_folds(t)};
        try {
            plans.push_back(spatial_block_folds(t, 1 + rng.below(4), 1 + rng.below(4)));
        } catch (const DegenerateError&) {
        }
        for (const auto& plan : plans) {
            std::map<std::int64_t, std::size_t> fold_of;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const auto [it, fresh] = fold_of.emplace(t.row(i).group.value, plan.assignment[i]);
                if (!fresh && it->second != plan.assignment[i]) ++broken;
            }
            for (std::size_t f = 0; f < plan.k; ++f)
                if (plan.members(f).empty()) ++broken;
        }
    }

    BenchmarkSpec spec;
    spec.ncols = spec.nrows = 96;
    spec.design = DesignSpec{6, 4.0, 25, 0};
    const auto b = make_benchmark(spec);
    const ForestConfig cfg{20, 2, 0, 4};
    const auto plan = cluster_folds(b.table);
    const auto grid = default_mtry_grid(b.table.n_features());
    const bool forest_same = to_json(train(b.table, cfg, 1)).dump() == to_json(train(b.table, cfg, 8)).dump();
    const bool cv_same = to_json(cross_validate(b.table, plan, cfg, grid, Metric::rmse, 1)).dump() ==
                         to_json(cross_validate(b.table, plan, cfg, grid, Metric::rmse, 8)).dump();
    SelectionOptions one, eight;
    eight.jobs = 8;
    const bool ffs_same = to_json(forward_feature_selection(b.table, plan, cfg, Metric::rmse, one)).dump() ==
                          to_json(forward_feature_selection(b.table, plan, cfg, Metric::rmse, eight)).dump();
    const auto model = train(b.table, cfg);
    const auto s1 = predict_surface(model, b.stack, 1), s8 = predict_surface(model, b.stack, 8);
    bool surface_same = true;
    for (std::size_t i = 0; i < s1.geometry().cell_count(); ++i) surface_same = surface_same && s1.at(i) == s8.at(i);

    report(9, broken == 0 && forest_same && cv_same && ffs_same && surface_same,
           "group integrity violations=" + std::to_string(broken) + " over 1000 tables; jobs 1 vs 8 identical: forest=" +
               std::to_string(forest_same) + " cv=" + std::to_string(cv_same) + " ffs=" + std::to_string(ffs_same) +
               " surface=" + std::to_string(surface_same));
}

// ---------------------------------------------------------------------------
// 10. Per-fold mean vs pooled

void per_fold_vs_global() {
    const std::vector<FoldPredictions> folds{{0, {0, 0}, {1, 1}}, {1, {0, 0}, {3, 3}}};
    const double by_fold = per_fold_mean(Metric::rmse, folds).value;
    const double pooled = global_metric(Metric::rmse, folds).value;
    report(10, std::abs(by_fold - 2.0) <= kExact && std::abs(pooled - std::sqrt(5.0)) <= kExact,
           "per-fold rmse=" + fmt(by_fold) + " global rmse=" + fmt(pooled));
}

}  // namespace

int main() {
    const std::vector<std::function<void()>> checks{metric_oracles,    cart_oracle,  cv_gap,     spurious_importance,
                                                    selection_runs,    shipped_seed, invariants, per_fold_vs_global};
    for (const auto& check : checks) {
        try {
            check();
        } catch (const std::exception& e) {
            std::printf("FAIL check aborted: %s\n", e.what());
            ++failures;
        }
    }
    return failures == 0 ? 0 : 1;
}
