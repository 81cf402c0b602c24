#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spatialcv/error.hpp"

namespace spatialcv {

enum class Metric { accuracy, kappa, rmse, r2 };
enum class MetricScope { per_fold_mean, global };

inline std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::accuracy: return "accuracy";
        case Metric::kappa: return "kappa";
        case Metric::rmse: return "rmse";
        case Metric::r2: return "r2";
    }
    return "?";
}

inline std::string_view to_string(MetricScope s) { return s == MetricScope::global ? "global" : "per_fold_mean"; }

inline Metric parse_metric(std::string_view s) {
    if (s == "accuracy") return Metric::accuracy;
    if (s == "kappa") return Metric::kappa;
    if (s == "rmse") return Metric::rmse;
    if (s == "r2") return Metric::r2;
    throw ConfigError("unknown metric '" + std::string(s) + "'");
}

inline bool is_classification_metric(Metric m) { return m == Metric::accuracy || m == Metric::kappa; }

/// True when larger values of `m` are better.
inline bool higher_is_better(Metric m) { return m != Metric::rmse; }

/// True when `candidate` beats `incumbent` by more than `epsilon`.
inline bool improves(Metric m, double candidate, double incumbent, double epsilon = 0.0) {
    return higher_is_better(m) ? candidate > incumbent + epsilon : candidate < incumbent - epsilon;
}

/// Rows are reference classes, columns predicted classes.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t n_classes) : n_(n_classes), counts_(n_classes * n_classes, 0) {}

    ConfusionMatrix(std::size_t n_classes, std::span<const double> observed, std::span<const double> predicted)
        : ConfusionMatrix(n_classes) {
        if (observed.size() != predicted.size()) throw ArgumentError("observed and predicted lengths differ");
        for (std::size_t i = 0; i < observed.size(); ++i)
            add(static_cast<std::size_t>(observed[i]), static_cast<std::size_t>(predicted[i]));
    }

    static ConfusionMatrix from_counts(const std::vector<std::vector<long long>>& rows) {
        ConfusionMatrix cm(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != rows.size()) throw ArgumentError("confusion matrix must be square");
            for (std::size_t j = 0; j < rows.size(); ++j) {
                if (rows[i][j] < 0) throw ArgumentError("confusion counts must be non-negative");
                cm.counts_[i * cm.n_ + j] = rows[i][j];
            }
        }
        return cm;
    }

    void add(std::size_t reference, std::size_t predicted, long long count = 1) {
        if (reference >= n_ || predicted >= n_) throw ArgumentError("class index outside confusion matrix");
        counts_[reference * n_ + predicted] += count;
    }

    std::size_t n_classes() const { return n_; }
    long long operator()(std::size_t reference, std::size_t predicted) const { return counts_[reference * n_ + predicted]; }

    long long total() const {
        long long t = 0;
        for (long long c : counts_) t += c;
        return t;
    }

    long long trace() const {
        long long t = 0;
        for (std::size_t i = 0; i < n_; ++i) t += (*this)(i, i);
        return t;
    }

private:
    std::size_t n_;
    std::vector<long long> counts_;
};

inline double accuracy(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total <= 0) throw ArgumentError("accuracy of an empty confusion matrix");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

/// Cohen's kappa, (po - pe) / (1 - pe).
inline double kappa(const ConfusionMatrix& cm) {
    const long long total = cm.total();
    if (total <= 0) throw ArgumentError("kappa of an empty confusion matrix");
    const auto n = static_cast<double>(total);
    double chance = 0.0;
    for (std::size_t i = 0; i < cm.n_classes(); ++i) {
        long long row = 0, col = 0;
        for (std::size_t j = 0; j < cm.n_classes(); ++j) {
            row += cm(i, j);
            col += cm(j, i);
        }
        chance += static_cast<double>(row) * static_cast<double>(col);
    }
    const double pe = chance / (n * n);
    if (pe >= 1.0) throw UndefinedMetricError("kappa is undefined when chance agreement is 1");
    const double po = static_cast<double>(cm.trace()) / n;
    return (po - pe) / (1.0 - pe);
}

inline double rmse(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.size() != predicted.size()) throw ArgumentError("observed and predicted lengths differ");
    if (observed.empty()) throw ArgumentError("rmse of empty vectors");
    double ss = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double d = predicted[i] - observed[i];
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(observed.size()));
}

/// Squared Pearson correlation between observed and predicted.
inline double r_squared(std::span<const double> observed, std::span<const double> predicted) {
    if (observed.size() != predicted.size()) throw ArgumentError("observed and predicted lengths differ");
    if (observed.size() < 2) throw UndefinedMetricError("r2 needs at least two values");
    const auto n = static_cast<double>(observed.size());
    double mo = 0.0, mp = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        mo += observed[i];
        mp += predicted[i];
    }
    mo /= n;
    mp /= n;
    double soo = 0.0, spp = 0.0, sop = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        const double a = observed[i] - mo, b = predicted[i] - mp;
        soo += a * a;
        spp += b * b;
        sop += a * b;
    }
    if (soo <= 0.0 || spp <= 0.0) throw UndefinedMetricError("r2 is undefined for a constant vector");
    const double r = sop / std::sqrt(soo * spp);
    return r * r;
}

/// Evaluates one metric on a prediction set; class metrics read values as
/// class indices in [0, n_classes).
inline double compute_metric(Metric m, std::span<const double> observed, std::span<const double> predicted,
                             std::size_t n_classes = 0) {
    switch (m) {
        case Metric::accuracy: return accuracy(ConfusionMatrix(n_classes, observed, predicted));
        case Metric::kappa: return kappa(ConfusionMatrix(n_classes, observed, predicted));
        case Metric::rmse: return rmse(observed, predicted);
        case Metric::r2: return r_squared(observed, predicted);
    }
    throw ArgumentError("unknown metric");
}

inline std::optional<double> try_metric(Metric m, std::span<const double> observed, std::span<const double> predicted,
                                        std::size_t n_classes = 0) {
    try {
        return compute_metric(m, observed, predicted, n_classes);
    } catch (const UndefinedMetricError&) {
        return std::nullopt;
    }
}

struct FoldPredictions {
    std::size_t fold = 0;
    std::vector<double> observed;
    std::vector<double> predicted;
};

struct MetricValue {
    Metric name = Metric::rmse;
    double value = 0.0;
    MetricScope scope = MetricScope::global;
    std::size_t folds_used = 0;     // per-fold mean: folds where the metric was defined
    std::size_t folds_skipped = 0;  // per-fold mean: folds where it was not
};

/// Unweighted mean over folds where the metric is defined.
inline MetricValue per_fold_mean(Metric m, const std::vector<FoldPredictions>& folds, std::size_t n_classes = 0) {
    MetricValue out{m, 0.0, MetricScope::per_fold_mean, 0, 0};
    double sum = 0.0;
    for (const auto& f : folds) {
        if (f.observed.empty()) {
            ++out.folds_skipped;
            continue;
        }
        if (const auto v = try_metric(m, f.observed, f.predicted, n_classes)) {
            sum += *v;
            ++out.folds_used;
        } else {
            ++out.folds_skipped;
        }
    }
    if (out.folds_used == 0)
        throw UndefinedMetricError(std::string(to_string(m)) + " is undefined in every fold");
    out.value = sum / static_cast<double>(out.folds_used);
    return out;
}

/// The metric over all held-out predictions pooled together.
inline MetricValue global_metric(Metric m, const std::vector<FoldPredictions>& folds, std::size_t n_classes = 0) {
    std::vector<double> obs, pred;
    for (const auto& f : folds) {
        obs.insert(obs.end(), f.observed.begin(), f.observed.end());
        pred.insert(pred.end(), f.predicted.begin(), f.predicted.end());
    }
    if (obs.empty()) throw ArgumentError("no predictions to aggregate");
    return {m, compute_metric(m, obs, pred, n_classes), MetricScope::global, folds.size(), 0};
}

/// Per-fold mean and global value for every requested metric.
inline std::vector<MetricValue> aggregate(const std::vector<FoldPredictions>& folds, const std::vector<Metric>& metrics,
                                          std::size_t n_classes = 0) {
    bool any = false;
    for (const auto& f : folds) any = any || !f.observed.empty();
    if (!any) throw ArgumentError("aggregate needs at least one fold with a prediction");
    std::vector<MetricValue> out;
    for (Metric m : metrics) {
        out.push_back(per_fold_mean(m, folds, n_classes));
        out.push_back(global_metric(m, folds, n_classes));
    }
    return out;
}

}  // namespace spatialcv
