#pragma once

// Synthetic autocorrelated landscapes and clustered sampling designs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "spatialcv/error.hpp"
#include "spatialcv/random.hpp"
#include "spatialcv/raster.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

struct FieldSpec {
    std::size_t ncols = 256;
    std::size_t nrows = 256;
    double cell_size = 1.0;
    double x_min = 0.0;
    double y_min = 0.0;
    double autocorr_range = 8.0;  // cells; correlation at lag d is exp(-(d/range)^2)
    double sill = 1.0;            // variance of the standardized field
    std::uint64_t seed = 1;
};

struct DesignSpec {
    std::size_t n_clusters = 11;
    double cluster_radius = 6.0;  // cells
    std::size_t samples_per_cluster = 75;
    std::uint64_t seed = 1;
};

namespace detail {

inline void standardize(std::vector<double>& v, double sd_target = 1.0) {
    const auto n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    for (double& x : v) x = (x - mean) / sd * sd_target;
}

/// White noise convolved with a truncated Gaussian kernel on a padded
/// domain, so every output cell sees a full kernel.
inline std::vector<double> convolved_noise(std::size_t ncols, std::size_t nrows, double range, Rng& rng) {
    const double sigma = range / std::numbers::sqrt2;
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * range));
    std::vector<double> kernel(2 * radius + 1);
    for (std::size_t i = 0; i < kernel.size(); ++i) {
        const double d = static_cast<double>(i) - static_cast<double>(radius);
        kernel[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    }

    const std::size_t pw = ncols + 2 * radius, ph = nrows + 2 * radius;
    std::vector<double> noise(pw * ph);
    for (double& v : noise) v = rng.normal();

    // Horizontal pass: ph rows x ncols.
    std::vector<double> horizontal(ph * ncols, 0.0);
    for (std::size_t r = 0; r < ph; ++r)
        for (std::size_t c = 0; c < ncols; ++c) {
            double s = 0.0;
            const double* src = &noise[r * pw + c];
            for (std::size_t k = 0; k < kernel.size(); ++k) s += kernel[k] * src[k];
            horizontal[r * ncols + c] = s;
        }
    // Vertical pass: nrows x ncols.
    std::vector<double> out(nrows * ncols, 0.0);
    for (std::size_t r = 0; r < nrows; ++r)
        for (std::size_t k = 0; k < kernel.size(); ++k) {
            const double w = kernel[k];
            const double* src = &horizontal[(r + k) * ncols];
            double* dst = &out[r * ncols];
            for (std::size_t c = 0; c < ncols; ++c) dst[c] += w * src[c];
        }
    return out;
}

}  // namespace detail

/// Standardized Gaussian random field (mean 0, variance `sill`) with
/// Gaussian-shaped autocorrelation of the given range.
inline RasterGrid gaussian_random_field(const FieldSpec& spec) {
    if (spec.ncols < 16 || spec.nrows < 16) throw ArgumentError("random fields need at least 16x16 cells");
    if (!(spec.autocorr_range > 0.0)) throw ArgumentError("autocorrelation range must be positive");
    if (!(spec.sill > 0.0)) throw ArgumentError("sill must be positive");
    if (spec.autocorr_range >= static_cast<double>(std::min(spec.ncols, spec.nrows)) / 4.0)
        throw DegenerateError("autocorrelation range must be below a quarter of the grid size");
    Rng rng(spec.seed);
    auto values = detail::convolved_noise(spec.ncols, spec.nrows, spec.autocorr_range, rng);
    detail::standardize(values, std::sqrt(spec.sill));
    return RasterGrid({spec.ncols, spec.nrows, spec.x_min, spec.y_min, spec.cell_size}, std::move(values));
}

/// Smooth standardized surface built from a few long random waves
/// (wavelengths between 0.75 and 2 grid extents). Stands in for terrain.
inline RasterGrid smooth_surface(const GridGeometry& geometry, std::uint64_t seed, std::size_t n_waves = 6) {
    Rng rng(seed);
    const double extent = static_cast<double>(std::max(geometry.ncols, geometry.nrows));
    struct Wave {
        double kx, ky, phase, amplitude;
    };
    std::vector<Wave> waves;
    for (std::size_t i = 0; i < n_waves; ++i) {
        const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double wavelength = extent * rng.uniform(0.75, 2.0);
        waves.push_back({std::cos(angle) / wavelength, std::sin(angle) / wavelength,
                         rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.5, 1.0)});
    }
    std::vector<double> values(geometry.cell_count());
    for (std::size_t r = 0; r < geometry.nrows; ++r)
        for (std::size_t c = 0; c < geometry.ncols; ++c) {
            double z = 0.0;
            for (const auto& w : waves)
                z += w.amplitude *
                     std::cos(2.0 * std::numbers::pi * (w.kx * static_cast<double>(c) + w.ky * static_cast<double>(r)) +
                              w.phase);
            values[r * geometry.ncols + c] = z;
        }
    detail::standardize(values);
    return RasterGrid(geometry, std::move(values));
}

/// Clusters of sample cells: centres by seeded rejection sampling (at least
/// 4 radii apart, a radius away from the grid edge), members are the cells
/// whose centres lie within the radius, subsampled to samples_per_cluster.
inline std::vector<SamplePoint> clustered_design(const RasterGrid& grid_template, const DesignSpec& spec) {
    if (spec.n_clusters < 2) throw ArgumentError("a clustered design needs at least two clusters");
    if (spec.samples_per_cluster < 1) throw ArgumentError("samples_per_cluster must be positive");
    if (!(spec.cluster_radius >= 0.0)) throw ArgumentError("cluster radius must be non-negative");
    const auto margin = static_cast<std::size_t>(std::ceil(spec.cluster_radius));
    const std::size_t ncols = grid_template.ncols(), nrows = grid_template.nrows();
    if (2 * margin >= ncols || 2 * margin >= nrows)
        throw InfeasibleError("cluster radius does not fit inside the grid");

    Rng rng(spec.seed);
    const double min_spacing = 4.0 * spec.cluster_radius;
    std::vector<CellIndex> centres;
    constexpr std::size_t kMaxAttempts = 20000;
    for (std::size_t attempt = 0; centres.size() < spec.n_clusters; ++attempt) {
        if (attempt >= kMaxAttempts)
            throw InfeasibleError("could not place " + std::to_string(spec.n_clusters) + " clusters " +
                                  format_double(min_spacing) + " cells apart");
        const CellIndex c{margin + static_cast<std::size_t>(rng.below(nrows - 2 * margin)),
                          margin + static_cast<std::size_t>(rng.below(ncols - 2 * margin))};
        const bool far = std::all_of(centres.begin(), centres.end(), [&](const CellIndex& o) {
            const double dr = static_cast<double>(c.row) - static_cast<double>(o.row);
            const double dc = static_cast<double>(c.col) - static_cast<double>(o.col);
            return std::hypot(dr, dc) >= min_spacing && !(dr == 0.0 && dc == 0.0);
        });
        if (far) centres.push_back(c);
    }

    std::vector<SamplePoint> points;
    std::int64_t next_id = 1;
    for (std::size_t g = 0; g < centres.size(); ++g) {
        const auto& c = centres[g];
        std::vector<CellIndex> members;
        for (std::size_t r = c.row - margin; r <= c.row + margin; ++r)
            for (std::size_t col = c.col - margin; col <= c.col + margin; ++col) {
                const double dr = static_cast<double>(r) - static_cast<double>(c.row);
                const double dc = static_cast<double>(col) - static_cast<double>(c.col);
                if (std::hypot(dr, dc) <= spec.cluster_radius) members.push_back({r, col});
            }
        if (members.size() > spec.samples_per_cluster) {
            rng.shuffle(std::span<CellIndex>(members));
            members.resize(spec.samples_per_cluster);
            std::sort(members.begin(), members.end(), [](const CellIndex& a, const CellIndex& b) {
                return a.row < b.row || (a.row == b.row && a.col < b.col);
            });
        }
        for (const auto& m : members)
            points.push_back({next_id++, GroupId{static_cast<std::int64_t>(g)}, grid_template.center_x(m.col),
                              grid_template.center_y(m.row), 0.0});
    }
    return points;
}

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchmarkSpec {
    Task task = Task::regression;
    std::uint64_t seed = 2019;
    std::size_t ncols = 256;
    std::size_t nrows = 256;
    double cell_size = 10.0;
    std::size_t n_signal = 2;
    std::size_t n_distractor = 2;
    double field_range = 12.0;  // cells, for signal and distractor fields
    std::vector<double> signal_weights{1.0, -0.5};
    double interaction_weight = 0.5;  // weight of the indicator [signal_1 * signal_2 > 0]
    double noise_fraction = 0.3;      // residual sd relative to the deterministic part's sd
    double noise_range = 4.0;         // cells; the residual is itself a random field
    std::size_t n_classes = 4;
    DesignSpec design{11, 6.0, 75, 0};  // design seed 0 derives from `seed`
};

struct Benchmark {
    SampleTable table;
    RasterStack stack;      // predictors: signals, distractors, elevation, coordinates
    RasterGrid response;    // full-grid truth (class index for classification)
    nlohmann::json description;
};

inline std::string signal_band(std::size_t i) { return "signal_" + std::to_string(i + 1); }
inline std::string distractor_band(std::size_t i) { return "distractor_" + std::to_string(i + 1); }
inline constexpr const char* kElevationBand = "elevation";

/// Builds predictor layers, a response that depends on the signal layers
/// only, and a clustered sample drawn from them.
inline Benchmark make_benchmark(const BenchmarkSpec& spec) {
    if (spec.n_signal < 1) throw ArgumentError("a benchmark needs at least one signal layer");
    if (spec.signal_weights.size() != spec.n_signal)
        throw ArgumentError("signal_weights must have one entry per signal layer");
    if (spec.task == Task::classification && spec.n_classes < 2)
        throw ArgumentError("classification benchmarks need at least two classes");
    if (spec.noise_fraction < 0.0) throw ArgumentError("noise_fraction must be non-negative");

    const GridGeometry geometry{spec.ncols, spec.nrows, 0.0, 0.0, spec.cell_size};
    auto field = [&](std::uint64_t stream, double range) {
        FieldSpec f{spec.ncols, spec.nrows, spec.cell_size, 0.0, 0.0, range, 1.0, derive_seed(spec.seed, stream)};
        return gaussian_random_field(f);
    };

    Benchmark b;
    std::vector<RasterGrid> signals;
    for (std::size_t i = 0; i < spec.n_signal; ++i) {
        signals.push_back(field(100 + i, spec.field_range));
        b.stack.add(signal_band(i), signals.back());
    }
    for (std::size_t i = 0; i < spec.n_distractor; ++i) b.stack.add(distractor_band(i), field(200 + i, spec.field_range));
    b.stack.add(kElevationBand, smooth_surface(geometry, derive_seed(spec.seed, 300)));
    const auto coordinates = coordinate_layers(b.stack.bands().front().grid);
    for (const auto& band : coordinates.bands()) b.stack.add(band.name, band.grid);

    // Deterministic part.
    std::vector<double> signal_part(geometry.cell_count(), 0.0);
    for (std::size_t c = 0; c < signal_part.size(); ++c) {
        double f = 0.0;
        for (std::size_t i = 0; i < spec.n_signal; ++i) f += spec.signal_weights[i] * signals[i].at(c);
        if (spec.n_signal >= 2 && signals[0].at(c) * signals[1].at(c) > 0.0) f += spec.interaction_weight;
        signal_part[c] = f;
    }
    const auto n_cells = static_cast<double>(signal_part.size());
    const double mean = std::accumulate(signal_part.begin(), signal_part.end(), 0.0) / n_cells;
    double ss = 0.0;
    for (double v : signal_part) ss += (v - mean) * (v - mean);
    const double signal_sd = std::sqrt(ss / (n_cells - 1.0));

    std::vector<double> response = signal_part;
    if (spec.noise_fraction > 0.0) {
        const auto noise = field(400, spec.noise_range);
        for (std::size_t c = 0; c < response.size(); ++c) response[c] += spec.noise_fraction * signal_sd * noise.at(c);
    }

    std::vector<double> breaks;
    std::vector<std::string> labels;
    if (spec.task == Task::classification) {
        std::vector<double> sorted = response;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t q = 1; q < spec.n_classes; ++q)
            breaks.push_back(sorted[q * sorted.size() / spec.n_classes]);
        for (double& v : response)
            v = static_cast<double>(std::upper_bound(breaks.begin(), breaks.end(), v) - breaks.begin());
        // Zero-padded so lexicographic label order matches class order.
        const std::size_t width = std::to_string(spec.n_classes).size();
        for (std::size_t q = 0; q < spec.n_classes; ++q) {
            const auto digits = std::to_string(q + 1);
            labels.push_back("class_" + std::string(width - digits.size(), '0') + digits);
        }
    }
    b.response = RasterGrid(geometry, response);

    DesignSpec design = spec.design;
    if (design.seed == 0) design.seed = derive_seed(spec.seed, 500);
    auto points = clustered_design(b.response, design);
    for (auto& p : points) {
        const auto cell = b.response.locate(p.x, p.y);
        p.response = b.response(cell->row, cell->col);
    }
    b.table = extract_at_samples(b.stack, points, spec.task, labels);

    nlohmann::json bands = nlohmann::json::object();
    for (std::size_t i = 0; i < spec.n_signal; ++i) bands[signal_band(i)] = "signal";
    for (std::size_t i = 0; i < spec.n_distractor; ++i) bands[distractor_band(i)] = "distractor";
    bands[kElevationBand] = "elevation-like (no causal weight)";
    bands["coord_x"] = "easting of cell centre (no causal weight)";
    bands["coord_y"] = "northing of cell centre (no causal weight)";
    b.description = {
        {"task", to_string(spec.task)},
        {"seed", spec.seed},
        {"grid", {{"ncols", spec.ncols}, {"nrows", spec.nrows}, {"cell_size", spec.cell_size}, {"x_min", 0.0}, {"y_min", 0.0}}},
        {"bands", bands},
        {"field_range_cells", spec.field_range},
        {"response",
         {{"formula", "sum_i w_i * signal_i + interaction_weight * [signal_1 * signal_2 > 0] + noise"},
          {"signal_weights", spec.signal_weights},
          {"interaction_weight", spec.interaction_weight},
          {"signal_sd", signal_sd},
          {"noise", {{"kind", "gaussian random field"}, {"sd", spec.noise_fraction * signal_sd},
                     {"noise_fraction", spec.noise_fraction}, {"range_cells", spec.noise_range}}}}},
        {"design",
         {{"n_clusters", design.n_clusters},
          {"cluster_radius_cells", design.cluster_radius},
          {"samples_per_cluster", design.samples_per_cluster},
          {"seed", design.seed},
          {"n_samples", b.table.size()}}},
    };
    if (spec.task == Task::classification) {
        b.description["classes"] = {{"n_classes", spec.n_classes}, {"quantile_breaks", breaks}, {"labels", labels}};
    }
    return b;
}

/// Writes the stack (grids plus manifest), the response grid, the sample CSV
/// and the ground-truth description into `dir`.
inline void write_benchmark(const Benchmark& b, const std::filesystem::path& dir) {
    write_stack(b.stack, dir);
    write_ascii_grid(b.response, dir / "response.asc");
    write_samples_csv(b.table, dir / "samples.csv");
    write_text_file(dir / "description.json", b.description.dump(2) + "\n");
}

}  // namespace spatialcv
