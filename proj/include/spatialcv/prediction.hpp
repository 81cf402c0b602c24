#pragma once

// Applying a trained forest to a raster stack.

#include <cstddef>
#include <string>
#include <vector>

#include "spatialcv/error.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/parallel.hpp"
#include "spatialcv/raster.hpp"
#include "spatialcv/text.hpp"

namespace spatialcv {

/// Per-cell prediction (class index or regression value). Cells with NODATA
/// in any band the model uses are NODATA. Rows are split across `jobs`
/// workers; each cell is computed independently, so the grid is identical
/// for any job count.
inline RasterGrid predict_surface(const Forest& model, const RasterStack& stack, std::size_t jobs = 1) {
    std::vector<const RasterGrid*> bands;
    std::vector<std::string> missing;
    for (const auto& name : model.feature_names) {
        const RasterGrid* g = stack.find(name);
        if (!g) missing.push_back(name);
        bands.push_back(g);
    }
    if (!missing.empty()) throw FeatureMismatchError("stack lacks model features: " + join(missing, ", "));
    if (bands.empty()) throw FeatureMismatchError("model has no features");

    RasterGrid out(stack.geometry(), kDefaultNodata);
    const std::size_t ncols = out.ncols();
    parallel_for(out.nrows(), jobs, [&](std::size_t r) {
        std::vector<double> row(bands.size());
        for (std::size_t c = 0; c < ncols; ++c) {
            bool valid = true;
            for (std::size_t j = 0; j < bands.size(); ++j) {
                row[j] = (*bands[j])(r, c);
                if (bands[j]->is_nodata(row[j])) valid = false;
            }
            if (valid) out.set(r, c, model.predict(row));
        }
    });
    return out;
}

/// "index,label" lines for a classification surface.
inline std::string format_legend_csv(const Forest& model) {
    std::string out = "index,label\n";
    for (std::size_t i = 0; i < model.class_labels.size(); ++i)
        out += std::to_string(i) + ',' + csv_escape(model.class_labels[i]) + '\n';
    return out;
}

}  // namespace spatialcv
