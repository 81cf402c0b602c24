#pragma once

#include "spatialcv/cv_engine.hpp"
#include "spatialcv/error.hpp"
#include "spatialcv/folds.hpp"
#include "spatialcv/forest.hpp"
#include "spatialcv/metrics.hpp"
#include "spatialcv/prediction.hpp"
#include "spatialcv/raster.hpp"
#include "spatialcv/sample_store.hpp"
#include "spatialcv/selection.hpp"
#include "spatialcv/synthgen.hpp"
