#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gem/data.hpp"
#include "gem/model.hpp"

namespace gem {

struct HeatmapSpec {
    std::string score = "entropy";  // entropy | mi | alpha0 | energy
    double x_min = -2.5, x_max = 3.5;
    double y_min = -2.0, y_max = 2.5;
    std::size_t resolution = 160;  // cells per side, at least 16

    void validate() const;  // throws std::invalid_argument
};

// Row-major cell values, row index 0 at y_min; cell centers are sampled.
struct HeatmapGrid {
    HeatmapSpec spec;
    std::vector<double> values;  // resolution^2
    double vmin = 0.0, vmax = 0.0;

    double x_center(std::size_t i) const;
    double y_center(std::size_t j) const;
};

// Frozen-model evaluation over the grid; requires a 2-input model.
HeatmapGrid compute_heatmap(GemModel& model, const HeatmapSpec& spec);

// Header x,y,value; resolution^2 rows, y-major to match the SVG raster.
void write_grid_csv(const HeatmapGrid& grid, const std::string& path);

// Deterministic SVG raster, monotone dark-to-bright colormap, optional
// overlay of labeled points (per-class markers).
void write_heatmap_svg(const HeatmapGrid& grid, const Dataset* overlay,
                       const std::string& path);

}  // namespace gem
