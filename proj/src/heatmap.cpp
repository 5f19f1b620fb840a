#include "gem/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>

#include "gem/dirichlet.hpp"
#include "gem/error.hpp"

namespace gem {

void HeatmapSpec::validate() const {
    if (score != "entropy" && score != "mi" && score != "alpha0" && score != "energy")
        throw std::invalid_argument(
            "heatmap score must be one of entropy, mi, alpha0, energy");
    if (resolution < 16) throw std::invalid_argument("heatmap resolution must be at least 16");
    if (!(x_min < x_max) || !(y_min < y_max) || !std::isfinite(x_min) || !std::isfinite(x_max) ||
        !std::isfinite(y_min) || !std::isfinite(y_max))
        throw std::invalid_argument("heatmap ranges must be finite and ordered");
}

double HeatmapGrid::x_center(std::size_t i) const {
    return spec.x_min + (static_cast<double>(i) + 0.5) * (spec.x_max - spec.x_min) /
                            static_cast<double>(spec.resolution);
}

double HeatmapGrid::y_center(std::size_t j) const {
    return spec.y_min + (static_cast<double>(j) + 0.5) * (spec.y_max - spec.y_min) /
                            static_cast<double>(spec.resolution);
}

namespace {

std::vector<double> entropy_values(const Tensor& p) {
    const std::size_t n = p.rows(), c = p.cols();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double v = p.at(i, j);
            if (v > 0.0) h -= v * std::log(v);
        }
        out[i] = h;
    }
    return out;
}

std::vector<double> score_values(GemModel& model, const ForwardResult& f,
                                 const std::string& score) {
    if (score == "entropy") return entropy_values(f.p_hat);
    if (score == "alpha0") return {f.alpha0_mix.data().begin(), f.alpha0_mix.data().end()};
    if (score == "energy") return model.energy_score_eval(f);
    // mutual information; a single head has none by definition
    if (f.head_p.size() <= 1) return std::vector<double>(f.p_hat.rows(), 0.0);
    Tensor mi = mixture_mutual_information(f.pi, f.head_p);
    return {mi.data().begin(), mi.data().end()};
}

}  // namespace

HeatmapGrid compute_heatmap(GemModel& model, const HeatmapSpec& spec) {
    spec.validate();
    if (model.config().input_dim != 2)
        throw std::logic_error("compute_heatmap: model must take 2-dimensional inputs");
    const std::size_t res = spec.resolution;
    HeatmapGrid grid;
    grid.spec = spec;
    grid.values.assign(res * res, 0.0);

    TapePause pause;
    for (std::size_t j = 0; j < res; ++j) {
        Tensor xb(res, 2);
        const double y = grid.y_center(j);
        for (std::size_t i = 0; i < res; ++i) {
            xb.at(i, 0) = grid.x_center(i);
            xb.at(i, 1) = y;
        }
        ForwardResult f = model.forward(xb, /*training=*/false, nullptr, nullptr);
        std::vector<double> vals = score_values(model, f, spec.score);
        for (std::size_t i = 0; i < res; ++i) grid.values[j * res + i] = vals[i];
    }
    grid.vmin = grid.values[0];
    grid.vmax = grid.values[0];
    for (double v : grid.values) {
        if (!std::isfinite(v)) throw NumericError("compute_heatmap: non-finite cell value");
        grid.vmin = std::min(grid.vmin, v);
        grid.vmax = std::max(grid.vmax, v);
    }
    return grid;
}

void write_grid_csv(const HeatmapGrid& grid, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_grid_csv: cannot open " + path);
    out << "x,y,value\n";
    const std::size_t res = grid.spec.resolution;
    char buf[128];
    for (std::size_t j = 0; j < res; ++j) {
        for (std::size_t i = 0; i < res; ++i) {
            std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", grid.x_center(i),
                          grid.y_center(j), grid.values[j * res + i]);
            out << buf;
        }
    }
    if (!out) throw std::runtime_error("write_grid_csv: write failed for " + path);
}

namespace {

// Dark-to-bright monotone ramp (plasma-like stops).
void colormap(double t, int& r, int& g, int& b) {
    static const int stops[5][3] = {
        {13, 8, 135}, {126, 3, 168}, {204, 71, 120}, {248, 149, 64}, {240, 249, 33}};
    t = std::clamp(t, 0.0, 1.0);
    const double x = t * 4.0;
    const int seg = std::min(3, static_cast<int>(x));
    const double f = x - seg;
    r = static_cast<int>(std::lround(stops[seg][0] + f * (stops[seg + 1][0] - stops[seg][0])));
    g = static_cast<int>(std::lround(stops[seg][1] + f * (stops[seg + 1][1] - stops[seg][1])));
    b = static_cast<int>(std::lround(stops[seg][2] + f * (stops[seg + 1][2] - stops[seg][2])));
}

const char* class_color(int label) {
    static const char* palette[8] = {"#e8f4f8", "#1b1b2f", "#2e8b57", "#b8860b",
                                     "#8b3a62", "#4169aa", "#b22222", "#5f9ea0"};
    return palette[label % 8];
}

}  // namespace

void write_heatmap_svg(const HeatmapGrid& grid, const Dataset* overlay,
                       const std::string& path) {
    const std::size_t res = grid.spec.resolution;
    const int cell = static_cast<int>(std::max<std::size_t>(2, 640 / res));
    const int w = cell * static_cast<int>(res);
    const int h = cell * static_cast<int>(res);
    const double span = grid.vmax - grid.vmin;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_heatmap_svg: cannot open " + path);
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n",
                  w, h, w, h);
    out << buf;
    for (std::size_t j = 0; j < res; ++j) {
        // raster y grows downward; grid row 0 sits at y_min (bottom)
        const int py = h - cell * static_cast<int>(j + 1);
        for (std::size_t i = 0; i < res; ++i) {
            const double v = grid.values[j * res + i];
            const double t = span > 0.0 ? (v - grid.vmin) / span : 0.5;
            int r, g, b;
            colormap(t, r, g, b);
            std::snprintf(buf, sizeof buf,
                          "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" "
                          "fill=\"#%02x%02x%02x\"/>\n",
                          cell * static_cast<int>(i), py, cell, cell, r, g, b);
            out << buf;
        }
    }
    if (overlay && overlay->size() > 0) {
        const double sx = w / (grid.spec.x_max - grid.spec.x_min);
        const double sy = h / (grid.spec.y_max - grid.spec.y_min);
        for (std::size_t i = 0; i < overlay->size(); ++i) {
            const double x = overlay->X.at(i, 0);
            const double y = overlay->dim() > 1 ? overlay->X.at(i, 1) : 0.0;
            if (x < grid.spec.x_min || x > grid.spec.x_max || y < grid.spec.y_min ||
                y > grid.spec.y_max)
                continue;
            const double px = (x - grid.spec.x_min) * sx;
            const double py = h - (y - grid.spec.y_min) * sy;
            if (overlay->y[i] == kOodLabel) {
                std::snprintf(buf, sizeof buf,
                              "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.2\" fill=\"none\" "
                              "stroke=\"#ffffff\" stroke-width=\"0.8\"/>\n",
                              px, py);
            } else {
                std::snprintf(buf, sizeof buf,
                              "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"1.8\" fill=\"%s\" "
                              "stroke=\"#ffffff\" stroke-width=\"0.4\"/>\n",
                              px, py, class_color(overlay->y[i]));
            }
            out << buf;
        }
    }
    out << "</svg>\n";
    if (!out) throw std::runtime_error("write_heatmap_svg: write failed for " + path);
}

}  // namespace gem
