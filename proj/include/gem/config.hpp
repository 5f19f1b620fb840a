#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gem/heatmap.hpp"
#include "gem/model.hpp"
#include "gem/trainer.hpp"

namespace gem {

// How the synthetic (or IDX-backed) corpus for one run is built.
struct DatasetSpec {
    std::string kind = "two_moons";  // two_moons | blobs | toy1d | idx
    std::size_t n_train = 2000;
    std::size_t n_test = 1000;
    double noise = 0.1;

    // Far out-of-distribution cluster (two_moons only); 0 disables it.
    std::size_t ood_n = 400;
    double ood_cx = 2.5, ood_cy = 2.0, ood_std = 0.3;

    // Near out-of-distribution ring around the in-distribution mass.
    std::size_t ring_n = 0;
    double ring_radius = 2.2, ring_noise = 0.1;

    // Noise-corrupted copy of the test split; 0 disables it.
    int shifted_severity = 0;

    std::size_t blob_classes = 3;
    double blob_sigma = 0.4;

    std::string idx_train_images, idx_train_labels;
    std::string idx_test_images, idx_test_labels;
    std::size_t idx_limit = 2000;  // rows per IDX split, 0 = everything

    std::size_t input_dim() const;
    std::size_t class_count() const;
    void validate() const;  // throws ConfigError
};

struct SweepSpec {
    std::string preset;              // "ablation9" or empty
    std::vector<std::string> axes;   // subset of {sn,core,mix,fi_reg,fi_mod,ebm,unc}
};

// Whole-run configuration: model, optimization, data, outputs. Parsed from a
// JSON document; unknown keys anywhere are rejected with their dotted path.
struct RunConfig {
    GemConfig gem;
    TrainSchedule schedule;
    DatasetSpec dataset;
    std::vector<std::uint64_t> seeds{0};
    std::string out_dir = "runs/out";
    SweepSpec sweep;
    HeatmapSpec heatmap;
};

// Throws ConfigError naming the key/position for every defect.
RunConfig parse_run_config_text(const std::string& text);
RunConfig parse_run_config_file(const std::string& path);

// JSON snapshot of a model configuration (round-trips through
// gem_config_from_json; used by checkpoints).
std::string gem_config_to_json_text(const GemConfig& cfg);
GemConfig gem_config_from_json_text(const std::string& text);

}  // namespace gem
