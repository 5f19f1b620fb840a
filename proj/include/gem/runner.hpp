#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gem/config.hpp"
#include "gem/data.hpp"
#include "gem/metrics.hpp"
#include "gem/model.hpp"
#include "gem/trainer.hpp"

namespace gem {

// Evaluation corpus for one seed: a labeled in-distribution test split,
// named out-of-distribution sets, and optionally a noise-shifted test copy.
struct EvalData {
    Dataset id_test;
    std::vector<std::pair<std::string, Dataset>> ood_sets;
    Dataset shifted;  // undefined X when disabled
};

Dataset build_train_dataset(const DatasetSpec& spec, std::uint64_t seed);
EvalData build_eval_data(const DatasetSpec& spec, std::uint64_t seed);

// Current commit hash, resolved by walking .git from the working directory
// upward; "unknown" when not in a repository.
std::string read_git_hash();

std::string seed_dir(const std::string& out_dir, std::uint64_t seed);

struct TrainOutcome {
    TrainResult result;
    std::string checkpoint_path;
};

// Trains one seed and writes checkpoint.json, history.csv, and manifest.json
// under seed_dir(cfg.out_dir, seed); the config document is echoed byte-for-
// byte to out_dir/config.json.
TrainOutcome run_train_seed(const RunConfig& cfg, std::uint64_t seed,
                            const std::string& config_text);

// Loads the seed checkpoint, scores the eval corpus, writes per-sample score
// dumps and a per-seed metrics.csv, and returns the metric rows.
std::vector<MetricRow> run_eval_seed(const RunConfig& cfg, std::uint64_t seed);

// Subcommand drivers; return a process exit code (0 on success).
int cmd_train(const RunConfig& cfg, const std::string& config_text);
int cmd_eval(const RunConfig& cfg);
int cmd_heatmap(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg, const std::string& config_text);

// One cell of the ablation switch matrix.
struct SweepCell {
    std::string name;
    bool sn = false, core = false, mix = false;
    bool fi_reg = false, fi_mod = false, ebm = false, unc = false;
};

// The 9-row ladder: everything off, then normalization, gating, mixture,
// sensitivity terms, energy margin, entropy shaping.
std::vector<SweepCell> ablation_ladder();
// Cross-product over the named switch axes; empty input yields the single
// all-off cell.
std::vector<SweepCell> cross_product_cells(const std::vector<std::string>& axes);
// Applies a cell to a base model configuration: switches force the variant
// ladder (sensitivity terms need the mixture, the mixture needs gating), and
// virtual outliers ride with the energy margin.
GemConfig apply_cell(GemConfig base, const SweepCell& cell);

}  // namespace gem
