#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gem/data.hpp"
#include "gem/model.hpp"
#include "gem/tensor.hpp"

namespace gem {

struct AdamWParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

// Adaptive optimizer with decoupled weight decay over a fixed parameter list.
class AdamW {
public:
    explicit AdamW(std::vector<Tensor> params, AdamWParams hp = {});

    // One update at the given rate. A non-finite gradient anywhere skips the
    // whole step — moments and step count untouched — and bumps the skip
    // counter. Returns whether the step was applied.
    bool step(double lr);
    void zero_grad();

    std::size_t steps_taken() const { return taken_; }
    std::size_t steps_skipped() const { return skipped_; }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamWParams hp_;
    std::size_t taken_ = 0;
    std::size_t skipped_ = 0;
};

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)); monotone to zero.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

// Joint L2 clipping across every parameter gradient; returns the pre-clip
// norm. Gradients missing (never touched by backward) count as zero.
double clip_global_norm(const std::vector<Tensor>& params, double max_norm);

struct TrainSchedule {
    std::size_t epochs = 50;
    std::size_t batch_size = 64;
    double base_lr = 5e-4;
    double weight_decay = 1e-4;
    double clip_norm = 1.0;
    std::size_t density_refit_every = 5;
    double val_fraction = 0.1;

    void validate() const;
};

struct EpochRow {
    std::size_t epoch = 0;  // 1-based in reports
    double lr = 0.0;        // rate at the first step of the epoch
    LossBreakdown loss;     // batch means
    double val_acc = 0.0;
    double val_ece = 0.0;
};

struct TrainResult {
    std::vector<EpochRow> history;
    std::size_t skipped_steps = 0;
    double final_train_acc = 0.0;
};

// Full loop: stratified val carve-out, shuffled minibatches, cosine schedule,
// global-norm clipping, density refits on a fixed cadence (and once more at
// the end), eval-time energy calibration. Epochs are counted from zero
// internally, so virtual outliers join once epoch >= warmup_epochs.
// Divergence (non-finite loss) raises TrainAbort carrying the last stable
// loss breakdown.
TrainResult fit(GemModel& model, Dataset data, const TrainSchedule& sched, std::uint64_t seed);

// Columns: epoch,lr,pred,kl,fi,ebm,unc,total,val_acc,val_ece.
void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows);

}  // namespace gem
