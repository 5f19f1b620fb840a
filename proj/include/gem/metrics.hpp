#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gem/tensor.hpp"

namespace gem {

// Detection problem: one real score per sample plus the positive flag.
// Positive means OOD for OOD detection and "prediction correct" for
// misclassification detection.
struct ScoredEvalSet {
    std::vector<double> scores;
    std::vector<char> positives;
};

// Mann-Whitney with tie-averaged ranks: P(s_pos > s_neg) + 0.5 P(tie).
double auroc(const ScoredEvalSet& s);

// Area under precision-recall by step interpolation over descending score
// thresholds; tied scores collapse into a single threshold block.
double aupr(const ScoredEvalSet& s);

// 15 equal-width right-closed bins by default; empty bins contribute zero.
double ece(const std::vector<double>& confidence, const std::vector<char>& correct,
           std::size_t bins = 15);

// (1/N) sum_i sum_c (p_ic - y_ic)^2, no extra 1/C factor.
double brier(const Tensor& p, const std::vector<int>& labels);

// mean -log p_y with probabilities floored at 1e-12.
double nll(const Tensor& p, const std::vector<int>& labels);

double accuracy(const Tensor& p, const std::vector<int>& labels);

std::vector<int> argmax_rows(const Tensor& p);
std::vector<double> max_rows(const Tensor& p);

struct BinStat {
    double mean_confidence = 0.0;
    double accuracy = 0.0;
    std::size_t count = 0;
};

struct CalibrationReport {
    double ece = 0.0;
    double brier = 0.0;
    double brier_x100 = 0.0;
    double nll = 0.0;
    double accuracy = 0.0;
    std::vector<BinStat> bins;
};

CalibrationReport calibration_report(const Tensor& p, const std::vector<int>& labels,
                                     std::size_t bins = 15);

// positive = correct prediction, score = max probability; high AUPR means
// correctness is easy to flag.
ScoredEvalSet misclassification_set(const Tensor& p, const std::vector<int>& labels);

// Everything needed to derive the per-sample uncertainty scores. head_p may
// be empty for single-head models; energy_conf is the in-distribution
// confidence in [0, 1] from the energy calibration.
struct UncertaintyInputs {
    Tensor p_hat;                    // N x C
    std::vector<double> alpha0;      // N, mixture total evidence
    Tensor pi;                       // N x K when K > 1, else undefined
    std::vector<Tensor> head_p;     // K tensors of N x C
    std::vector<double> energy_conf;  // N
};

// All scores oriented so that larger = more OOD.
struct UncertaintyScores {
    std::vector<double> neg_maxp;
    std::vector<double> entropy;
    std::vector<double> neg_alpha0;
    std::vector<double> mi;
    std::vector<double> neg_energy_conf;
    bool mi_is_zero_single_head = false;  // K = 1: mi filled with zeros
};

UncertaintyScores uncertainty_scores(const UncertaintyInputs& in);

struct TemperatureFit {
    double temperature = 1.0;
    double nll_before = 0.0;
    double nll_after = 0.0;
};

// Golden-section search on log T over [log 0.1, log 10] minimizing val NLL
// of softmax(logits / T); never worse than T = 1.
TemperatureFit fit_temperature(const Tensor& logits, const std::vector<int>& labels);

// One row of the metric report CSV (fixed column order).
struct MetricRow {
    std::string dataset;
    std::string variant;
    std::uint64_t seed = 0;
    std::string metric;
    double value = 0.0;
};

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows);

}  // namespace gem
