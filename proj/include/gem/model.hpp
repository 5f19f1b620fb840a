#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gem/density.hpp"
#include "gem/nets.hpp"
#include "gem/rng.hpp"
#include "gem/tensor.hpp"

namespace gem {

// Model family. The two baselines are single-head evidential classifiers
// (the second rescales logits by a density-derived factor); core adds the
// energy gate and density scaling; mix adds K routed heads; fi adds the
// sensitivity machinery on top of mix.
enum class Variant { edl_baseline, daedl_baseline, core, mix, fi };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct VosParams {
    double weight = 0.1;
    std::size_t warmup_epochs = 10;
    double margin = 1.0;
    double tail_quantile = 0.95;
    std::size_t per_class = 32;  // negatives drawn per class per batch
    // Each accepted tail sample is pushed outward by a radius factor drawn
    // uniformly from [1, expansion].  Shaping entropy across the whole annulus
    // (not just the innermost shell) pins the outward slope of the heads, so
    // confidence cannot re-grow past the shell.
    double expansion = 3.0;
};

struct GemConfig {
    Variant variant = Variant::fi;
    std::size_t input_dim = 2;
    std::size_t classes = 2;
    // Kept deliberately small: the density estimator, the virtual-outlier
    // annulus, and the entropy shaping all have to cover the feature space,
    // and their coverage thins out exponentially with dimension.
    std::size_t feat_dim = 8;
    std::vector<std::size_t> backbone_hidden{64, 64};
    std::size_t aux_hidden = 32;  // energy / gate / router / head hidden width
    // relu: under strict spectral normalization a tanh net's pre-activations
    // stay in the linear zone and the model cannot leave a linear boundary.
    Activation activation = Activation::relu;
    std::size_t heads = 3;  // K; single-head variants ignore this

    double tau = 10.0;        // logit clip
    double eps = 1e-8;        // concentration floor
    double eps_prime = 1e-4;  // mixture renormalization smoothing
    double gamma = 1.2;       // density score exponent
    double s_min = 0.1, s_max = 0.9;
    double temperature = 1.0;

    double lambda_kl = 1e-3;
    double lambda_fi = 0.3;
    double lambda_ebm = 0.1;
    double lambda_unc = 1.0;
    double beta_id = 0.1, beta_ood = 0.1;
    double beta_trace = 0.01;  // expected-sensitivity trace penalty inside the fi term

    double dropout = 0.05;            // backbone and classifier heads
    double component_dropout = 0.02;  // energy / gate / router
    double lambda_min = 0.1;          // floor of the density-scaled logit factor
    std::size_t gmm_components = 0;   // 0 = one per class

    // Off by default: exact spectral division on a plain dense stack caps the
    // composed logit range near one nat on low-dimensional inputs, which traps
    // optimization at a linear decision boundary.  Enable explicitly (e.g. in
    // ablation sweeps) when the smoothness constraint matters more than fit.
    bool sn = false;
    bool fi_reg = false;
    bool fi_mod = false;
    bool ebm = false;
    bool unc = false;
    bool vos = false;
    bool tanh_energy = false;
    VosParams vos_params;

    bool uses_gate() const {
        return variant == Variant::core || variant == Variant::mix || variant == Variant::fi;
    }
    bool uses_density() const { return uses_gate() || variant == Variant::daedl_baseline; }
    bool uses_router() const { return variant == Variant::mix || variant == Variant::fi; }
    bool mixture_loss() const { return uses_router(); }
    std::size_t effective_heads() const { return uses_router() ? heads : 1; }
    std::size_t gmm_k() const { return gmm_components == 0 ? classes : gmm_components; }

    // Throws std::invalid_argument naming the offending field.
    void validate() const;
};

struct LossBreakdown {
    double pred = 0.0;
    double kl = 0.0;
    double fi = 0.0;
    double ebm = 0.0;
    double unc = 0.0;
    double total = 0.0;
    bool unc_ood_missing = false;  // entropy shaping on but no negatives available

    std::string summary() const;
};

struct ForwardResult {
    Tensor z;        // N x d features
    Tensor energy;   // N x 1 (gate variants only)
    Tensor s_hat;    // N x 1 sigmoid of energy
    Tensor gates;    // N x C
    Tensor pi_raw;   // N x K router output
    Tensor pi;       // N x K final mixture weights
    std::vector<Tensor> u;       // K of N x C temperature-divided logits
    Tensor u_mean;               // N x C head average
    std::vector<Tensor> alpha;   // K of N x C final (density-scaled) concentrations
    std::vector<Tensor> head_p;  // K of N x C per-head predictive means
    Tensor p_mix;       // N x C
    Tensor p_hat;       // N x C final prediction
    Tensor alpha0_mix;  // N x 1, sum_k pi_k alpha0^(k)
    std::vector<Tensor> fi;  // K of N x 1 detached sensitivities (when computed)
    Tensor fi_bar;           // N x K normalized sensitivities (when computed)
    std::vector<double> rho;  // density scores (empty when density unused)
    bool fi_applied = false;  // pi was sensitivity-modulated
};

class GemModel {
public:
    GemModel(GemConfig cfg, std::uint64_t seed);

    // labels feed the sensitivity probe during training; absent labels fall
    // back to pseudo-labels from head-averaged logits.
    ForwardResult forward(const Tensor& x, bool training,
                          const std::vector<int>* labels = nullptr,
                          Rng* dropout_rng = nullptr);
    // Pipeline entered at feature level (virtual outliers live there).
    ForwardResult forward_features(const Tensor& z, bool training,
                                   const std::vector<int>* labels = nullptr,
                                   Rng* dropout_rng = nullptr);

    Tensor backbone_features(const Tensor& x, bool training, Rng* dropout_rng);

    // Differentiable total loss; the numeric breakdown lands in `out`.
    Tensor objective(const Tensor& x, const std::vector<int>& labels, std::size_t epoch,
                     Rng* dropout_rng, Rng* vos_rng, LossBreakdown* out);

    // Fits the density machinery (mixture, per-class Gaussians, log-density
    // quantiles) on the given features.
    void fit_density(const Tensor& features, const std::vector<int>& labels,
                     std::uint64_t seed);
    // Eval-time energy calibration over training inputs; fits 1-99% quantile
    // spans for every available energy source.
    void calibrate_energy(const Tensor& x_train);

    // Calibrated in-distribution confidence s in [0,1] per row, from the
    // energy source with the widest quantile span (logit fallback when all
    // spans collapse or no other source exists).
    std::vector<double> energy_confidence_eval(const ForwardResult& f) const;
    // The raw score of the same source, oriented so higher = less support.
    std::vector<double> energy_score_eval(const ForwardResult& f) const;

    static std::vector<int> pseudo_labels(const std::vector<Tensor>& head_logits);

    std::vector<Tensor> parameters();
    const GemConfig& config() const { return cfg_; }

    Mlp backbone;
    HeadSet head_set;
    std::optional<EnergyHead> energy_head;
    std::optional<GateNet> gate;
    std::optional<Router> router;

    std::optional<GmmModel> gmm;
    std::optional<ClassGaussians> class_gauss;
    std::optional<DensityCalibration> density_calib;       // log p(z) on train
    std::optional<DensityCalibration> energy_calib;        // learned head E
    std::optional<DensityCalibration> gmm_energy_calib;    // reference density E
    std::optional<DensityCalibration> logit_energy_calib;  // -log sum exp(u)

private:
    Tensor scaled_concentrations(const Tensor& u_k, const Tensor& rho_col) const;
    std::vector<Tensor> sensitivity_probe(const std::vector<Tensor>& u,
                                          const Tensor& rho_col,
                                          const std::vector<int>& labels) const;

    GemConfig cfg_;
};

// Per-sample logit energies -log sum_c exp(u_c), computed off-tape.
std::vector<double> logit_energy_rows(const Tensor& u);

}  // namespace gem
