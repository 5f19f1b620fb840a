#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gem/rng.hpp"
#include "gem/tensor.hpp"

namespace gem {

// Gaussian mixture over feature space, fit by EM. Covariances are diagonal
// except in dimension <= 2, where the full matrix is cheap and worth having.
struct GmmModel {
    std::size_t n_components = 0;
    std::size_t dim = 0;
    bool full_cov = false;
    std::vector<double> weights;             // K, simplex
    std::vector<std::vector<double>> means;  // K x d
    std::vector<std::vector<double>> covs;   // K x d diagonal, or K x d*d row-major
    bool fitted = false;
    int reseed_events = 0;  // degenerate components restarted during EM
    std::vector<double> fit_loglik;          // per-iteration training log-likelihood

    double log_density(const double* z) const;            // log p(z)
    double component_log_density(std::size_t k, const double* z) const;  // log p(z | k)
    std::vector<double> log_density_rows(const Tensor& z) const;
};

// pre: rows >= 10 * n_components. Initialization is k-means++ seeding under
// the given seed; EM stops when the log-likelihood improves by < tol.
GmmModel gmm_fit(const Tensor& features, std::size_t n_components, std::size_t max_iters,
                 double tol, std::uint64_t seed);

// rho = sigmoid(log p(z))^gamma, strictly increasing in the log-likelihood.
// The sigmoid input is the per-dimension mean log-likelihood.
double rho_score(const GmmModel& model, const double* z, double gamma);
std::vector<double> rho_score_rows(const GmmModel& model, const Tensor& z, double gamma);

// 1% / 99% quantiles of a score over the training set.
struct DensityCalibration {
    double q01 = 0.0;
    double q99 = 0.0;
    double span() const { return q99 - q01; }
    bool degenerate() const { return span() < 1e-6; }
};

DensityCalibration calibrate_scores(std::vector<double> scores);

// rho with the sigmoid input standardized against the training-feature
// log-density range: [q01, q99] maps onto [-1, 1], so typical in-distribution
// points score near 0.5^gamma and the score decays to 0 only well below the
// training range. A degenerate calibration yields the midpoint 0.5^gamma.
// floor > 0 keeps far-off points weakly coupled to the loss during training;
// floor = 0 lets the score vanish entirely so minimal-evidence suppression can
// take over at inference.
double rho_score_calibrated(const GmmModel& model, const DensityCalibration& calib,
                            const double* z, double gamma, double floor = 0.0);
std::vector<double> rho_score_calibrated_rows(const GmmModel& model,
                                              const DensityCalibration& calib, const Tensor& z,
                                              double gamma, double floor = 0.0);

// Linear-interpolation empirical quantile, p in [0, 1].
double quantile(std::vector<double> values, double p);

// lambda = 0.1 + 0.9 * clip((logp - q01) / (q99 - q01), 0, 1); a collapsed
// quantile range yields 1 (no scaling).
double scaled_evidence_lambda(double logp, const DensityCalibration& calib,
                              double lambda_min = 0.1);

// s = clip(1 - (E - q01)/(q99 - q01), 0, 1). Callers should switch to the
// logit-energy fallback themselves when calib.degenerate().
double energy_confidence(double energy, const DensityCalibration& calib);

// Reference density energy: -log sum_k exp(log p(z | k)), components
// unweighted.
double gmm_energy(const GmmModel& model, const double* z);
std::vector<double> gmm_energy_rows(const GmmModel& model, const Tensor& z);

// Per-class diagonal Gaussians over features, the basis for virtual-outlier
// sampling.
struct ClassGaussians {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<std::vector<double>> mean;  // C x d
    std::vector<std::vector<double>> var;   // C x d, floored at 1e-6
    std::vector<std::size_t> count;         // samples seen per class
    bool fitted = false;

    double mahalanobis_sq(std::size_t c, const double* z) const;
};

ClassGaussians fit_class_gaussians(const Tensor& features, const std::vector<int>& labels,
                                   std::size_t classes);

// Draws candidates from N(mu_c, Sigma_c) and keeps the low-density tail:
// Mahalanobis distance above the tail_quantile of a held-out batch of draws.
// tail_quantile <= 0 disables the filter.  Accepted points are stretched away
// from the class mean by a uniform factor in [1, expansion] so the negatives
// span an annulus rather than a thin shell.
Tensor vos_sample(const ClassGaussians& cg, std::size_t c, std::size_t n, double tail_quantile,
                  Rng& rng, double expansion = 1.0);

}  // namespace gem
