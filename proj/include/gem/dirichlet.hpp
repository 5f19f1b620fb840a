#pragma once

#include <vector>

#include "gem/tensor.hpp"

namespace gem {

// Dirichlet evidence math, batched over rows and differentiable when a Tape
// is active. Rows of `u` / `alpha` / `p` are per-sample vectors over classes.

// Density-scaled concentrations: the raw evidence exp(clip(u, -tau, tau)) is
// stabilized by eps, damped by the per-row support score rho in [0, 1], and
// stabilized once more so the result never reaches zero:
//   alpha_c = rho * (exp(clip(u_c)) + eps) + eps.
Tensor alpha_from_logits(const Tensor& u, double tau, double eps, const Tensor& rho);
// Unscaled form alpha_c = exp(clip(u_c)) + eps.
Tensor alpha_from_logits(const Tensor& u, double tau, double eps);

// p_c = alpha_c / alpha0. Invariant under uniform scaling of alpha.
Tensor predictive_mean(const Tensor& alpha);

// KL[Dir(alpha) || Dir(1)] per row, always >= 0. Computed in log-gamma space
// so evidence near e^10 stays in range.
Tensor kl_to_uniform(const Tensor& alpha);

// Shannon entropy per row with the 0*log(0) = 0 convention; range [0, ln C].
Tensor entropy_rows(const Tensor& p);

// MI_i = H(sum_k pi_ik p^k_i) - sum_k pi_ik H(p^k_i), one value per row.
// pi is NxK with rows on the simplex; heads holds K NxC distributions.
Tensor mixture_mutual_information(const Tensor& pi, const std::vector<Tensor>& heads);

// Row-wise convex combination of the head distributions: sum_k pi_ik p^k_i.
Tensor mixture_mean(const Tensor& pi, const std::vector<Tensor>& heads);

}  // namespace gem
