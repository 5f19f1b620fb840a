#pragma once

#include <functional>
#include <vector>

#include "gem/tensor.hpp"

namespace gem {

// Differentiable operations over Tensors. Every op validates operand shapes,
// checks the result for NaN/Inf (NumericError names the offending op), and
// records itself on the current Tape when any input requires gradients.
//
// Elementwise binary ops accept equal shapes or a row vector (1xC), column
// vector (Nx1), or scalar (1x1) against an NxC matrix. Nothing broader.

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, double c);
Tensor sub(double c, const Tensor& a);
Tensor mul(const Tensor& a, double c);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor neg(const Tensor& x);

// Log-gamma and digamma, elementwise, domain x > 0.
Tensor lgamma(const Tensor& x);
Tensor digamma(const Tensor& x);

// Clamp convention: gradient passes through strictly inside (lo, hi) and is
// zero elsewhere, including at the boundary itself.
Tensor clip(const Tensor& x, double lo, double hi);

Tensor softmax_rows(const Tensor& x);
// v / row-sum(v); row sums must be >= 1e-30 in magnitude.
Tensor normalize_rows(const Tensor& x);

Tensor sum(const Tensor& x);       // 1x1
Tensor mean(const Tensor& x);      // 1x1
Tensor sum_rows(const Tensor& x);  // Nx1

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);

// out[i,0] = x[i, idx[i]]; idx values must be valid column indices.
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// Constant one-hot matrix (no gradient participation).
Tensor one_hot(const std::vector<int>& labels, std::size_t classes);

struct GradCheckResult {
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::size_t excluded = 0;  // coordinates skipped via the exclusion masks
    bool passed = false;
};

// Compares tape gradients of fn (tensors -> scalar 1x1) against central
// finite differences with step h, coordinate by coordinate. Error metric is
// |g_tape - g_fd| / max(1, |g_tape| + |g_fd|). Coordinates sitting on a
// non-smooth locus (a clip boundary, say) can be excluded via per-input
// masks (1 = skip); they are counted rather than checked.
GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, double h, double tol,
                           const std::vector<std::vector<char>>* exclude = nullptr);

}  // namespace gem
