#include "gem/dirichlet.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gem/error.hpp"
#include "gem/ops.hpp"
#include "gem/special.hpp"

namespace gem {

namespace {

void check_positive_entries(const char* op, const Tensor& t) {
    for (double v : t.data()) {
        if (!(v > 0.0))
            throw std::invalid_argument(std::string(op) + ": entries must be positive, got " +
                                        std::to_string(v));
    }
}

}  // namespace

Tensor alpha_from_logits(const Tensor& u, double tau, double eps, const Tensor& rho) {
    if (!(tau > 0.0)) throw std::invalid_argument("alpha_from_logits: tau must be positive");
    if (!(eps > 0.0)) throw std::invalid_argument("alpha_from_logits: eps must be positive");
    for (double r : rho.data()) {
        if (!(r >= 0.0) || r > 1.0)
            throw std::invalid_argument("alpha_from_logits: rho must lie in [0, 1], got " +
                                        std::to_string(r));
    }
    return add(mul(add(exp(clip(u, -tau, tau)), eps), rho), eps);
}

Tensor alpha_from_logits(const Tensor& u, double tau, double eps) {
    if (!(tau > 0.0)) throw std::invalid_argument("alpha_from_logits: tau must be positive");
    if (!(eps > 0.0)) throw std::invalid_argument("alpha_from_logits: eps must be positive");
    return add(exp(clip(u, -tau, tau)), eps);
}

Tensor predictive_mean(const Tensor& alpha) {
    check_positive_entries("predictive_mean", alpha);
    return div(alpha, sum_rows(alpha));
}

Tensor kl_to_uniform(const Tensor& alpha) {
    check_positive_entries("kl_to_uniform", alpha);
    const double lg_c = lgamma_pos(static_cast<double>(alpha.cols()));
    Tensor a0 = sum_rows(alpha);
    Tensor log_beta = sub(lgamma(a0), sum_rows(lgamma(alpha)));
    Tensor tilt = sum_rows(mul(add(alpha, -1.0), sub(digamma(alpha), digamma(a0))));
    return add(add(log_beta, tilt), -lg_c);
}

Tensor entropy_rows(const Tensor& p) {
    if (!p.defined()) throw std::invalid_argument("entropy_rows: undefined operand");
    const std::size_t N = p.rows(), C = p.cols();
    Tensor out(N, 1);
    detail::TensorNode* pn = p.node();
    detail::TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double v = pn->data[i * C + j];
            if (v < 0.0)
                throw std::invalid_argument("entropy_rows: negative probability " +
                                            std::to_string(v));
            if (v > 0.0) h -= v * std::log(v);
        }
        on->data[i] = h;
    }
    for (double v : on->data) {
        if (!std::isfinite(v)) throw NumericError("entropy_rows: produced a non-finite value");
    }
    if (p.requires_grad()) {
        out.set_requires_grad(true);
        if (Tape* tape = Tape::current()) {
            Tape::Record rec;
            rec.inputs = {p.shared_node()};
            rec.output = out.shared_node();
            // d(-v log v)/dv = -(log v + 1); a zero entry stays zero, so its
            // coordinate is masked rather than sent to infinity
            rec.backward = [pn, on, N, C]() {
                for (std::size_t i = 0; i < N; ++i) {
                    const double g = on->grad[i];
                    for (std::size_t j = 0; j < C; ++j) {
                        const double v = pn->data[i * C + j];
                        if (v > 0.0) pn->grad[i * C + j] += g * (-(std::log(v) + 1.0));
                    }
                }
            };
            tape->push(std::move(rec));
        }
    }
    return out;
}

Tensor mixture_mean(const Tensor& pi, const std::vector<Tensor>& heads) {
    if (heads.empty()) throw std::invalid_argument("mixture_mean: no heads");
    if (pi.cols() != heads.size())
        throw std::invalid_argument("mixture_mean: pi has " + std::to_string(pi.cols()) +
                                    " columns for " + std::to_string(heads.size()) + " heads");
    Tensor acc;
    for (std::size_t k = 0; k < heads.size(); ++k) {
        Tensor term = mul(heads[k], slice_cols(pi, k, k + 1));
        acc = k == 0 ? term : add(acc, term);
    }
    return acc;
}

Tensor mixture_mutual_information(const Tensor& pi, const std::vector<Tensor>& heads) {
    Tensor mix_h = entropy_rows(mixture_mean(pi, heads));
    Tensor within;
    for (std::size_t k = 0; k < heads.size(); ++k) {
        Tensor term = mul(entropy_rows(heads[k]), slice_cols(pi, k, k + 1));
        within = k == 0 ? term : add(within, term);
    }
    return sub(mix_h, within);
}

}  // namespace gem
