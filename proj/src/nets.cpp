#include "gem/nets.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gem/ops.hpp"

namespace gem {

namespace {

double frobenius_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

void normalize_inplace(std::vector<double>& v) {
    double n = std::sqrt(frobenius_sq(v));
    if (n < 1e-30) return;
    for (double& x : v) x /= n;
}

Tensor dropout_mask(std::size_t rows, std::size_t cols, double rate, Rng& rng) {
    Tensor mask(rows, cols);
    const double keep = 1.0 - rate;
    for (double& m : mask.data()) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    return mask;
}

}  // namespace

LinearLayer::LinearLayer(std::size_t in, std::size_t out, bool spectral_norm, Rng& init_rng)
    : sn_enabled(spectral_norm), in_(in), out_(out) {
    if (in == 0 || out == 0) throw std::invalid_argument("LinearLayer: zero dimension");
    W = Tensor(in, out);
    b = Tensor(1, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : W.data()) w = init_rng.uniform(-bound, bound);
    for (double& v : b.data()) v = init_rng.uniform(-bound, bound);
    W.set_requires_grad(true);
    b.set_requires_grad(true);
    if (sn_enabled) {
        sn_u.resize(in);
        sn_v.resize(out);
        for (double& x : sn_u) x = init_rng.normal();
        for (double& x : sn_v) x = init_rng.normal();
        normalize_inplace(sn_u);
        normalize_inplace(sn_v);
        power_iterate(10);
    }
}

void LinearLayer::power_iterate(int iterations) {
    const auto& w = W.data();
    for (int it = 0; it < iterations; ++it) {
        // v <- normalize(W^T u), u <- normalize(W v)
        for (std::size_t j = 0; j < out_; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < in_; ++i) s += w[i * out_ + j] * sn_u[i];
            sn_v[j] = s;
        }
        normalize_inplace(sn_v);
        for (std::size_t i = 0; i < in_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < out_; ++j) s += w[i * out_ + j] * sn_v[j];
            sn_u[i] = s;
        }
        normalize_inplace(sn_u);
    }
}

double LinearLayer::estimated_sigma() const {
    const auto& w = W.data();
    double s = 0.0;
    for (std::size_t i = 0; i < in_; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < out_; ++j) row += w[i * out_ + j] * sn_v[j];
        s += sn_u[i] * row;
    }
    return s;
}

Tensor LinearLayer::forward(const Tensor& x, bool training) {
    if (x.cols() != in_) {
        throw std::invalid_argument("LinearLayer: input has " + std::to_string(x.cols()) +
                                    " columns, layer expects " + std::to_string(in_));
    }
    Tensor weff = W;
    if (sn_enabled) {
        if (frobenius_sq(W.data()) < 1e-60) {
            sn_warned = true;
        } else {
            if (training) {
                TapePause pause;
                power_iterate(1);
            }
            // sigma = u^T W v assembled on-tape so the division contributes
            // the correct gradient through W
            Tensor u = Tensor::from_rows(sn_u, 1, in_);
            Tensor v = Tensor::from_rows(sn_v, out_, 1);
            Tensor sigma = matmul(matmul(u, W), v);
            weff = div(W, sigma);
        }
    }
    return add(matmul(x, weff), b);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, Activation act, double dropout,
         bool spectral_norm, Rng& init_rng)
    : activation(act), dropout_rate(dropout) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    if (dropout < 0.0 || dropout >= 1.0)
        throw std::invalid_argument("Mlp: dropout must be in [0, 1)");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i)
        layers.emplace_back(dims[i], dims[i + 1], spectral_norm, init_rng);
}

Tensor Mlp::forward(const Tensor& x, bool training, Rng* dropout_rng) {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h, training);
        if (i + 1 < layers.size()) {
            h = activation == Activation::relu ? relu(h) : tanh(h);
            if (training && dropout_rate > 0.0 && dropout_rng != nullptr)
                h = mul(h, dropout_mask(h.rows(), h.cols(), dropout_rate, *dropout_rng));
        }
    }
    return h;
}

std::vector<Tensor> Mlp::parameters() {
    std::vector<Tensor> ps;
    for (auto& l : layers) {
        ps.push_back(l.W);
        ps.push_back(l.b);
    }
    return ps;
}

EnergyHead::EnergyHead(std::size_t feat_dim, std::size_t hidden, double dropout,
                       bool spectral_norm, Rng& init_rng, bool use_tanh_)
    : mlp({feat_dim, hidden, 1}, Activation::relu, dropout, spectral_norm, init_rng),
      use_tanh(use_tanh_) {}

Tensor EnergyHead::forward(const Tensor& z, bool training, Rng* dropout_rng) {
    Tensor raw = mlp.forward(z, training, dropout_rng);
    return use_tanh ? tanh(mul(raw, 0.5)) : raw;
}

GateNet::GateNet(std::size_t feat_dim, std::size_t hidden, std::size_t classes, double s_min_,
                 double s_max_, double dropout, bool spectral_norm, Rng& init_rng)
    : mlp({feat_dim + 1, hidden, classes}, Activation::relu, dropout, spectral_norm, init_rng),
      s_min(s_min_),
      s_max(s_max_) {
    if (!(0.0 <= s_min && s_min < s_max && s_max <= 1.0))
        throw std::invalid_argument("GateNet: need 0 <= s_min < s_max <= 1");
}

Tensor GateNet::forward(const Tensor& z, const Tensor& s_hat, bool training, Rng* dropout_rng) {
    Tensor raw = mlp.forward(concat_cols(z, s_hat), training, dropout_rng);
    return add(mul(sigmoid(raw), s_max - s_min), s_min);
}

Router::Router(std::size_t feat_dim, std::size_t hidden, std::size_t k, double dropout,
               bool spectral_norm, Rng& init_rng)
    : mlp({feat_dim + 1, hidden, k}, Activation::relu, dropout, spectral_norm, init_rng) {
    if (k == 0) throw std::invalid_argument("Router: need at least one head");
}

Tensor Router::forward(const Tensor& z, const Tensor& s_hat, bool training, Rng* dropout_rng) {
    return softmax_rows(mlp.forward(concat_cols(z, s_hat), training, dropout_rng));
}

HeadSet::HeadSet(std::size_t k, std::size_t feat_dim, std::size_t hidden, std::size_t classes,
                 double dropout, bool spectral_norm, Rng& init_rng) {
    if (k == 0) throw std::invalid_argument("HeadSet: need at least one head");
    for (std::size_t i = 0; i < k; ++i)
        heads.emplace_back(std::vector<std::size_t>{feat_dim, hidden, classes}, Activation::relu,
                           dropout, spectral_norm, init_rng);
}

Tensor HeadSet::logits(std::size_t k, const Tensor& z, double temperature, bool training,
                       Rng* dropout_rng) {
    if (k >= heads.size()) throw std::invalid_argument("HeadSet: head index out of range");
    if (!(temperature > 0.0)) throw std::invalid_argument("HeadSet: temperature must be positive");
    Tensor raw = heads[k].forward(z, training, dropout_rng);
    return temperature == 1.0 ? raw : mul(raw, 1.0 / temperature);
}

std::vector<Tensor> HeadSet::parameters() {
    std::vector<Tensor> ps;
    for (auto& h : heads) {
        auto hp = h.parameters();
        ps.insert(ps.end(), hp.begin(), hp.end());
    }
    return ps;
}

}  // namespace gem
