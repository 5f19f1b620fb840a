#pragma once

#include <cstddef>
#include <vector>

#include "gem/rng.hpp"
#include "gem/tensor.hpp"

namespace gem {

enum class Activation { relu, tanh };

// Fully connected layer, weights stored input-major (in x out) so a batch
// multiplies from the left. Optional spectral normalization keeps the top
// singular value of the effective weight near 1 via a persistent
// power-iteration state that is advanced once per training forward.
class LinearLayer {
public:
    LinearLayer(std::size_t in, std::size_t out, bool spectral_norm, Rng& init_rng);

    // Advances power iteration when training and sn is on, then applies the
    // (possibly normalized) affine map.
    Tensor forward(const Tensor& x, bool training);

    // Raw power-iteration update; does not touch the tape.
    void power_iterate(int iterations);
    // u^T W v with the current state vectors.
    double estimated_sigma() const;

    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const { return out_; }

    Tensor W;  // in x out
    Tensor b;  // 1 x out
    bool sn_enabled = false;
    bool sn_warned = false;  // set if W was ~zero and normalization was skipped
    std::vector<double> sn_u;  // length in
    std::vector<double> sn_v;  // length out

private:
    std::size_t in_ = 0, out_ = 0;
};

class Mlp {
public:
    // dims = {in, hidden..., out}; activation sits between layers, never
    // after the last one. Dropout (inverted, train only) follows each
    // activation when a dropout rng is supplied.
    Mlp(const std::vector<std::size_t>& dims, Activation act, double dropout,
        bool spectral_norm, Rng& init_rng);

    Tensor forward(const Tensor& x, bool training, Rng* dropout_rng);

    std::vector<Tensor> parameters();
    std::size_t in_dim() const { return layers.front().in_dim(); }
    std::size_t out_dim() const { return layers.back().out_dim(); }

    std::vector<LinearLayer> layers;
    Activation activation = Activation::tanh;
    double dropout_rate = 0.0;
};

// E_psi: feature batch -> one energy per row. The optional tanh squash
// bounds E to (-1, 1) with a halved pre-activation; off by default.
class EnergyHead {
public:
    EnergyHead(std::size_t feat_dim, std::size_t hidden, double dropout, bool spectral_norm,
               Rng& init_rng, bool use_tanh = false);
    Tensor forward(const Tensor& z, bool training, Rng* dropout_rng);
    std::vector<Tensor> parameters() { return mlp.parameters(); }

    Mlp mlp;
    bool use_tanh = false;
};

// G_eta: [z, s_hat] -> per-class gates squashed into [s_min, s_max].
class GateNet {
public:
    GateNet(std::size_t feat_dim, std::size_t hidden, std::size_t classes, double s_min,
            double s_max, double dropout, bool spectral_norm, Rng& init_rng);
    Tensor forward(const Tensor& z, const Tensor& s_hat, bool training, Rng* dropout_rng);
    std::vector<Tensor> parameters() { return mlp.parameters(); }

    Mlp mlp;
    double s_min = 0.1, s_max = 0.9;
};

// h_omega: [z, s_hat] -> K routing weights on the simplex.
class Router {
public:
    Router(std::size_t feat_dim, std::size_t hidden, std::size_t k, double dropout,
           bool spectral_norm, Rng& init_rng);
    Tensor forward(const Tensor& z, const Tensor& s_hat, bool training, Rng* dropout_rng);
    std::vector<Tensor> parameters() { return mlp.parameters(); }

    Mlp mlp;
};

// K evidential heads over a shared feature space, each with its own
// temperature-divided logits.
class HeadSet {
public:
    HeadSet(std::size_t k, std::size_t feat_dim, std::size_t hidden, std::size_t classes,
            double dropout, bool spectral_norm, Rng& init_rng);

    // u^(k) = head_k(z) / T
    Tensor logits(std::size_t k, const Tensor& z, double temperature, bool training,
                  Rng* dropout_rng);
    std::size_t size() const { return heads.size(); }
    std::vector<Tensor> parameters();

    std::vector<Mlp> heads;
};

}  // namespace gem
