#include "gem/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "gem/dirichlet.hpp"
#include "gem/error.hpp"
#include "gem/ops.hpp"

namespace gem {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::edl_baseline: return "edl";
        case Variant::daedl_baseline: return "daedl";
        case Variant::core: return "core";
        case Variant::mix: return "mix";
        case Variant::fi: return "fi";
    }
    throw std::logic_error("variant_name: unknown variant");
}

Variant variant_from_name(const std::string& name) {
    if (name == "edl") return Variant::edl_baseline;
    if (name == "daedl") return Variant::daedl_baseline;
    if (name == "core") return Variant::core;
    if (name == "mix") return Variant::mix;
    if (name == "fi") return Variant::fi;
    throw std::invalid_argument("unknown variant '" + name +
                                "' (expected edl, daedl, core, mix, or fi)");
}

void GemConfig::validate() const {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("GemConfig: " + msg); };
    if (input_dim == 0) fail("input_dim must be positive");
    if (classes < 2) fail("classes must be at least 2");
    if (feat_dim == 0) fail("feat_dim must be positive");
    if (aux_hidden == 0) fail("aux_hidden must be positive");
    if (heads < 1) fail("heads must be at least 1");
    if (!(tau > 0.0)) fail("tau must be positive");
    if (!(eps > 0.0)) fail("eps must be positive");
    if (!(eps_prime > 0.0)) fail("eps_prime must be positive");
    if (!(gamma > 0.0)) fail("gamma must be positive");
    if (!(s_min > 0.0 && s_min < s_max && s_max < 1.0))
        fail("gate bounds must satisfy 0 < s_min < s_max < 1");
    if (!(temperature > 0.0)) fail("temperature must be positive");
    for (double w : {lambda_kl, lambda_fi, lambda_ebm, lambda_unc, beta_id, beta_ood, beta_trace})
        if (!(w >= 0.0)) fail("loss weights must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
    if (!(component_dropout >= 0.0 && component_dropout < 1.0))
        fail("component_dropout must lie in [0, 1)");
    if (!(lambda_min > 0.0 && lambda_min <= 1.0)) fail("lambda_min must lie in (0, 1]");
    if ((fi_reg || fi_mod) && variant != Variant::fi)
        fail("fi_reg/fi_mod require the fi variant");
    if ((ebm || unc || vos) && !uses_gate())
        fail("ebm/unc/vos require a gated variant (core, mix, or fi)");
    if (vos && !ebm) fail("vos requires ebm");
    if (!(vos_params.weight >= 0.0)) fail("vos weight must be non-negative");
    if (!std::isfinite(vos_params.margin)) fail("vos margin must be finite");
    if (!(vos_params.tail_quantile < 1.0)) fail("vos tail_quantile must be below 1");
    if (vos_params.per_class < 1) fail("vos per_class must be at least 1");
    if (!(vos_params.expansion >= 1.0)) fail("vos expansion must be at least 1");
}

std::string LossBreakdown::summary() const {
    char buf[256];
    std::snprintf(buf, sizeof buf, "pred=%.6g kl=%.6g fi=%.6g ebm=%.6g unc=%.6g total=%.6g%s",
                  pred, kl, fi, ebm, unc, total, unc_ood_missing ? " [no ood batch]" : "");
    return buf;
}

namespace {

constexpr double kTrainRhoFloor = 1e-3;

std::vector<std::size_t> backbone_dims(const GemConfig& c) {
    std::vector<std::size_t> dims;
    dims.push_back(c.input_dim);
    dims.insert(dims.end(), c.backbone_hidden.begin(), c.backbone_hidden.end());
    dims.push_back(c.feat_dim);
    return dims;
}

Mlp build_backbone(const GemConfig& c, std::uint64_t seed) {
    c.validate();
    Rng rng = Rng::substream(seed, "init/backbone");
    return Mlp(backbone_dims(c), c.activation, c.dropout, c.sn, rng);
}

HeadSet build_heads(const GemConfig& c, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, "init/heads");
    // Spectral normalization covers the backbone and the auxiliary gating
    // pathway only.  The evidential heads stay unconstrained: they must be able
    // to scale logits freely on confident in-distribution inputs, while the
    // norm-bounded backbone is what keeps off-support features from drifting
    // outside the region covered by the virtual negatives.
    return HeadSet(c.effective_heads(), c.feat_dim, c.aux_hidden, c.classes, c.dropout,
                   /*sn=*/false, rng);
}

}  // namespace

GemModel::GemModel(GemConfig cfg, std::uint64_t seed)
    : backbone(build_backbone(cfg, seed)), head_set(build_heads(cfg, seed)), cfg_(cfg) {
    if (cfg_.uses_gate()) {
        Rng er = Rng::substream(seed, "init/energy");
        energy_head.emplace(cfg_.feat_dim, cfg_.aux_hidden, cfg_.component_dropout, cfg_.sn, er,
                            cfg_.tanh_energy);
        Rng gr = Rng::substream(seed, "init/gate");
        gate.emplace(cfg_.feat_dim, cfg_.aux_hidden, cfg_.classes, cfg_.s_min, cfg_.s_max,
                     cfg_.component_dropout, cfg_.sn, gr);
    }
    if (cfg_.uses_router()) {
        Rng rr = Rng::substream(seed, "init/router");
        router.emplace(cfg_.feat_dim, cfg_.aux_hidden, cfg_.heads, cfg_.component_dropout,
                       cfg_.sn, rr);
    }
}

Tensor GemModel::backbone_features(const Tensor& x, bool training, Rng* dropout_rng) {
    if (!x.defined() || x.cols() != cfg_.input_dim)
        throw std::invalid_argument("GemModel: input must have " +
                                    std::to_string(cfg_.input_dim) + " columns");
    return backbone.forward(x, training, dropout_rng);
}

ForwardResult GemModel::forward(const Tensor& x, bool training, const std::vector<int>* labels,
                                Rng* dropout_rng) {
    return forward_features(backbone_features(x, training, dropout_rng), training, labels,
                            dropout_rng);
}

ForwardResult GemModel::forward_features(const Tensor& z, bool training,
                                         const std::vector<int>* labels, Rng* dropout_rng) {
    if (!z.defined() || z.cols() != cfg_.feat_dim)
        throw std::invalid_argument("GemModel: features must have " +
                                    std::to_string(cfg_.feat_dim) + " columns");
    ForwardResult f;
    f.z = z;
    const std::size_t n = z.rows();
    const std::size_t k_heads = cfg_.effective_heads();

    if (cfg_.uses_gate()) {
        f.energy = energy_head->forward(z, training, dropout_rng);
        f.s_hat = sigmoid(f.energy);
    }

    f.u.reserve(k_heads);
    for (std::size_t k = 0; k < k_heads; ++k)
        f.u.push_back(head_set.logits(k, z, cfg_.temperature, training, dropout_rng));
    f.u_mean = f.u[0];
    for (std::size_t k = 1; k < k_heads; ++k) f.u_mean = add(f.u_mean, f.u[k]);
    if (k_heads > 1) f.u_mean = mul(f.u_mean, 1.0 / static_cast<double>(k_heads));

    if (cfg_.uses_router())
        f.pi_raw = router->forward(z, f.s_hat, training, dropout_rng);
    else
        f.pi_raw = Tensor(n, 1, 1.0);

    // Per-head concentrations, density-scaled where the variant calls for it.
    Tensor rho_col;
    if (cfg_.uses_gate()) {
        if (!gmm || !gmm->fitted || !density_calib)
            throw std::logic_error(
                "GemModel: density model not fitted; call fit_density before forward");
        // During optimization the density multiplier is floored: a row whose
        // multiplier underflows to zero would detach its logits from the loss
        // and its uniform concentrations would blow up the prior KL term.  At
        // inference the floor comes off so genuinely unsupported inputs fall
        // all the way to minimal evidence and a flat predictive distribution.
        f.rho = rho_score_calibrated_rows(*gmm, *density_calib, z, cfg_.gamma,
                                          training ? kTrainRhoFloor : 0.0);
        rho_col = Tensor::column(f.rho);
        f.alpha.reserve(k_heads);
        for (std::size_t k = 0; k < k_heads; ++k)
            f.alpha.push_back(alpha_from_logits(f.u[k], cfg_.tau, cfg_.eps, rho_col));
    } else if (cfg_.variant == Variant::daedl_baseline) {
        if (!gmm || !gmm->fitted || !density_calib)
            throw std::logic_error(
                "GemModel: density scaling not fitted; call fit_density before forward");
        std::vector<double> logp = gmm->log_density_rows(z);
        f.rho.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            f.rho[i] = scaled_evidence_lambda(logp[i], *density_calib, cfg_.lambda_min);
        f.alpha.push_back(
            alpha_from_logits(mul(f.u[0], Tensor::column(f.rho)), cfg_.tau, cfg_.eps));
    } else {
        f.alpha.push_back(alpha_from_logits(f.u[0], cfg_.tau, cfg_.eps));
    }

    // Sensitivity probe: training only, and only when some consumer needs it.
    if (training && cfg_.variant == Variant::fi && (cfg_.fi_mod || cfg_.fi_reg)) {
        std::vector<int> probe_y = labels ? *labels : pseudo_labels(f.u);
        f.fi = sensitivity_probe(f.u, rho_col, probe_y);
        f.fi_bar = Tensor(n, k_heads);
        for (std::size_t i = 0; i < n; ++i) {
            double total = 0.0;
            for (std::size_t k = 0; k < k_heads; ++k) total += f.fi[k].at(i, 0);
            for (std::size_t k = 0; k < k_heads; ++k)
                f.fi_bar.at(i, k) = f.fi[k].at(i, 0) / (total + cfg_.eps);
        }
    }

    if (cfg_.uses_router() && training && cfg_.fi_mod && f.fi_bar.defined()) {
        Tensor w(n, k_heads);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < k_heads; ++k)
                w.at(i, k) = std::exp(cfg_.lambda_fi * (1.0 - f.fi_bar.at(i, k)));
        f.pi = normalize_rows(add(mul(f.pi_raw, w), cfg_.eps_prime));
        f.fi_applied = true;
    } else {
        f.pi = f.pi_raw;
    }

    f.head_p.reserve(k_heads);
    for (std::size_t k = 0; k < k_heads; ++k) f.head_p.push_back(predictive_mean(f.alpha[k]));
    f.p_mix = mixture_mean(f.pi, f.head_p);

    for (std::size_t k = 0; k < k_heads; ++k) {
        Tensor term = mul(sum_rows(f.alpha[k]), slice_cols(f.pi, k, k + 1));
        f.alpha0_mix = k == 0 ? term : add(f.alpha0_mix, term);
    }

    if (cfg_.uses_gate()) {
        f.gates = gate->forward(z, f.s_hat, training, dropout_rng);
        f.p_hat = normalize_rows(mul(f.p_mix, f.gates));
    } else {
        f.p_hat = f.p_mix;
    }
    return f;
}

std::vector<int> GemModel::pseudo_labels(const std::vector<Tensor>& head_logits) {
    if (head_logits.empty()) throw std::invalid_argument("pseudo_labels: no head logits");
    const std::size_t n = head_logits[0].rows();
    const std::size_t c = head_logits[0].cols();
    const double inv_k = 1.0 / static_cast<double>(head_logits.size());
    std::vector<int> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            double avg = 0.0;
            for (const Tensor& u : head_logits) avg += u.at(i, j);
            avg *= inv_k;
            if (avg > best) {  // strict: ties resolve to the lowest class index
                best = avg;
                out[i] = static_cast<int>(j);
            }
        }
    }
    return out;
}

std::vector<Tensor> GemModel::sensitivity_probe(const std::vector<Tensor>& u,
                                                const Tensor& rho_col,
                                                const std::vector<int>& labels) const {
    std::vector<Tensor> out;
    out.reserve(u.size());
    for (const Tensor& uk : u) {
        if (labels.size() != uk.rows())
            throw std::invalid_argument("sensitivity_probe: label count mismatch");
        Tensor u_det = uk.detach_copy();
        u_det.set_requires_grad(true);
        {
            Tape probe;
            Tensor abar = rho_col.defined()
                              ? alpha_from_logits(u_det, cfg_.tau, cfg_.eps, rho_col)
                              : alpha_from_logits(u_det, cfg_.tau, cfg_.eps);
            Tensor log_py = log(gather_rows(predictive_mean(abar), labels));
            probe.backward(sum(log_py));
        }
        const std::vector<double>& g = u_det.grad();
        const std::size_t n = uk.rows(), c = uk.cols();
        Tensor fi_k(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * g[i * c + j];
            fi_k.at(i, 0) = s;
        }
        out.push_back(fi_k);
    }
    return out;
}

Tensor GemModel::objective(const Tensor& x, const std::vector<int>& labels, std::size_t epoch,
                           Rng* dropout_rng, Rng* vos_rng, LossBreakdown* out) {
    if (labels.size() != x.rows())
        throw std::invalid_argument("objective: labels/batch size mismatch");
    ForwardResult f = forward(x, /*training=*/true, &labels, dropout_rng);
    LossBreakdown bd;

    Tensor pred;
    if (cfg_.mixture_loss()) {
        pred = neg(mean(log(add(gather_rows(f.p_hat, labels), 1e-12))));
    } else {
        Tensor residual = sub(one_hot(labels, cfg_.classes), f.p_hat);
        pred = mean(sum_rows(square(residual)));
    }

    Tensor kl;
    if (cfg_.mixture_loss()) {
        Tensor acc;
        for (std::size_t k = 0; k < f.alpha.size(); ++k) {
            Tensor term = mul(kl_to_uniform(f.alpha[k]), slice_cols(f.pi, k, k + 1));
            acc = k == 0 ? term : add(acc, term);
        }
        kl = mean(acc);
    } else {
        kl = mean(kl_to_uniform(f.alpha[0]));
    }

    Tensor fi_term;
    if (cfg_.fi_reg) {
        if (f.fi.empty()) throw std::logic_error("objective: fi_reg on but no sensitivities");
        Tensor acc;
        double trace = 0.0;
        for (std::size_t k = 0; k < f.fi.size(); ++k) {
            Tensor term = mul(f.fi[k], slice_cols(f.pi, k, k + 1));
            acc = k == 0 ? term : add(acc, term);
            for (std::size_t i = 0; i < f.fi[k].rows(); ++i) trace += f.fi[k].at(i, 0);
        }
        trace /= static_cast<double>(f.fi.size() * x.rows());
        fi_term = add(mean(acc), cfg_.beta_trace * trace);
    }

    // Virtual outliers feed both the energy margin and the entropy shaping.
    Tensor neg_feats;
    const bool negatives_active = cfg_.vos && epoch >= cfg_.vos_params.warmup_epochs;
    if (negatives_active) {
        if (!class_gauss || !class_gauss->fitted)
            throw std::logic_error(
                "objective: virtual outliers need fitted per-class Gaussians");
        if (!vos_rng) throw std::invalid_argument("objective: vos enabled but no vos rng");
        std::vector<double> rows;
        std::size_t count = 0;
        for (std::size_t c = 0; c < class_gauss->classes; ++c) {
            if (class_gauss->count[c] == 0) continue;
            Tensor draw = vos_sample(*class_gauss, c, cfg_.vos_params.per_class,
                                     cfg_.vos_params.tail_quantile, *vos_rng,
                                     cfg_.vos_params.expansion);
            rows.insert(rows.end(), draw.data().begin(), draw.data().end());
            count += draw.rows();
        }
        if (count > 0) neg_feats = Tensor::from_rows(std::move(rows), count, cfg_.feat_dim);
    }

    Tensor ebm_term;
    if (cfg_.ebm) {
        ebm_term = mean(softplus(clip(f.energy, -cfg_.tau, cfg_.tau)));
        if (neg_feats.defined()) {
            Tensor e_neg = energy_head->forward(neg_feats, /*training=*/true, dropout_rng);
            Tensor margin = mean(softplus(sub(cfg_.vos_params.margin, e_neg)));
            ebm_term = add(ebm_term, mul(margin, cfg_.vos_params.weight));
        }
    }

    Tensor unc_term;
    if (cfg_.unc) {
        Tensor h_id = mean(entropy_rows(f.p_hat));
        if (neg_feats.defined()) {
            ForwardResult fo = forward_features(neg_feats, /*training=*/true, nullptr,
                                                dropout_rng);
            Tensor h_ood = mean(entropy_rows(fo.p_hat));
            unc_term = sub(mul(h_id, cfg_.beta_id), mul(h_ood, cfg_.beta_ood));
        } else {
            unc_term = mul(h_id, cfg_.beta_id);
            bd.unc_ood_missing = true;
        }
    }

    Tensor total = add(pred, mul(kl, cfg_.lambda_kl));
    if (fi_term.defined()) total = add(total, mul(fi_term, cfg_.lambda_fi));
    if (ebm_term.defined()) total = add(total, mul(ebm_term, cfg_.lambda_ebm));
    if (unc_term.defined()) total = add(total, mul(unc_term, cfg_.lambda_unc));

    bd.pred = pred.value();
    bd.kl = kl.value();
    bd.fi = fi_term.defined() ? fi_term.value() : 0.0;
    bd.ebm = ebm_term.defined() ? ebm_term.value() : 0.0;
    bd.unc = unc_term.defined() ? unc_term.value() : 0.0;
    bd.total = total.value();
    if (out) *out = bd;
    return total;
}

void GemModel::fit_density(const Tensor& features, const std::vector<int>& labels,
                           std::uint64_t seed) {
    if (cfg_.uses_density()) {
        gmm = gmm_fit(features, cfg_.gmm_k(), 200, 1e-6, seed);
        density_calib = calibrate_scores(gmm->log_density_rows(features));
    }
    if (cfg_.vos) class_gauss = fit_class_gaussians(features, labels, cfg_.classes);
}

void GemModel::calibrate_energy(const Tensor& x_train) {
    TapePause pause;
    ForwardResult f = forward(x_train, /*training=*/false, nullptr, nullptr);
    if (energy_head) {
        std::vector<double> e(f.energy.data().begin(), f.energy.data().end());
        energy_calib = calibrate_scores(std::move(e));
    }
    if (gmm && gmm->fitted) gmm_energy_calib = calibrate_scores(gmm_energy_rows(*gmm, f.z));
    logit_energy_calib = calibrate_scores(logit_energy_rows(f.u_mean));
}

namespace {

// 0 = learned energy head, 1 = reference density energy, 2 = logit fallback.
struct EnergyPick {
    int source = 2;
    const DensityCalibration* calib = nullptr;
};

EnergyPick pick_energy_source(const GemModel& m, const ForwardResult& f) {
    EnergyPick pick;
    double best_span = -1.0;
    if (m.energy_calib && !m.energy_calib->degenerate() && f.energy.defined() &&
        m.energy_calib->span() > best_span) {
        pick = {0, &*m.energy_calib};
        best_span = m.energy_calib->span();
    }
    if (m.gmm_energy_calib && !m.gmm_energy_calib->degenerate() && m.gmm && m.gmm->fitted &&
        m.gmm_energy_calib->span() > best_span) {
        pick = {1, &*m.gmm_energy_calib};
        best_span = m.gmm_energy_calib->span();
    }
    if (pick.calib == nullptr) {
        if (!m.logit_energy_calib)
            throw std::logic_error("energy confidence requested before calibrate_energy");
        pick = {2, &*m.logit_energy_calib};
    }
    return pick;
}

std::vector<double> energy_values(const GemModel& m, const ForwardResult& f, int source) {
    switch (source) {
        case 0: return {f.energy.data().begin(), f.energy.data().end()};
        case 1: return gmm_energy_rows(*m.gmm, f.z);
        default: return logit_energy_rows(f.u_mean);
    }
}

}  // namespace

std::vector<double> GemModel::energy_confidence_eval(const ForwardResult& f) const {
    EnergyPick pick = pick_energy_source(*this, f);
    std::vector<double> e = energy_values(*this, f, pick.source);
    for (double& v : e) v = energy_confidence(v, *pick.calib);
    return e;
}

std::vector<double> GemModel::energy_score_eval(const ForwardResult& f) const {
    EnergyPick pick = pick_energy_source(*this, f);
    return energy_values(*this, f, pick.source);
}

std::vector<Tensor> GemModel::parameters() {
    std::vector<Tensor> ps = backbone.parameters();
    auto append = [&ps](std::vector<Tensor> more) {
        for (Tensor& t : more) ps.push_back(std::move(t));
    };
    append(head_set.parameters());
    if (energy_head) append(energy_head->parameters());
    if (gate) append(gate->parameters());
    if (router) append(router->parameters());
    return ps;
}

std::vector<double> logit_energy_rows(const Tensor& u) {
    if (!u.defined()) throw std::invalid_argument("logit_energy_rows: undefined logits");
    const std::size_t n = u.rows(), c = u.cols();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double m = u.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, u.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += std::exp(u.at(i, j) - m);
        out[i] = -(m + std::log(s));
    }
    return out;
}

}  // namespace gem
