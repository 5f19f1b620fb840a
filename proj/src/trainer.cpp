#include "gem/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>

#include "gem/error.hpp"
#include "gem/metrics.hpp"
#include "gem/rng.hpp"

namespace gem {

AdamW::AdamW(std::vector<Tensor> params, AdamWParams hp) : params_(std::move(params)), hp_(hp) {
    if (!(hp_.beta1 >= 0.0 && hp_.beta1 < 1.0) || !(hp_.beta2 >= 0.0 && hp_.beta2 < 1.0))
        throw std::invalid_argument("AdamW: betas must lie in [0, 1)");
    if (!(hp_.eps > 0.0)) throw std::invalid_argument("AdamW: eps must be positive");
    if (!(hp_.weight_decay >= 0.0))
        throw std::invalid_argument("AdamW: weight_decay must be non-negative");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.defined()) throw std::invalid_argument("AdamW: undefined parameter");
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

bool AdamW::step(double lr) {
    if (!std::isfinite(lr) || lr < 0.0) throw std::invalid_argument("AdamW: bad learning rate");
    for (const Tensor& p : params_) {
        for (double g : p.grad()) {
            if (!std::isfinite(g)) {
                ++skipped_;
                return false;
            }
        }
    }
    ++taken_;
    const double t = static_cast<double>(taken_);
    const double bc1 = 1.0 - std::pow(hp_.beta1, t);
    const double bc2 = 1.0 - std::pow(hp_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = params_[i];
        const std::vector<double>& g = p.grad();
        std::vector<double>& data = p.data();
        std::vector<double>& m = m_[i];
        std::vector<double>& v = v_[i];
        if (g.empty()) {
            // Parameter unreached by backward this step: moments decay, and
            // only the decoupled decay moves the value.
            for (std::size_t j = 0; j < data.size(); ++j) {
                m[j] *= hp_.beta1;
                v[j] *= hp_.beta2;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                data[j] -= lr * (mhat / (std::sqrt(vhat) + hp_.eps) + hp_.weight_decay * data[j]);
            }
            continue;
        }
        for (std::size_t j = 0; j < data.size(); ++j) {
            m[j] = hp_.beta1 * m[j] + (1.0 - hp_.beta1) * g[j];
            v[j] = hp_.beta2 * v[j] + (1.0 - hp_.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            data[j] -= lr * (mhat / (std::sqrt(vhat) + hp_.eps) + hp_.weight_decay * data[j]);
        }
    }
    return true;
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    if (total_steps == 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
    if (step > total_steps) throw std::invalid_argument("cosine_lr: step beyond total_steps");
    const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(frac * 3.14159265358979323846));
}

double clip_global_norm(const std::vector<Tensor>& params, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    double sq = 0.0;
    for (const Tensor& p : params)
        for (double g : p.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (const Tensor& p : params) {
            // Handle copies share storage; the const ref only pins the list.
            std::vector<double>& g = const_cast<Tensor&>(p).grad();
            for (double& v : g) v *= scale;
        }
    }
    return norm;
}

void TrainSchedule::validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainSchedule: batch_size must be >= 1");
    if (!(base_lr > 0.0)) throw std::invalid_argument("TrainSchedule: base_lr must be positive");
    if (!(weight_decay >= 0.0))
        throw std::invalid_argument("TrainSchedule: weight_decay must be non-negative");
    if (!(clip_norm > 0.0)) throw std::invalid_argument("TrainSchedule: clip_norm must be positive");
    if (density_refit_every < 1)
        throw std::invalid_argument("TrainSchedule: density_refit_every must be >= 1");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("TrainSchedule: val_fraction must lie in [0, 1)");
}

TrainResult fit(GemModel& model, Dataset data, const TrainSchedule& sched, std::uint64_t seed) {
    sched.validate();
    retag_validation(data, sched.val_fraction, seed);
    Dataset train = data.filter(Split::train);
    Dataset val = data.filter(Split::val);
    if (train.size() == 0) throw std::invalid_argument("fit: no training rows");

    Rng data_rng = Rng::substream(seed, "data");
    Rng dropout_rng = Rng::substream(seed, "dropout");
    Rng vos_rng = Rng::substream(seed, "vos");

    std::vector<Tensor> params = model.parameters();
    AdamWParams hp;
    hp.weight_decay = sched.weight_decay;
    AdamW opt(params, hp);

    auto refit_density = [&]() {
        TapePause pause;
        Tensor feats = model.backbone_features(train.X, /*training=*/false, nullptr);
        model.fit_density(feats, train.y, seed);
    };

    TrainResult result;
    if (sched.epochs == 0) {
        // No optimization, but the artifact stays usable: density and energy
        // calibration reflect the initial representation.
        refit_density();
        model.calibrate_energy(train.X);
        return result;
    }

    const std::size_t n = train.size();
    const std::size_t d = train.dim();
    const std::size_t batches = (n + sched.batch_size - 1) / sched.batch_size;
    const std::size_t total_steps = sched.epochs * batches;
    std::size_t step = 0;
    LossBreakdown last_good;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t e = 0; e < sched.epochs; ++e) {
        if (e % sched.density_refit_every == 0) refit_density();
        data_rng.shuffle(order);

        EpochRow row;
        row.epoch = e + 1;
        row.lr = cosine_lr(step, total_steps, sched.base_lr);

        for (std::size_t b = 0; b < batches; ++b) {
            const std::size_t lo = b * sched.batch_size;
            const std::size_t hi = std::min(n, lo + sched.batch_size);
            Tensor xb(hi - lo, d);
            std::vector<int> yb(hi - lo);
            for (std::size_t r = lo; r < hi; ++r) {
                const std::size_t src = order[r];
                for (std::size_t j = 0; j < d; ++j) xb.at(r - lo, j) = train.X.at(src, j);
                yb[r - lo] = train.y[src];
            }

            const double lr = cosine_lr(step, total_steps, sched.base_lr);
            opt.zero_grad();
            LossBreakdown bd;
            try {
                Tape tape;
                Tensor loss = model.objective(xb, yb, e, &dropout_rng, &vos_rng, &bd);
                tape.backward(loss);
            } catch (const NumericError& err) {
                throw TrainAbort(std::string("training diverged at epoch ") +
                                 std::to_string(e + 1) + ": " + err.what() +
                                 "; last stable losses: " + last_good.summary());
            }
            if (!std::isfinite(bd.total))
                throw TrainAbort("training diverged at epoch " + std::to_string(e + 1) +
                                 ": non-finite loss; last stable losses: " +
                                 last_good.summary());
            last_good = bd;
            clip_global_norm(params, sched.clip_norm);
            opt.step(lr);
            ++step;

            row.loss.pred += bd.pred;
            row.loss.kl += bd.kl;
            row.loss.fi += bd.fi;
            row.loss.ebm += bd.ebm;
            row.loss.unc += bd.unc;
            row.loss.total += bd.total;
            row.loss.unc_ood_missing = row.loss.unc_ood_missing || bd.unc_ood_missing;
        }
        const double inv_b = 1.0 / static_cast<double>(batches);
        row.loss.pred *= inv_b;
        row.loss.kl *= inv_b;
        row.loss.fi *= inv_b;
        row.loss.ebm *= inv_b;
        row.loss.unc *= inv_b;
        row.loss.total *= inv_b;

        if (val.size() > 0) {
            TapePause pause;
            ForwardResult fv = model.forward(val.X, /*training=*/false, nullptr, nullptr);
            CalibrationReport rep = calibration_report(fv.p_hat, val.y, 15);
            row.val_acc = rep.accuracy;
            row.val_ece = rep.ece;
        }
        result.history.push_back(row);
    }

    // Terminal refresh: density and calibration against the final features.
    refit_density();
    model.calibrate_energy(train.X);
    {
        TapePause pause;
        ForwardResult ft = model.forward(train.X, /*training=*/false, nullptr, nullptr);
        result.final_train_acc = accuracy(ft.p_hat, train.y);
    }
    result.skipped_steps = opt.steps_skipped();
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    out << "epoch,lr,pred,kl,fi,ebm,unc,total,val_acc,val_ece\n";
    char buf[320];
    for (const EpochRow& r : rows) {
        std::snprintf(buf, sizeof buf,
                      "%zu,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", r.epoch,
                      r.lr, r.loss.pred, r.loss.kl, r.loss.fi, r.loss.ebm, r.loss.unc,
                      r.loss.total, r.val_acc, r.val_ece);
        out << buf;
    }
    if (!out) throw std::runtime_error("write_history_csv: write failed for " + path);
}

}  // namespace gem
