#include "gem/density.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "gem/error.hpp"

namespace gem {

namespace {

constexpr double kVarFloor = 1e-6;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logsumexp(const std::vector<double>& v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

double diag_log_pdf(const double* z, const std::vector<double>& mean,
                    const std::vector<double>& var) {
    const std::size_t d = mean.size();
    double logdet = 0.0, quad = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        logdet += std::log(var[j]);
        const double dx = z[j] - mean[j];
        quad += dx * dx / var[j];
    }
    return -0.5 * (static_cast<double>(d) * kLog2Pi + logdet + quad);
}

double full2_log_pdf(const double* z, const std::vector<double>& mean,
                     const std::vector<double>& cov) {
    const double a = cov[0], b = cov[1], c = cov[3];
    const double det = a * c - b * b;
    const double dx = z[0] - mean[0], dy = z[1] - mean[1];
    const double quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    return -0.5 * (2.0 * kLog2Pi + std::log(det) + quad);
}

// Shrinks the off-diagonal to keep a 2x2 covariance safely positive definite.
void sanitize_full2(std::vector<double>& cov, double floor_x, double floor_y) {
    cov[0] = std::max(cov[0], floor_x);
    cov[3] = std::max(cov[3], floor_y);
    cov[2] = cov[1];
    if (cov[0] * cov[3] - cov[1] * cov[1] < 1e-12) {
        cov[1] = cov[2] = 0.0;
    }
}

}  // namespace

double GmmModel::component_log_density(std::size_t k, const double* z) const {
    if (!fitted) throw std::invalid_argument("GmmModel: not fitted");
    if (k >= n_components) throw std::invalid_argument("GmmModel: component out of range");
    return full_cov && dim == 2 ? full2_log_pdf(z, means[k], covs[k])
                                : diag_log_pdf(z, means[k], covs[k]);
}

double GmmModel::log_density(const double* z) const {
    if (!fitted) throw std::invalid_argument("GmmModel: not fitted");
    std::vector<double> lp(n_components);
    for (std::size_t k = 0; k < n_components; ++k)
        lp[k] = std::log(weights[k]) + component_log_density(k, z);
    return logsumexp(lp);
}

std::vector<double> GmmModel::log_density_rows(const Tensor& z) const {
    if (z.cols() != dim) throw std::invalid_argument("GmmModel: feature dimension mismatch");
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i) out[i] = log_density(&z.data()[i * dim]);
    return out;
}

GmmModel gmm_fit(const Tensor& features, std::size_t n_components, std::size_t max_iters,
                 double tol, std::uint64_t seed) {
    const std::size_t N = features.rows(), d = features.cols();
    if (n_components == 0) throw std::invalid_argument("gmm_fit: need at least one component");
    if (N < 10 * n_components) {
        throw std::invalid_argument("gmm_fit: need at least 10 samples per component, have " +
                                    std::to_string(N) + " for " + std::to_string(n_components));
    }
    const auto& x = features.data();
    Rng rng = Rng::substream(seed, "gmm_fit");

    GmmModel m;
    m.n_components = n_components;
    m.dim = d;
    m.full_cov = d == 2;

    std::vector<double> gmean(d, 0.0), gvar(d, 0.0);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < d; ++j) gmean[j] += x[i * d + j];
    for (double& v : gmean) v /= static_cast<double>(N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = x[i * d + j] - gmean[j];
            gvar[j] += dx * dx;
        }
    for (double& v : gvar) v = std::max(v / static_cast<double>(N), kVarFloor);

    // Component variances are floored at a quarter of the average global
    // spread. The mixture backs a coarse support score, not a sharp density:
    // needle-thin components make the log-density collapse by hundreds of nats
    // under small feature perturbations (dropout, drift between refits), which
    // saturates the downstream sigmoid to exactly zero and kills gradients.
    double mean_gvar = 0.0;
    for (double v : gvar) mean_gvar += v;
    mean_gvar /= static_cast<double>(d);
    std::vector<double> vfloor(d, std::max(0.25 * mean_gvar, kVarFloor));

    auto global_cov = [&]() {
        if (!m.full_cov) return gvar;
        std::vector<double> c = {gvar[0], 0.0, 0.0, gvar[1]};
        return c;
    };

    // k-means++ seeding
    std::vector<std::size_t> centers;
    centers.push_back(rng.index(N));
    std::vector<double> dist2(N, std::numeric_limits<double>::infinity());
    while (centers.size() < n_components) {
        const std::size_t last = centers.back();
        double total = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            double d2 = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                const double dx = x[i * d + j] - x[last * d + j];
                d2 += dx * dx;
            }
            dist2[i] = std::min(dist2[i], d2);
            total += dist2[i];
        }
        if (total <= 0.0) {
            centers.push_back(rng.index(N));
            continue;
        }
        double u = rng.uniform() * total;
        std::size_t pick = N - 1;
        for (std::size_t i = 0; i < N; ++i) {
            u -= dist2[i];
            if (u <= 0.0) {
                pick = i;
                break;
            }
        }
        centers.push_back(pick);
    }

    m.weights.assign(n_components, 1.0 / static_cast<double>(n_components));
    for (std::size_t k = 0; k < n_components; ++k) {
        m.means.emplace_back(x.begin() + centers[k] * d, x.begin() + (centers[k] + 1) * d);
        m.covs.push_back(global_cov());
    }
    m.fitted = true;

    std::vector<double> resp(N * n_components);
    std::vector<double> lp(n_components);
    double prev_ll = -std::numeric_limits<double>::infinity();
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        double ll = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < n_components; ++k)
                lp[k] = std::log(m.weights[k]) + m.component_log_density(k, &x[i * d]);
            const double lse = logsumexp(lp);
            ll += lse;
            for (std::size_t k = 0; k < n_components; ++k)
                resp[i * n_components + k] = std::exp(lp[k] - lse);
        }
        m.fit_loglik.push_back(ll);
        if (ll - prev_ll < tol && iter > 0) break;
        prev_ll = ll;

        for (std::size_t k = 0; k < n_components; ++k) {
            double nk = 0.0;
            for (std::size_t i = 0; i < N; ++i) nk += resp[i * n_components + k];
            if (nk < 1e-8) {
                // nothing claims this component: restart it at a random datum
                const std::size_t pick = rng.index(N);
                m.means[k].assign(x.begin() + pick * d, x.begin() + (pick + 1) * d);
                m.covs[k] = global_cov();
                m.weights[k] = 1.0 / static_cast<double>(N);
                ++m.reseed_events;
                continue;
            }
            for (std::size_t j = 0; j < d; ++j) {
                double s = 0.0;
                for (std::size_t i = 0; i < N; ++i) s += resp[i * n_components + k] * x[i * d + j];
                m.means[k][j] = s / nk;
            }
            if (m.full_cov) {
                double sxx = 0.0, sxy = 0.0, syy = 0.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double r = resp[i * n_components + k];
                    const double dx = x[i * d] - m.means[k][0];
                    const double dy = x[i * d + 1] - m.means[k][1];
                    sxx += r * dx * dx;
                    sxy += r * dx * dy;
                    syy += r * dy * dy;
                }
                m.covs[k] = {sxx / nk, sxy / nk, sxy / nk, syy / nk};
                sanitize_full2(m.covs[k], vfloor[0], vfloor[1]);
            } else {
                for (std::size_t j = 0; j < d; ++j) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < N; ++i) {
                        const double dx = x[i * d + j] - m.means[k][j];
                        s += resp[i * n_components + k] * dx * dx;
                    }
                    m.covs[k][j] = std::max(s / nk, vfloor[j]);
                }
            }
            m.weights[k] = nk / static_cast<double>(N);
        }
        double wsum = 0.0;
        for (double w : m.weights) wsum += w;
        for (double& w : m.weights) w /= wsum;
    }
    return m;
}

double rho_score(const GmmModel& model, const double* z, double gamma) {
    if (!model.fitted) throw std::invalid_argument("rho_score: model not fitted");
    if (!(gamma > 0.0)) throw std::invalid_argument("rho_score: gamma must be positive");
    // Per-dimension mean log-likelihood keeps the sigmoid in its live range
    // regardless of feature dimensionality; raw joint log-densities scale with
    // dim and would saturate the score to 0 for any realistic feature width.
    const double lp = model.log_density(z) / static_cast<double>(model.dim);
    const double sig = lp >= 0.0 ? 1.0 / (1.0 + std::exp(-lp))
                                 : std::exp(lp) / (1.0 + std::exp(lp));
    return std::pow(sig, gamma);
}

std::vector<double> rho_score_rows(const GmmModel& model, const Tensor& z, double gamma) {
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i)
        out[i] = rho_score(model, &z.data()[i * z.cols()], gamma);
    return out;
}

double rho_score_calibrated(const GmmModel& model, const DensityCalibration& calib,
                            const double* z, double gamma, double floor) {
    if (!model.fitted) throw std::invalid_argument("rho_score_calibrated: model not fitted");
    if (!(gamma > 0.0)) throw std::invalid_argument("rho_score_calibrated: gamma must be positive");
    if (floor < 0.0) throw std::invalid_argument("rho_score_calibrated: floor must be >= 0");
    const double lp = model.log_density(z);
    // Map the in-distribution log-density range [q01, q99] onto [-1, 1] before
    // the sigmoid; without this, joint log-densities scale with dimension and
    // the sigmoid saturates to 0 for every point, dead or not.
    const double t = calib.degenerate() ? 0.0 : 2.0 * (lp - calib.q01) / calib.span() - 1.0;
    const double sig = t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    // A positive floor keeps the score from zeroing out during optimization:
    // an exact zero multiplier detaches the logits from every loss and
    // permanently freezes training for the affected rows.  At inference a zero
    // floor is what lets the score collapse the concentrations to their
    // additive minimum far from support, which is the whole point of the
    // guardrail.
    return std::max(std::pow(sig, gamma), floor);
}

std::vector<double> rho_score_calibrated_rows(const GmmModel& model,
                                              const DensityCalibration& calib, const Tensor& z,
                                              double gamma, double floor) {
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i)
        out[i] = rho_score_calibrated(model, calib, &z.data()[i * z.cols()], gamma, floor);
    return out;
}

double quantile(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile: empty sample");
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("quantile: p outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

DensityCalibration calibrate_scores(std::vector<double> scores) {
    DensityCalibration c;
    c.q01 = quantile(scores, 0.01);
    c.q99 = quantile(scores, 0.99);
    return c;
}

double scaled_evidence_lambda(double logp, const DensityCalibration& calib, double lambda_min) {
    if (calib.span() < 1e-12) return 1.0;
    const double t = std::clamp((logp - calib.q01) / calib.span(), 0.0, 1.0);
    return lambda_min + (1.0 - lambda_min) * t;
}

double energy_confidence(double energy, const DensityCalibration& calib) {
    const double span = std::max(calib.span(), 1e-12);
    return std::clamp(1.0 - (energy - calib.q01) / span, 0.0, 1.0);
}

double gmm_energy(const GmmModel& model, const double* z) {
    if (!model.fitted) throw std::invalid_argument("gmm_energy: model not fitted");
    std::vector<double> lp(model.n_components);
    for (std::size_t k = 0; k < model.n_components; ++k)
        lp[k] = model.component_log_density(k, z);
    return -logsumexp(lp);
}

std::vector<double> gmm_energy_rows(const GmmModel& model, const Tensor& z) {
    std::vector<double> out(z.rows());
    for (std::size_t i = 0; i < z.rows(); ++i)
        out[i] = gmm_energy(model, &z.data()[i * z.cols()]);
    return out;
}

double ClassGaussians::mahalanobis_sq(std::size_t c, const double* z) const {
    if (!fitted || c >= classes) throw std::invalid_argument("ClassGaussians: bad class");
    double q = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        const double dx = z[j] - mean[c][j];
        q += dx * dx / var[c][j];
    }
    return q;
}

ClassGaussians fit_class_gaussians(const Tensor& features, const std::vector<int>& labels,
                                   std::size_t classes) {
    if (labels.size() != features.rows())
        throw std::invalid_argument("fit_class_gaussians: one label per row required");
    const std::size_t N = features.rows(), d = features.cols();
    ClassGaussians cg;
    cg.classes = classes;
    cg.dim = d;
    cg.mean.assign(classes, std::vector<double>(d, 0.0));
    cg.var.assign(classes, std::vector<double>(d, kVarFloor));
    cg.count.assign(classes, 0);
    const auto& x = features.data();
    for (std::size_t i = 0; i < N; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::invalid_argument("fit_class_gaussians: label out of range");
        ++cg.count[y];
        for (std::size_t j = 0; j < d; ++j) cg.mean[y][j] += x[i * d + j];
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (cg.count[c] == 0) continue;
        for (double& v : cg.mean[c]) v /= static_cast<double>(cg.count[c]);
    }
    std::vector<std::vector<double>> ss(classes, std::vector<double>(d, 0.0));
    for (std::size_t i = 0; i < N; ++i) {
        const int y = labels[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double dx = x[i * d + j] - cg.mean[y][j];
            ss[y][j] += dx * dx;
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        if (cg.count[c] == 0) continue;
        for (std::size_t j = 0; j < d; ++j)
            cg.var[c][j] = std::max(ss[c][j] / static_cast<double>(cg.count[c]), kVarFloor);
    }
    cg.fitted = true;
    return cg;
}

Tensor vos_sample(const ClassGaussians& cg, std::size_t c, std::size_t n, double tail_quantile,
                  Rng& rng, double expansion) {
    if (!cg.fitted) throw std::invalid_argument("vos_sample: model not fitted");
    if (c >= cg.classes) throw std::invalid_argument("vos_sample: class out of range");
    if (cg.count[c] == 0)
        throw std::invalid_argument("vos_sample: class " + std::to_string(c) +
                                    " unseen in training");
    if (n == 0) throw std::invalid_argument("vos_sample: need n >= 1");
    if (tail_quantile >= 1.0)
        throw std::invalid_argument("vos_sample: tail_quantile must be < 1");
    if (expansion < 1.0) throw std::invalid_argument("vos_sample: expansion must be >= 1");
    const std::size_t d = cg.dim;
    std::vector<double> candidate(d);
    auto draw = [&]() {
        for (std::size_t j = 0; j < d; ++j)
            candidate[j] = cg.mean[c][j] + std::sqrt(cg.var[c][j]) * rng.normal();
    };
    double threshold = -std::numeric_limits<double>::infinity();
    if (tail_quantile > 0.0) {
        std::vector<double> held(4096);
        for (double& h : held) {
            draw();
            h = cg.mahalanobis_sq(c, candidate.data());
        }
        threshold = quantile(std::move(held), tail_quantile);
    }
    Tensor out(n, d);
    std::size_t got = 0;
    const std::size_t cap = 2000 * n + 10000;
    for (std::size_t attempt = 0; got < n && attempt < cap; ++attempt) {
        draw();
        if (cg.mahalanobis_sq(c, candidate.data()) >= threshold) {
            // Stretch the accepted tail point away from the class mean so the
            // negatives fill an annulus instead of a single thin shell.
            const double r = expansion == 1.0 ? 1.0 : 1.0 + (expansion - 1.0) * rng.uniform();
            for (std::size_t j = 0; j < d; ++j)
                out.at(got, j) = cg.mean[c][j] + r * (candidate[j] - cg.mean[c][j]);
            ++got;
        }
    }
    if (got < n)
        throw NumericError("vos_sample: rejection sampling failed to reach " + std::to_string(n) +
                           " samples");
    return out;
}

}  // namespace gem
