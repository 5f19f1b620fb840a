#include "gem/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "gem/dirichlet.hpp"
#include "gem/error.hpp"

namespace gem {

namespace {

void check_two_classes(const char* op, const ScoredEvalSet& s) {
    if (s.scores.size() != s.positives.size() || s.scores.empty())
        throw std::invalid_argument(std::string(op) + ": scores/positives size mismatch");
    std::size_t pos = 0;
    for (char c : s.positives) pos += c ? 1 : 0;
    if (pos == 0 || pos == s.positives.size())
        throw std::invalid_argument(std::string(op) +
                                    ": need at least one positive and one negative");
}

void check_labels(const char* op, const Tensor& p, const std::vector<int>& labels) {
    if (labels.size() != p.rows())
        throw std::invalid_argument(std::string(op) + ": one label per row required");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= p.cols())
            throw std::invalid_argument(std::string(op) + ": label out of range");
    }
}

}  // namespace

double auroc(const ScoredEvalSet& s) {
    check_two_classes("auroc", s);
    const std::size_t n = s.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // ranks are 1-based
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum = 0.0;
    std::size_t npos = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (s.positives[k]) {
            rank_sum += rank[k];
            ++npos;
        }
    }
    const std::size_t nneg = n - npos;
    const double u = rank_sum - 0.5 * static_cast<double>(npos) * static_cast<double>(npos + 1);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double aupr(const ScoredEvalSet& s) {
    check_two_classes("aupr", s);
    const std::size_t n = s.scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s.scores[a] > s.scores[b]; });
    double npos = 0.0;
    for (char c : s.positives) npos += c ? 1.0 : 0.0;
    double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && s.scores[order[j + 1]] == s.scores[order[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) {
            if (s.positives[order[k]]) tp += 1.0;
            else fp += 1.0;
        }
        const double recall = tp / npos;
        const double precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return area;
}

double ece(const std::vector<double>& confidence, const std::vector<char>& correct,
           std::size_t bins) {
    if (confidence.size() != correct.size())
        throw std::invalid_argument("ece: confidence/correct size mismatch");
    if (confidence.empty() || bins == 0) throw std::invalid_argument("ece: empty input");
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t k = 0; k < confidence.size(); ++k) {
        const double c = confidence[k];
        if (c < 0.0 || c > 1.0)
            throw std::invalid_argument("ece: confidence outside [0, 1]");
        // right-closed bins ((b-1)/B, b/B]; zero lands in the first bin
        long b = static_cast<long>(std::ceil(c * static_cast<double>(bins))) - 1;
        b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
        conf_sum[b] += c;
        acc_sum[b] += correct[k] ? 1.0 : 0.0;
        ++count[b];
    }
    double e = 0.0;
    const double n = static_cast<double>(confidence.size());
    for (std::size_t b = 0; b < bins; ++b) {
        if (count[b] == 0) continue;
        const double cb = static_cast<double>(count[b]);
        e += (cb / n) * std::fabs(acc_sum[b] / cb - conf_sum[b] / cb);
    }
    return e;
}

std::vector<int> argmax_rows(const Tensor& p) {
    std::vector<int> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < p.cols(); ++j)
            if (p.at(i, j) > p.at(i, best)) best = j;
        out[i] = static_cast<int>(best);
    }
    return out;
}

std::vector<double> max_rows(const Tensor& p) {
    std::vector<double> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
        double m = p.at(i, 0);
        for (std::size_t j = 1; j < p.cols(); ++j) m = std::max(m, p.at(i, j));
        out[i] = m;
    }
    return out;
}

double brier(const Tensor& p, const std::vector<int>& labels) {
    check_labels("brier", p, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        for (std::size_t j = 0; j < p.cols(); ++j) {
            const double y = static_cast<int>(j) == labels[i] ? 1.0 : 0.0;
            const double d = p.at(i, j) - y;
            total += d * d;
        }
    }
    return total / static_cast<double>(p.rows());
}

double nll(const Tensor& p, const std::vector<int>& labels) {
    check_labels("nll", p, labels);
    double total = 0.0;
    for (std::size_t i = 0; i < p.rows(); ++i)
        total -= std::log(std::max(p.at(i, static_cast<std::size_t>(labels[i])), 1e-12));
    return total / static_cast<double>(p.rows());
}

double accuracy(const Tensor& p, const std::vector<int>& labels) {
    check_labels("accuracy", p, labels);
    const std::vector<int> pred = argmax_rows(p);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (pred[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

CalibrationReport calibration_report(const Tensor& p, const std::vector<int>& labels,
                                     std::size_t bins) {
    check_labels("calibration_report", p, labels);
    CalibrationReport r;
    const std::vector<int> pred = argmax_rows(p);
    const std::vector<double> conf = max_rows(p);
    std::vector<char> correct(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) correct[i] = pred[i] == labels[i] ? 1 : 0;
    r.ece = ece(conf, correct, bins);
    r.brier = brier(p, labels);
    r.brier_x100 = 100.0 * r.brier;
    r.nll = nll(p, labels);
    r.accuracy = accuracy(p, labels);
    std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
    std::vector<std::size_t> count(bins, 0);
    for (std::size_t k = 0; k < conf.size(); ++k) {
        long b = static_cast<long>(std::ceil(conf[k] * static_cast<double>(bins))) - 1;
        b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
        conf_sum[b] += conf[k];
        acc_sum[b] += correct[k] ? 1.0 : 0.0;
        ++count[b];
    }
    for (std::size_t b = 0; b < bins; ++b) {
        BinStat bs;
        bs.count = count[b];
        if (count[b] > 0) {
            bs.mean_confidence = conf_sum[b] / static_cast<double>(count[b]);
            bs.accuracy = acc_sum[b] / static_cast<double>(count[b]);
        }
        r.bins.push_back(bs);
    }
    return r;
}

ScoredEvalSet misclassification_set(const Tensor& p, const std::vector<int>& labels) {
    check_labels("misclassification_set", p, labels);
    ScoredEvalSet s;
    s.scores = max_rows(p);
    const std::vector<int> pred = argmax_rows(p);
    s.positives.resize(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        s.positives[i] = pred[i] == labels[i] ? 1 : 0;
    return s;
}

UncertaintyScores uncertainty_scores(const UncertaintyInputs& in) {
    const std::size_t n = in.p_hat.rows();
    if (in.alpha0.size() != n || in.energy_conf.size() != n)
        throw std::invalid_argument("uncertainty_scores: per-sample arrays must match p_hat");
    UncertaintyScores out;
    out.neg_maxp.resize(n);
    out.entropy.resize(n);
    out.neg_alpha0.resize(n);
    out.neg_energy_conf.resize(n);
    const std::vector<double> mp = max_rows(in.p_hat);
    Tensor ent = entropy_rows(in.p_hat);
    for (std::size_t i = 0; i < n; ++i) {
        out.neg_maxp[i] = -mp[i];
        out.entropy[i] = ent.at(i, 0);
        out.neg_alpha0[i] = -in.alpha0[i];
        out.neg_energy_conf[i] = -in.energy_conf[i];
    }
    if (in.head_p.size() <= 1 || !in.pi.defined()) {
        out.mi.assign(n, 0.0);
        out.mi_is_zero_single_head = true;
    } else {
        Tensor mi = mixture_mutual_information(in.pi, in.head_p);
        out.mi.resize(n);
        for (std::size_t i = 0; i < n; ++i) out.mi[i] = mi.at(i, 0);
    }
    return out;
}

namespace {

double temperature_nll(const Tensor& logits, const std::vector<int>& labels, double t) {
    double total = 0.0;
    const std::size_t n = logits.rows(), c = logits.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double m = logits.at(i, 0) / t;
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, logits.at(i, j) / t);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(logits.at(i, j) / t - m);
        const double logp = logits.at(i, static_cast<std::size_t>(labels[i])) / t - m - std::log(z);
        total -= std::max(logp, std::log(1e-12));
    }
    return total / static_cast<double>(n);
}

}  // namespace

TemperatureFit fit_temperature(const Tensor& logits, const std::vector<int>& labels) {
    check_labels("fit_temperature", logits, labels);
    const double golden = 0.5 * (std::sqrt(5.0) - 1.0);
    double lo = std::log(0.1), hi = std::log(10.0);
    auto f = [&](double logt) { return temperature_nll(logits, labels, std::exp(logt)); };
    double x1 = hi - golden * (hi - lo);
    double x2 = lo + golden * (hi - lo);
    double f1 = f(x1), f2 = f(x2);
    while (hi - lo > 1e-4) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = f(x2);
        }
    }
    TemperatureFit fit;
    fit.nll_before = temperature_nll(logits, labels, 1.0);
    double t = std::exp(0.5 * (lo + hi));
    double val = temperature_nll(logits, labels, t);
    // never leave the caller worse off than no scaling
    if (val > fit.nll_before) {
        t = 1.0;
        val = fit.nll_before;
    }
    fit.temperature = t;
    fit.nll_after = val;
    return fit;
}

void write_metric_csv(const std::string& path, const std::vector<MetricRow>& rows) {
    std::ofstream f(path);
    if (!f) throw FormatError(path + ": cannot open for writing");
    f << "dataset,variant,seed,metric,value\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.12g", r.value);
        f << r.dataset << "," << r.variant << "," << r.seed << "," << r.metric << "," << buf
          << "\n";
    }
}

}  // namespace gem
