#pragma once

// Independent reference implementations used to cross-check the library.
// Everything here is written directly from the mathematical definition and
// shares no code with the library: quadratic-time pair counting for ranking
// metrics, from-scratch confusion counts per threshold, double-exponential
// quadrature for the Dirichlet prior divergence, the hand-derived chain rule
// for the sensitivity proxy, and a scalar transcription of the optimizer
// update rule.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace refimpl {

// P(s_pos > s_neg) + 0.5 P(s_pos == s_neg), by enumerating every
// positive/negative pair. Quadratic; fine for the sizes used in tests.
inline double auroc(const std::vector<double>& scores, const std::vector<char>& pos) {
    double wins = 0.0;
    std::size_t np = 0, nn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!pos[i]) continue;
        ++np;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (pos[j]) continue;
            if (scores[i] > scores[j])
                wins += 1.0;
            else if (scores[i] == scores[j])
                wins += 0.5;
        }
    }
    for (char c : pos) nn += c ? 0 : 1;
    if (np == 0 || nn == 0) throw std::invalid_argument("ref auroc: one-class input");
    return wins / (static_cast<double>(np) * static_cast<double>(nn));
}

// Area under precision-recall with step interpolation: walk the distinct
// score values from high to low and recompute the confusion counts from
// scratch at every threshold.
inline double aupr(const std::vector<double>& scores, const std::vector<char>& pos) {
    std::vector<double> thresholds = scores;
    std::sort(thresholds.begin(), thresholds.end(), std::greater<double>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double total_pos = 0.0;
    for (char c : pos) total_pos += c ? 1.0 : 0.0;
    if (total_pos == 0.0 || total_pos == static_cast<double>(pos.size()))
        throw std::invalid_argument("ref aupr: one-class input");
    double area = 0.0, prev_recall = 0.0;
    for (double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= t) {
                if (pos[i])
                    tp += 1.0;
                else
                    fp += 1.0;
            }
        }
        const double recall = tp / total_pos;
        const double precision = tp / (tp + fp);
        area += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return area;
}

// KL(Beta(a, b) || Uniform(0, 1)) = integral over (0, 1) of f log f, with
// f the Beta density. Evaluated by tanh-sinh quadrature, which absorbs the
// integrable endpoint singularities that appear when a < 1 or b < 1. The
// density constant comes from std::lgamma, independent of the library's
// special functions. Log-arguments near both endpoints are fed in exactly
// (log x and log(1-x) separately) so no precision is lost at x ~ 1.
inline double beta_kl_to_uniform_quadrature(double a, double b) {
    const double log_beta_const =
        std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    auto f_logf = [&](double log_x, double log_1mx) {
        const double logf = (a - 1.0) * log_x + (b - 1.0) * log_1mx - log_beta_const;
        if (logf < -700.0) return 0.0;  // f log f -> 0 at vanishing density
        return std::exp(logf) * logf;
    };
    const double kPi = 3.14159265358979323846;
    const double h = 0.01;
    const double t_max = 6.5;
    double sum = 0.0;
    for (double t = -t_max; t <= t_max + 1e-12; t += h) {
        const double s = 0.5 * kPi * std::sinh(t);
        // x and 1-x computed without cancellation: the smaller of the pair is
        // 1/(1 + e^{2|s|}) exactly.
        const double x_small = 1.0 / (1.0 + std::exp(2.0 * std::fabs(s)));
        if (x_small <= 0.0) continue;  // weight underflow region
        const double log_small = -std::log1p(std::exp(2.0 * std::fabs(s)));
        const double log_large = std::log1p(-x_small);
        const double dx_dt = 0.25 * kPi * std::cosh(t) *
                             4.0 * x_small * (1.0 - x_small);  // sech^2(s)/... = 4 x (1-x)
        const double log_x = s < 0.0 ? log_small : log_large;
        const double log_1mx = s < 0.0 ? log_large : log_small;
        sum += f_logf(log_x, log_1mx) * dx_dt;
    }
    return sum * h;
}

// Closed form for KL(Dir(alpha) || Dir(1)), used to validate the quadrature
// itself at a point with a tidy analytic value.
inline double dirichlet_kl_to_uniform_closed(const std::vector<double>& alpha) {
    double a0 = 0.0;
    for (double a : alpha) a0 += a;
    double out = std::lgamma(a0) - std::lgamma(static_cast<double>(alpha.size()));
    // digamma via derivative of lgamma is not in <cmath>; use the recurrence
    // onto a large argument where the asymptotic series is accurate.
    auto digamma = [](double x) {
        double r = 0.0;
        while (x < 10.0) {
            r -= 1.0 / x;
            x += 1.0;
        }
        const double inv = 1.0 / x, inv2 = inv * inv;
        return r + std::log(x) - 0.5 * inv -
               inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 / 252.0));
    };
    const double psi0 = digamma(a0);
    for (double a : alpha) out += -std::lgamma(a) + (a - 1.0) * (digamma(a) - psi0);
    return out;
}

// Squared gradient norm of log(alpha_y / alpha0) with respect to the raw
// logits u, where alpha_c = rho (e^{u_c} + eps) + eps. Chain rule:
//   dalpha_c/du_c = rho e^{u_c} = alpha_c - eps2,   eps2 = rho * eps + eps
//   dlog p_y / du_y = (alpha_y - eps2) (1/alpha_y - 1/alpha0)
//   dlog p_y / du_c = -(alpha_c - eps2) / alpha0       (c != y)
// The unscaled parameterization alpha_c = e^{u_c} + eps is the special case
// eps2 = eps. Valid while every u_c sits strictly inside the clip range.
inline double fi_closed_form(const std::vector<double>& alpha_row, double eps2, int y) {
    double alpha0 = 0.0;
    for (double a : alpha_row) alpha0 += a;
    double sq = 0.0;
    for (std::size_t c = 0; c < alpha_row.size(); ++c) {
        double g;
        if (static_cast<int>(c) == y)
            g = (alpha_row[c] - eps2) * (1.0 / alpha_row[c] - 1.0 / alpha0);
        else
            g = -(alpha_row[c] - eps2) / alpha0;
        sq += g * g;
    }
    return sq;
}

// Scalar transcription of the decoupled-weight-decay Adam update, bias
// correction included, decay applied against the pre-step value.
struct ScalarAdamRef {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-4;
    double m = 0.0, v = 0.0;
    std::size_t t = 0;

    void step(double& w, double g, double lr) {
        ++t;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        const double mhat = m / (1.0 - std::pow(beta1, static_cast<double>(t)));
        const double vhat = v / (1.0 - std::pow(beta2, static_cast<double>(t)));
        w -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * w);
    }
};

// A calibration test case assembled bin by bin, with the expected error
// computed from the construction itself rather than from any binning code.
// Points are placed strictly inside their intended bin (or exactly on its
// right edge, which the right-closed convention keeps inside).
struct EceCase {
    std::vector<double> confidence;
    std::vector<char> correct;
    double expected = 0.0;
};

struct EceBinPlan {
    std::size_t bin = 0;       // 0-based bin index
    std::size_t n_total = 0;
    std::size_t n_correct = 0;
    double offset = 0.5;       // placement within the bin, in (0, 1]
};

inline EceCase build_ece_case(std::size_t bins, const std::vector<EceBinPlan>& plan) {
    EceCase c;
    std::size_t total = 0;
    for (const auto& p : plan) total += p.n_total;
    for (const auto& p : plan) {
        const double conf =
            (static_cast<double>(p.bin) + p.offset) / static_cast<double>(bins);
        for (std::size_t i = 0; i < p.n_total; ++i) {
            c.confidence.push_back(conf);
            c.correct.push_back(i < p.n_correct ? 1 : 0);
        }
        const double acc =
            static_cast<double>(p.n_correct) / static_cast<double>(p.n_total);
        c.expected += (static_cast<double>(p.n_total) / static_cast<double>(total)) *
                      std::fabs(acc - conf);
    }
    return c;
}

// Deterministic 64-bit generator for test data, independent of the library's
// stream machinery (xorshift*).
struct TestRand {
    std::uint64_t state;
    explicit TestRand(std::uint64_t seed) : state(seed ? seed : 0x9e3779b9ull) {}
    std::uint64_t next() {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        return state * 0x2545f4914f6cdd1dull;
    }
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }
};

}  // namespace refimpl
