#include "gem/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "gem/error.hpp"
#include "gem/special.hpp"

namespace gem {

namespace {

using detail::TensorNode;

std::string shape_str(const Tensor& t) {
    return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

void check_defined(const char* op, const Tensor& t) {
    if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined operand");
}

void check_finite(const char* op, const Tensor& t) {
    for (double v : t.data()) {
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": produced a non-finite value");
    }
}

// Records the op if anything upstream wants gradients; always runs the
// finiteness check so silent NaNs cannot propagate.
Tensor finish(const char* op, std::initializer_list<Tensor> ins, Tensor out,
              std::function<void()> bwd) {
    check_finite(op, out);
    bool wants = false;
    for (const Tensor& t : ins) wants = wants || t.requires_grad();
    if (wants) {
        out.set_requires_grad(true);
        if (Tape* tape = Tape::current()) {
            Tape::Record rec;
            for (const Tensor& t : ins) rec.inputs.push_back(t.shared_node());
            rec.output = out.shared_node();
            rec.backward = std::move(bwd);
            tape->push(std::move(rec));
        }
    }
    return out;
}

// Allowed pairings: identical shapes, or a 1xC / Nx1 / 1x1 operand against
// an NxC one. Two differently-truncated operands (Nx1 against 1xC) would be
// an outer product and are rejected.
void check_broadcast(const char* op, const Tensor& a, const Tensor& b) {
    const bool rows_ok = a.rows() == b.rows() || a.rows() == 1 || b.rows() == 1;
    const bool cols_ok = a.cols() == b.cols() || a.cols() == 1 || b.cols() == 1;
    const bool a_fits = a.rows() <= b.rows() && a.cols() <= b.cols();
    const bool b_fits = b.rows() <= a.rows() && b.cols() <= a.cols();
    if (!rows_ok || !cols_ok || (!a_fits && !b_fits)) {
        throw std::invalid_argument(std::string(op) + ": shapes " + shape_str(a) + " and " +
                                    shape_str(b) + " are not broadcast compatible");
    }
}

inline std::size_t bidx(const TensorNode* n, std::size_t i, std::size_t j) {
    return (i % n->rows) * n->cols + (j % n->cols);
}

// F: (a, b) -> value.  D: (a, b, &da, &db) local derivatives.
template <class F, class D>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, D d) {
    check_defined(op, a);
    check_defined(op, b);
    check_broadcast(op, a, b);
    const std::size_t R = std::max(a.rows(), b.rows());
    const std::size_t C = std::max(a.cols(), b.cols());
    Tensor out(R, C);
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < R; ++i)
        for (std::size_t j = 0; j < C; ++j)
            on->data[i * C + j] = f(an->data[bidx(an, i, j)], bn->data[bidx(bn, i, j)]);
    auto bwd = [an, bn, on, d, R, C]() {
        for (std::size_t i = 0; i < R; ++i) {
            for (std::size_t j = 0; j < C; ++j) {
                const double g = on->grad[i * C + j];
                double da = 0.0, db = 0.0;
                d(an->data[bidx(an, i, j)], bn->data[bidx(bn, i, j)], da, db);
                an->grad[bidx(an, i, j)] += g * da;
                bn->grad[bidx(bn, i, j)] += g * db;
            }
        }
    };
    return finish(op, {a, b}, out, bwd);
}

// F: x -> y.  D: (x, y) -> dy/dx.
template <class F, class D>
Tensor unary(const char* op, const Tensor& x, F f, D d) {
    check_defined(op, x);
    Tensor out(x.rows(), x.cols());
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    const std::size_t n = xn->data.size();
    for (std::size_t k = 0; k < n; ++k) on->data[k] = f(xn->data[k]);
    auto bwd = [xn, on, d, n]() {
        for (std::size_t k = 0; k < n; ++k)
            xn->grad[k] += on->grad[k] * d(xn->data[k], on->data[k]);
    };
    return finish(op, {x}, out, bwd);
}

double stable_sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

double stable_softplus(double v) {
    return std::max(v, 0.0) + std::log1p(std::exp(-std::fabs(v)));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_defined("matmul", a);
    check_defined("matmul", b);
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree, " + shape_str(a) +
                                    " * " + shape_str(b));
    }
    const std::size_t N = a.rows(), K = a.cols(), M = b.cols();
    Tensor out(N, M);
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t k = 0; k < K; ++k) {
            const double av = an->data[i * K + k];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < M; ++j) on->data[i * M + j] += av * bn->data[k * M + j];
        }
    }
    auto bwd = [an, bn, on, N, K, M]() {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t k = 0; k < K; ++k) {
                const double av = an->data[i * K + k];
                double acc = 0.0;
                for (std::size_t j = 0; j < M; ++j) {
                    const double g = on->grad[i * M + j];
                    acc += g * bn->data[k * M + j];
                    bn->grad[k * M + j] += av * g;
                }
                an->grad[i * K + k] += acc;
            }
        }
    };
    return finish("matmul", {a, b}, out, bwd);
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double& da, double& db) { da = 1.0; db = 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double& da, double& db) { da = 1.0; db = -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double& da, double& db) { da = y; db = x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double& da, double& db) {
            da = 1.0 / y;
            db = -x / (y * y);
        });
}

Tensor add(const Tensor& a, double c) { return add(a, Tensor::scalar(c)); }
Tensor sub(double c, const Tensor& a) { return sub(Tensor::scalar(c), a); }
Tensor mul(const Tensor& a, double c) { return mul(a, Tensor::scalar(c)); }

Tensor exp(const Tensor& x) {
    return unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
    return unary(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        "sigmoid", x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
    return unary(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& x) {
    return unary(
        "softplus", x, [](double v) { return stable_softplus(v); },
        [](double v, double) { return stable_sigmoid(v); });
}

Tensor relu(const Tensor& x) {
    return unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
    return unary(
        "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
    return unary(
        "sqrt", x, [](double v) { return std::sqrt(v); },
        [](double, double y) { return 0.5 / y; });
}

Tensor neg(const Tensor& x) {
    return unary(
        "neg", x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor lgamma(const Tensor& x) {
    return unary(
        "lgamma", x, [](double v) { return lgamma_pos(v); },
        [](double v, double) { return digamma_pos(v); });
}

Tensor digamma(const Tensor& x) {
    return unary(
        "digamma", x, [](double v) { return digamma_pos(v); },
        [](double v, double) { return trigamma_pos(v); });
}

Tensor clip(const Tensor& x, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("clip: lo must be < hi");
    return unary(
        "clip", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Tensor softmax_rows(const Tensor& x) {
    check_defined("softmax_rows", x);
    const std::size_t N = x.rows(), C = x.cols();
    Tensor out(N, C);
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) {
        double m = xn->data[i * C];
        for (std::size_t j = 1; j < C; ++j) m = std::max(m, xn->data[i * C + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < C; ++j) {
            const double e = std::exp(xn->data[i * C + j] - m);
            on->data[i * C + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < C; ++j) on->data[i * C + j] /= z;
    }
    auto bwd = [xn, on, N, C]() {
        for (std::size_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < C; ++j)
                dot += on->grad[i * C + j] * on->data[i * C + j];
            for (std::size_t j = 0; j < C; ++j) {
                const double y = on->data[i * C + j];
                xn->grad[i * C + j] += y * (on->grad[i * C + j] - dot);
            }
        }
    };
    return finish("softmax_rows", {x}, out, bwd);
}

Tensor normalize_rows(const Tensor& x) {
    check_defined("normalize_rows", x);
    const std::size_t N = x.rows(), C = x.cols();
    Tensor out(N, C);
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    std::vector<double> sums(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += xn->data[i * C + j];
        if (std::fabs(s) < 1e-30)
            throw NumericError("normalize_rows: row " + std::to_string(i) +
                               " sums below 1e-30");
        sums[i] = s;
        for (std::size_t j = 0; j < C; ++j) on->data[i * C + j] = xn->data[i * C + j] / s;
    }
    auto bwd = [xn, on, sums = std::move(sums), N, C]() {
        for (std::size_t i = 0; i < N; ++i) {
            const double s = sums[i];
            double dot = 0.0;
            for (std::size_t j = 0; j < C; ++j)
                dot += on->grad[i * C + j] * xn->data[i * C + j];
            for (std::size_t j = 0; j < C; ++j)
                xn->grad[i * C + j] += on->grad[i * C + j] / s - dot / (s * s);
        }
    };
    return finish("normalize_rows", {x}, out, bwd);
}

Tensor sum(const Tensor& x) {
    check_defined("sum", x);
    TensorNode* xn = x.node();
    double s = 0.0;
    for (double v : xn->data) s += v;
    Tensor out = Tensor::scalar(s);
    TensorNode* on = out.node();
    auto bwd = [xn, on]() {
        const double g = on->grad[0];
        for (double& gv : xn->grad) gv += g;
    };
    return finish("sum", {x}, out, bwd);
}

Tensor mean(const Tensor& x) {
    check_defined("mean", x);
    TensorNode* xn = x.node();
    const double inv = 1.0 / static_cast<double>(xn->data.size());
    double s = 0.0;
    for (double v : xn->data) s += v;
    Tensor out = Tensor::scalar(s * inv);
    TensorNode* on = out.node();
    auto bwd = [xn, on, inv]() {
        const double g = on->grad[0] * inv;
        for (double& gv : xn->grad) gv += g;
    };
    return finish("mean", {x}, out, bwd);
}

Tensor sum_rows(const Tensor& x) {
    check_defined("sum_rows", x);
    const std::size_t N = x.rows(), C = x.cols();
    Tensor out(N, 1);
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < C; ++j) s += xn->data[i * C + j];
        on->data[i] = s;
    }
    auto bwd = [xn, on, N, C]() {
        for (std::size_t i = 0; i < N; ++i) {
            const double g = on->grad[i];
            for (std::size_t j = 0; j < C; ++j) xn->grad[i * C + j] += g;
        }
    };
    return finish("sum_rows", {x}, out, bwd);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    check_defined("concat_cols", a);
    check_defined("concat_cols", b);
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("concat_cols: row counts disagree, " + shape_str(a) +
                                    " vs " + shape_str(b));
    }
    const std::size_t N = a.rows(), Ca = a.cols(), Cb = b.cols();
    Tensor out(N, Ca + Cb);
    TensorNode* an = a.node();
    TensorNode* bn = b.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) {
        for (std::size_t j = 0; j < Ca; ++j) on->data[i * (Ca + Cb) + j] = an->data[i * Ca + j];
        for (std::size_t j = 0; j < Cb; ++j)
            on->data[i * (Ca + Cb) + Ca + j] = bn->data[i * Cb + j];
    }
    auto bwd = [an, bn, on, N, Ca, Cb]() {
        for (std::size_t i = 0; i < N; ++i) {
            for (std::size_t j = 0; j < Ca; ++j)
                an->grad[i * Ca + j] += on->grad[i * (Ca + Cb) + j];
            for (std::size_t j = 0; j < Cb; ++j)
                bn->grad[i * Cb + j] += on->grad[i * (Ca + Cb) + Ca + j];
        }
    };
    return finish("concat_cols", {a, b}, out, bwd);
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
    check_defined("slice_cols", x);
    if (c0 >= c1 || c1 > x.cols()) {
        throw std::invalid_argument("slice_cols: invalid range [" + std::to_string(c0) + ", " +
                                    std::to_string(c1) + ") for " + shape_str(x));
    }
    const std::size_t N = x.rows(), C = x.cols(), W = c1 - c0;
    Tensor out(N, W);
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < W; ++j) on->data[i * W + j] = xn->data[i * C + c0 + j];
    auto bwd = [xn, on, N, C, W, c0]() {
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < W; ++j) xn->grad[i * C + c0 + j] += on->grad[i * W + j];
    };
    return finish("slice_cols", {x}, out, bwd);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
    check_defined("gather_rows", x);
    if (idx.size() != x.rows()) {
        throw std::invalid_argument("gather_rows: need one index per row, got " +
                                    std::to_string(idx.size()) + " for " + shape_str(x));
    }
    const std::size_t N = x.rows(), C = x.cols();
    for (std::size_t i = 0; i < N; ++i) {
        if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= C)
            throw std::invalid_argument("gather_rows: index " + std::to_string(idx[i]) +
                                        " out of range at row " + std::to_string(i));
    }
    Tensor out(N, 1);
    TensorNode* xn = x.node();
    TensorNode* on = out.node();
    for (std::size_t i = 0; i < N; ++i) on->data[i] = xn->data[i * C + idx[i]];
    auto bwd = [xn, on, idx, N, C]() {
        for (std::size_t i = 0; i < N; ++i) xn->grad[i * C + idx[i]] += on->grad[i];
    };
    return finish("gather_rows", {x}, out, bwd);
}

Tensor one_hot(const std::vector<int>& labels, std::size_t classes) {
    if (labels.empty()) throw std::invalid_argument("one_hot: empty label vector");
    Tensor out(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw std::invalid_argument("one_hot: label " + std::to_string(labels[i]) +
                                        " out of range at row " + std::to_string(i));
        out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
    }
    return out;
}

GradCheckResult grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                           std::vector<Tensor> inputs, double h, double tol,
                           const std::vector<std::vector<char>>* exclude) {
    if (exclude && exclude->size() != inputs.size())
        throw std::invalid_argument("grad_check: one exclusion mask per input required");
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.ensure_grad();
        t.zero_grad();
    }
    {
        Tape tape;
        Tensor out = fn(inputs);
        tape.backward(out);
    }
    std::vector<std::vector<double>> analytic;
    for (auto& t : inputs) {
        analytic.push_back(t.grad().empty() ? std::vector<double>(t.size(), 0.0) : t.grad());
    }
    GradCheckResult res;
    res.passed = true;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        for (std::size_t k = 0; k < inputs[t].size(); ++k) {
            if (exclude && k < (*exclude)[t].size() && (*exclude)[t][k]) {
                ++res.excluded;
                continue;
            }
            const double orig = inputs[t].data()[k];
            double fp, fm;
            {
                TapePause pause;
                inputs[t].data()[k] = orig + h;
                fp = fn(inputs).value();
                inputs[t].data()[k] = orig - h;
                fm = fn(inputs).value();
            }
            inputs[t].data()[k] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[t][k];
            const double err = std::fabs(an - fd) / std::max(1.0, std::fabs(an) + std::fabs(fd));
            res.max_rel_err = std::max(res.max_rel_err, err);
            ++res.checked;
            if (err > tol) res.passed = false;
        }
    }
    return res;
}

}  // namespace gem
