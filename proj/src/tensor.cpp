#include "gem/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace gem {

namespace {
thread_local Tape* g_current_tape = nullptr;
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("Tensor: zero dimension");
    node_ = std::make_shared<detail::TensorNode>();
    node_->rows = rows;
    node_->cols = cols;
    node_->data.assign(rows * cols, fill);
}

Tensor Tensor::from_rows(std::vector<double> values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols)
        throw std::invalid_argument("Tensor::from_rows: data length != rows*cols");
    Tensor t(rows, cols);
    t.node_->data = std::move(values);
    return t;
}

Tensor Tensor::scalar(double v) { return from_rows({v}, 1, 1); }

Tensor Tensor::row(const std::vector<double>& values) {
    return from_rows(values, 1, values.size());
}

Tensor Tensor::column(const std::vector<double>& values) {
    return from_rows(values, values.size(), 1);
}

double Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::value: tensor is not 1x1");
    return node_->data[0];
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::ensure_grad() {
    if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), 0.0);
}

Tensor Tensor::detach_copy() const {
    Tensor t(rows(), cols());
    t.node_->data = node_->data;
    return t;
}

Tape::Tape() {
    previous_ = g_current_tape;
    g_current_tape = this;
}

Tape::~Tape() { g_current_tape = previous_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::backward(const Tensor& root) {
    if (!root.defined() || !root.is_scalar())
        throw std::invalid_argument("Tape::backward: root must be a 1x1 tensor");
    if (records_.empty()) throw std::invalid_argument("Tape::backward: tape is empty");
    for (auto& rec : records_) {
        rec.output->grad.assign(rec.output->data.size(), 0.0);
        for (auto& in : rec.inputs)
            if (in->grad.size() != in->data.size()) in->grad.assign(in->data.size(), 0.0);
    }
    root.node()->grad.assign(1, 1.0);
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) it->backward();
}

TapePause::TapePause() : saved_(g_current_tape) { g_current_tape = nullptr; }

TapePause::~TapePause() { g_current_tape = saved_; }

}  // namespace gem
