#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gem {

class Tape;

namespace detail {

struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;   // row-major, rows*cols
    std::vector<double> grad;   // same shape when allocated
    bool requires_grad = false;

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

}  // namespace detail

// Dense 2D float64 array with optional participation in reverse-mode
// differentiation. Copying a Tensor copies the handle, not the storage:
// two copies refer to the same values and the same gradient accumulator.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Tensor from_rows(std::vector<double> values, std::size_t rows, std::size_t cols);
    static Tensor scalar(double v);
    static Tensor row(const std::vector<double>& values);
    static Tensor column(const std::vector<double>& values);

    bool defined() const { return node_ != nullptr; }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->data.size(); }
    bool is_scalar() const { return defined() && rows() == 1 && cols() == 1; }

    double& at(std::size_t i, std::size_t j) { return node_->at(i, j); }
    double at(std::size_t i, std::size_t j) const { return node_->at(i, j); }
    double value() const;  // requires 1x1

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool v = true) {
        node_->requires_grad = v;
        return *this;
    }

    // Gradient accumulator; empty until backward has touched this tensor.
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    void zero_grad();
    void ensure_grad();  // allocate zero-filled grad if missing

    // Value copy with no tape history and no grad requirement.
    Tensor detach_copy() const;

    detail::TensorNode* node() const { return node_.get(); }
    std::shared_ptr<detail::TensorNode> shared_node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// Define-by-run tape. Constructing a Tape makes it the current recording
// target for every op executed on this thread; destruction restores the
// previous one (tapes nest, e.g. for sensitivity probes inside a training
// step). backward() walks the records in exact reverse order.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every
    // reachable tensor recorded on this tape. Root must be 1x1.
    void backward(const Tensor& root);

    std::size_t num_records() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    static Tape* current();

    struct Record {
        // Keeps operand storage alive for the backward pass.
        std::vector<std::shared_ptr<detail::TensorNode>> inputs;
        std::shared_ptr<detail::TensorNode> output;
        std::function<void()> backward;  // reads output->grad, accumulates into inputs
    };

    void push(Record r) { records_.push_back(std::move(r)); }

private:
    std::vector<Record> records_;
    Tape* previous_ = nullptr;
};

// Temporarily disables recording (e.g. power-iteration state updates or
// metric evaluation inside a training step).
class TapePause {
public:
    TapePause();
    ~TapePause();
    TapePause(const TapePause&) = delete;
    TapePause& operator=(const TapePause&) = delete;

private:
    Tape* saved_;
};

}  // namespace gem
