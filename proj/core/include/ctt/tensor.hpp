#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "ctt/errors.hpp"

namespace ctt {

class Tape;

using Shape = std::vector<std::size_t>;

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;      // sized lazily during backward
  bool requires_grad = false;
  const Tape* tape = nullptr;    // tape that recorded the producing op; null for leaves
};

}  // namespace detail

// Dense row-major tensor of 64-bit floats. Handles are shallow: copies share
// the underlying node, so a parameter handle held by an optimizer and the one
// held by the model stay in sync. Gradients accumulate on the node when a
// Tape is active (see TapeScope); without one, operations are plain forward
// arithmetic and produce constant results.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape[i]; }
  std::size_t size() const { return node_->value.size(); }

  const std::vector<double>& values() const { return node_->value; }
  // In-place mutation of a leaf (optimizer update, finite-difference probe).
  std::vector<double>& mutable_values() { return node_->value; }

  double at(std::size_t flat) const { return node_->value[flat]; }
  double operator()(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape[1] + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const {
    return node_->grad.size() == node_->value.size() && !node_->value.empty();
  }
  const std::vector<double>& grad() const;
  void zero_grad() { node_->grad.clear(); }

  // Internal node handle; used by operation backward rules and the tape.
  const std::shared_ptr<detail::TensorNode>& node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Reverse-mode record of one training step. Operations executed under an
// active TapeScope append their backward rules in execution order, which is
// a topological order of the computation by construction. One backward()
// call per recording; reset() starts the next step.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_rule) {
    entries_.push_back(std::move(backward_rule));
  }

  // Seeds d(loss)/d(loss) = 1 and replays the recorded rules in reverse,
  // populating grad on every requires_grad node reachable from the loss.
  void backward(const Tensor& loss);

  void reset() {
    entries_.clear();
    consumed_ = false;
  }

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

// RAII activation of a tape on the current thread.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// ---- Operations -----------------------------------------------------------
// All ops validate shapes (ShapeError on mismatch) and register backward
// rules on the active tape when any input requires gradients.

Tensor matmul(const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor add(const Tensor& a, const Tensor& b);             // same shape
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);             // elementwise
Tensor scale(const Tensor& a, double s);
Tensor add_bias(const Tensor& x, const Tensor& bias);     // [r,c] + [1,c] row broadcast
Tensor relu(const Tensor& x);                             // subgradient at 0 is 0
Tensor gelu(const Tensor& x);                             // exact erf form
Tensor softmax(const Tensor& x, std::size_t axis);        // rank 1 or 2, max-subtracted
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);                            // normalizes last axis, 1/D variance
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);  // rank 2
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin,
             std::size_t end);                            // rank 2, half-open
Tensor transpose(const Tensor& x);                        // rank 2
Tensor reshape(const Tensor& x, Shape new_shape);
Tensor mean(const Tensor& x);                             // full reduction -> shape {1}
Tensor sum(const Tensor& x);

// 2-D convolution over a [H,W,Cin] input with [Cout,kh,kw,Cin] weights and
// TensorFlow-style SAME padding (output H' = ceil(H/stride), extra padding
// goes to the bottom/right edge). Bias shape {Cout}; the bias-free overload
// is used for projection shortcuts.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride);
Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride);

}  // namespace ctt
