#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ecpenet/tensor.h"

namespace ecpenet {

/// A trainable tensor with its accumulated gradient. Lives outside any tape so
/// the same storage can be consumed by many graph nodes and many iterations.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape()); }
};

template <typename T>
class Tape;

/// Handle to a node recorded on a tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
/// so walking the node list backwards is a reverse topological traversal.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf bound to `param`; repeated calls with the same parameter return the
  /// same node, so shared weights accumulate into a single gradient.
  Var<T> parameter(Parameter<T>& param);
  Var<T> record(const char* op, Tensor<T> value, std::vector<std::size_t> inputs,
                BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const char* op(std::size_t id) const { return nodes_[id].op; }
  std::size_t size() const { return nodes_.size(); }

  /// Upstream gradient of node `id` during backward (zeros if nothing flowed in).
  const Tensor<T>& grad(std::size_t id);
  /// Mutable gradient accumulator of an input node; allocated as zeros on first use.
  Tensor<T>& accumulator(std::size_t id);

  /// Propagates d(loss)/d(node) through the tape and adds parameter gradients
  /// into each bound Parameter::grad.
  void backward(Var<T> loss);

  /// Gradient reached at `v` by the last backward call (zeros if none).
  Tensor<T> gradient(Var<T> v) const;

  /// Index of the first node holding a NaN or infinity, or size() if none.
  std::size_t first_non_finite() const;

 private:
  struct Node {
    const char* op = "";
    Tensor<T> value;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

enum class Padding { kEdgeReplicate, kZero };

// Differentiable primitives. Each records one node carrying an exact backward rule.

/// Stride-1 "same" convolution; kernel (C_out, C_in, k, k) with odd k.
template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, Var<T> bias, Padding padding = Padding::kEdgeReplicate);

template <typename T>
Var<T> prelu(Var<T> input, Var<T> slopes);

template <typename T>
Var<T> sigmoid(Var<T> input);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);

/// Space-to-depth by `factor`: output channel (phase_row * f + phase_col) * C + c.
template <typename T>
Var<T> pixel_unshuffle(Var<T> input, int factor = 2);

/// Depth-to-space; exact inverse of pixel_unshuffle.
template <typename T>
Var<T> pixel_shuffle(Var<T> input, int factor = 2);

template <typename T>
Var<T> concat_channels(std::span<const Var<T>> inputs);

/// Mean absolute difference, returned as a (1,1,1,1) scalar.
template <typename T>
Var<T> l1_distance(Var<T> a, Var<T> b);

/// Mean of |a - target| for a constant target.
template <typename T>
Var<T> l1_to_constant(Var<T> a, T target);

template <typename T>
Var<T> sum(Var<T> input);

/// sum_i a[i] * weights[i] for a constant weight tensor of the same shape.
template <typename T>
Var<T> inner_product(Var<T> a, const Tensor<T>& weights);

/// sum_i weights[i] * terms[i] over scalar terms.
template <typename T>
Var<T> weighted_sum(std::span<const Var<T>> terms, std::span<const T> weights);

// Raw (tape-free) kernels shared by the ops and by their test oracles.

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                         Padding padding);
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& input, int factor = 2);
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& input, int factor = 2);

/// Central-difference gradient of a scalar function at x.
template <typename T>
Tensor<T> finite_diff_grad(const std::function<T(const Tensor<T>&)>& fn, const Tensor<T>& x, T h);

/// Max elementwise deviation scaled by the larger of the two gradients' max norms.
template <typename T>
double relative_error(const Tensor<T>& analytic, const Tensor<T>& numeric);

}  // namespace ecpenet
