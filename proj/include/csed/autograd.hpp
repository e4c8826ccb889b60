// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over layer-granular operations.
// A forward pass records each op's output and a closure that maps the output
// gradient to input gradients; backward() replays the closures in reverse.
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "csed/nn.hpp"
#include "csed/tensor.hpp"

namespace csed {

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using Gradients = std::map<std::string, Tensor>;

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf whose gradient is reported under `name`. Re-using a name sums.
  Var parameter(const std::string& name, Tensor value);
  /// Records an op output. `fn` is kept only if some input needs a gradient.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);

  bool requires_grad(Var v) const;
  const Tensor& value(Var v) const;
  /// Adds `grad` into v's gradient buffer (ignored for constants).
  void accumulate(Var v, const Tensor& grad);

  /// Reverse pass from a scalar loss. Every parameter leaf gets an entry,
  /// zero-filled when the loss does not reach it.
  Gradients backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::string param;
    BackwardFn fn;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::deque<Node> nodes_;
};

/// Differentiable wrappers over the kernels in csed::nn.
namespace ag {

Var linear(Var x, Var w, Var b);
Var sigmoid(Var x);
Var tanh(Var x);
Var relu(Var x);
Var conv2d(Var x, Var kernel, Var bias);
/// `position_weights` (optional) marks which positions enter batch stats.
Var batchnorm(Var x, Var gamma, Var beta, nn::BatchNormState& state,
              nn::Mode mode, std::span<const double> position_weights = {});
Var maxpool2d(Var x, std::size_t pool_t, std::size_t pool_f);
Var reshape(Var x, Shape shape);

/// Zeroes frames of a (B, T, ...) tensor where mask (B, T) is zero.
Var mask_frames(Var x, const Tensor& mask);

/// GRU step. Rows with row_mask == 0 pass h_prev through unchanged.
Var gru_cell(Var x, Var h_prev, Var wi, Var wh, Var b,
             std::span<const double> row_mask = {});

/// Frame t of a (B, T, D) tensor as (B, D).
Var time_slice(Var x, std::size_t t);
/// Inverse of time_slice over all frames: T tensors (B, D) -> (B, T, D).
Var stack_time(std::span<const Var> frames);
/// Concatenates along the last axis; leading dims must agree.
Var concat_last(Var a, Var b);
/// Writes columns[i], each (N, 1), into output column target_columns[i].
/// target_columns must be a permutation of 0..columns.size()-1.
Var assemble_columns(std::span<const Var> columns,
                     std::span<const std::size_t> target_columns);

/// GRU over the time axis of a (B, T, D) batch from a zero state, giving
/// (B, T, H). Frames with mask (B, T) == 0 leave the state unchanged, so a
/// reverse pass starts fresh at each sequence's last valid frame.
Var gru_over_time(Var x, Var wi, Var wh, Var b, const Tensor* mask, bool reverse);

Var bce(Var z, const Tensor& y, const Tensor* mask = nullptr);
Var sum(Var x);
/// sum_i w[i] * x[i] with constant weights.
Var weighted_sum(Var x, const Tensor& weights);

}  // namespace ag
}  // namespace csed
