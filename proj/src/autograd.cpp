// SPDX-License-Identifier: Apache-2.0
#include "csed/autograd.hpp"

#include <algorithm>
#include <string>

#include "csed/errors.hpp"

namespace csed {

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("value of an unbound Var");
  return tape_->value(*this);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw UsageError("Var was not recorded on this tape");
  }
  return nodes_[v.id_];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(static_cast<const Tape&>(*this).node(v));
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, false, false, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, true, false, name, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  bool needs = false;
  for (const Var& in : inputs) needs = needs || node(in).requires_grad;
  nodes_.push_back(Node{std::move(value), {}, needs, false, {}, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor& Tape::value(Var v) const { return node(v).value; }

void Tape::accumulate(Var v, const Tensor& grad) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (grad.shape() != n.value.shape()) {
    throw DimensionError("gradient shape " + shape_to_string(grad.shape()) +
                         " does not match value " + shape_to_string(n.value.shape()));
  }
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) n.grad[i] += grad[i];
}

Gradients Tape::backward(Var loss) {
  Node& root = node(loss);
  if (root.value.size() != 1) {
    throw UsageError("backward requires a scalar loss, got shape " +
                     shape_to_string(root.value.shape()));
  }
  for (Node& n : nodes_) {
    n.grad = Tensor();
    n.has_grad = false;
  }
  accumulate(loss, Tensor(root.value.shape(), 1.0));
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.fn) continue;
    // The closure may accumulate into earlier nodes only; copy the gradient
    // so it survives if the closure touches this node's storage.
    const Tensor g = n.grad;
    n.fn(*this, g);
  }
  Gradients out;
  for (Node& n : nodes_) {
    if (n.param.empty()) continue;
    Tensor g = n.has_grad ? n.grad : Tensor(n.value.shape());
    auto [it, inserted] = out.emplace(n.param, g);
    if (!inserted) {
      for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += g[i];
    }
  }
  return out;
}

namespace ag {
namespace {

Tape& tape_of(Var v) {
  if (!v.tape()) throw UsageError("op on an unbound Var");
  return *v.tape();
}

Tensor pointwise_mul(const Tensor& a, const Tensor& b) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

}  // namespace

Var linear(Var x, Var w, Var b) {
  Tape& tape = tape_of(x);
  Tensor y = nn::linear_forward(x.value(), w.value(), b.value());
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape& t, const Tensor& g) {
    nn::LinearGrads lg = nn::linear_backward(x.value(), w.value(), g);
    t.accumulate(x, lg.dx);
    t.accumulate(w, lg.dw);
    t.accumulate(b, lg.db);
  });
}

Var sigmoid(Var x) {
  Tape& tape = tape_of(x);
  Tensor y = nn::sigmoid(x.value());
  Tensor s = y;
  return tape.record(std::move(y), {x}, [x, s = std::move(s)](Tape& t, const Tensor& g) {
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * s[i] * (1.0 - s[i]);
    t.accumulate(x, dx);
  });
}

Var tanh(Var x) {
  Tape& tape = tape_of(x);
  Tensor y = nn::tanh(x.value());
  Tensor s = y;
  return tape.record(std::move(y), {x}, [x, s = std::move(s)](Tape& t, const Tensor& g) {
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * (1.0 - s[i] * s[i]);
    t.accumulate(x, dx);
  });
}

Var relu(Var x) {
  Tape& tape = tape_of(x);
  return tape.record(nn::relu(x.value()), {x}, [x](Tape& t, const Tensor& g) {
    const Tensor& in = x.value();
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = in[i] > 0 ? g[i] : 0.0;
    t.accumulate(x, dx);
  });
}

Var conv2d(Var x, Var kernel, Var bias) {
  Tape& tape = tape_of(x);
  Tensor y = nn::conv2d_forward(x.value(), kernel.value(), bias.value());
  return tape.record(std::move(y), {x, kernel, bias},
                     [x, kernel, bias](Tape& t, const Tensor& g) {
                       nn::Conv2dGrads cg =
                           nn::conv2d_backward(x.value(), kernel.value(), g);
                       t.accumulate(x, cg.dx);
                       t.accumulate(kernel, cg.dkernel);
                       t.accumulate(bias, cg.dbias);
                     });
}

Var batchnorm(Var x, Var gamma, Var beta, nn::BatchNormState& state, nn::Mode mode,
              std::span<const double> position_weights) {
  Tape& tape = tape_of(x);
  nn::BatchNormCache cache;
  Tensor y = nn::batchnorm_forward(x.value(), gamma.value(), beta.value(), state,
                                   mode, position_weights, &cache);
  return tape.record(std::move(y), {x, gamma, beta},
                     [x, gamma, beta, cache = std::move(cache)](Tape& t, const Tensor& g) {
                       nn::BatchNormGrads bg =
                           nn::batchnorm_backward(cache, gamma.value(), g);
                       t.accumulate(x, bg.dx);
                       t.accumulate(gamma, bg.dgamma);
                       t.accumulate(beta, bg.dbeta);
                     });
}

Var maxpool2d(Var x, std::size_t pool_t, std::size_t pool_f) {
  Tape& tape = tape_of(x);
  nn::PoolResult res = nn::maxpool2d(x.value(), pool_t, pool_f);
  return tape.record(std::move(res.out), {x},
                     [x, argmax = std::move(res.argmax)](Tape& t, const Tensor& g) {
                       t.accumulate(x, nn::maxpool2d_backward(x.shape(), argmax, g));
                     });
}

Var reshape(Var x, Shape shape) {
  Tape& tape = tape_of(x);
  return tape.record(x.value().reshaped(std::move(shape)), {x},
                     [x](Tape& t, const Tensor& g) {
                       t.accumulate(x, g.reshaped(x.shape()));
                     });
}

Var mask_frames(Var x, const Tensor& mask) {
  Tape& tape = tape_of(x);
  const Tensor& in = x.value();
  expect_rank(mask, 2, "frame mask");
  if (in.rank() < 2 || in.dim(0) != mask.dim(0) || in.dim(1) != mask.dim(1)) {
    throw DimensionError("mask_frames: mask " + shape_to_string(mask.shape()) +
                         " vs input " + shape_to_string(in.shape()));
  }
  const std::size_t per_frame = in.size() / mask.size();
  Tensor expanded(in.shape());
  for (std::size_t f = 0; f < mask.size(); ++f)
    for (std::size_t k = 0; k < per_frame; ++k) expanded[f * per_frame + k] = mask[f];
  Tensor y = pointwise_mul(in, expanded);
  return tape.record(std::move(y), {x},
                     [x, m = std::move(expanded)](Tape& t, const Tensor& g) {
                       t.accumulate(x, pointwise_mul(g, m));
                     });
}

Var gru_cell(Var x, Var h_prev, Var wi, Var wh, Var b,
             std::span<const double> row_mask) {
  Tape& tape = tape_of(x);
  nn::GruCache cache;
  Tensor h = nn::gru_cell_forward(x.value(), h_prev.value(), wi.value(), wh.value(),
                                  b.value(), &cache);
  std::vector<double> mask(row_mask.begin(), row_mask.end());
  if (!mask.empty()) {
    const std::size_t rows = h.rank() == 2 ? h.dim(0) : 1;
    if (mask.size() != rows) throw DimensionError("gru_cell: row mask length");
    const std::size_t hidden = h.size() / rows;
    const Tensor& hp = h_prev.value();
    for (std::size_t i = 0; i < rows; ++i) {
      if (mask[i] != 0.0) continue;
      for (std::size_t k = 0; k < hidden; ++k) h[i * hidden + k] = hp[i * hidden + k];
    }
  }
  return tape.record(
      std::move(h), {x, h_prev, wi, wh, b},
      [x, h_prev, wi, wh, b, cache = std::move(cache), mask = std::move(mask)](
          Tape& t, const Tensor& g) {
        if (mask.empty()) {
          nn::GruGrads gg = nn::gru_cell_backward(x.value(), h_prev.value(), wi.value(),
                                                  wh.value(), cache, g);
          t.accumulate(x, gg.dx);
          t.accumulate(h_prev, gg.dh_prev);
          t.accumulate(wi, gg.dwi);
          t.accumulate(wh, gg.dwh);
          t.accumulate(b, gg.db);
          return;
        }
        const std::size_t rows = mask.size();
        const std::size_t hidden = g.size() / rows;
        Tensor active = g;
        for (std::size_t i = 0; i < rows; ++i) {
          if (mask[i] != 0.0) continue;
          for (std::size_t k = 0; k < hidden; ++k) active[i * hidden + k] = 0.0;
        }
        nn::GruGrads gg = nn::gru_cell_backward(x.value(), h_prev.value(), wi.value(),
                                                wh.value(), cache, active);
        for (std::size_t i = 0; i < rows; ++i) {
          if (mask[i] != 0.0) continue;
          for (std::size_t k = 0; k < hidden; ++k)
            gg.dh_prev[i * hidden + k] += g[i * hidden + k];
        }
        t.accumulate(x, gg.dx);
        t.accumulate(h_prev, gg.dh_prev);
        t.accumulate(wi, gg.dwi);
        t.accumulate(wh, gg.dwh);
        t.accumulate(b, gg.db);
      });
}

Var time_slice(Var x, std::size_t t) {
  Tape& tape = tape_of(x);
  const Tensor& in = x.value();
  expect_rank(in, 3, "time_slice input");
  const std::size_t batch = in.dim(0), steps = in.dim(1), d = in.dim(2);
  if (t >= steps) throw DimensionError("time_slice: frame out of range");
  Tensor y({batch, d});
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(in.data().begin() + (b * steps + t) * d, d, y.data().begin() + b * d);
  return tape.record(std::move(y), {x}, [x, t](Tape& tp, const Tensor& g) {
    const std::size_t batch = x.shape()[0], steps = x.shape()[1], d = x.shape()[2];
    Tensor dx(x.shape());
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(g.data().begin() + b * d, d, dx.data().begin() + (b * steps + t) * d);
    tp.accumulate(x, dx);
  });
}

Var stack_time(std::span<const Var> frames) {
  if (frames.empty()) throw ArgumentError("stack_time: no frames");
  Tape& tape = tape_of(frames[0]);
  const Shape& s0 = frames[0].shape();
  if (s0.size() != 2) throw DimensionError("stack_time: frames must be (B, D)");
  const std::size_t batch = s0[0], d = s0[1], steps = frames.size();
  Tensor y({batch, steps, d});
  for (std::size_t t = 0; t < steps; ++t) {
    expect_shape(frames[t].value(), s0, "stack_time frame");
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(frames[t].value().data().begin() + b * d, d,
                  y.data().begin() + (b * steps + t) * d);
  }
  std::vector<Var> inputs(frames.begin(), frames.end());
  return tape.record(std::move(y), frames, [inputs](Tape& tp, const Tensor& g) {
    const std::size_t steps = inputs.size();
    const std::size_t batch = g.dim(0), d = g.dim(2);
    for (std::size_t t = 0; t < steps; ++t) {
      if (!tp.requires_grad(inputs[t])) continue;
      Tensor df({batch, d});
      for (std::size_t b = 0; b < batch; ++b)
        std::copy_n(g.data().begin() + (b * steps + t) * d, d, df.data().begin() + b * d);
      tp.accumulate(inputs[t], df);
    }
  });
}

Var concat_last(Var a, Var b) {
  Tape& tape = tape_of(a);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.rank() == 0 || x.rank() != y.rank() ||
      !std::equal(x.shape().begin(), x.shape().end() - 1, y.shape().begin())) {
    throw DimensionError("concat_last: " + shape_to_string(x.shape()) + " vs " +
                         shape_to_string(y.shape()));
  }
  const std::size_t da = x.shape().back(), db = y.shape().back();
  const std::size_t rows = da ? x.size() / da : y.size() / db;
  Shape s = x.shape();
  s.back() = da + db;
  Tensor out(s);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(x.data().begin() + r * da, da, out.data().begin() + r * (da + db));
    std::copy_n(y.data().begin() + r * db, db, out.data().begin() + r * (da + db) + da);
  }
  return tape.record(std::move(out), {a, b}, [a, b, rows, da, db](Tape& t, const Tensor& g) {
    Tensor ga(a.shape()), gb(b.shape());
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(g.data().begin() + r * (da + db), da, ga.data().begin() + r * da);
      std::copy_n(g.data().begin() + r * (da + db) + da, db, gb.data().begin() + r * db);
    }
    t.accumulate(a, ga);
    t.accumulate(b, gb);
  });
}

Var assemble_columns(std::span<const Var> columns,
                     std::span<const std::size_t> target_columns) {
  if (columns.empty() || columns.size() != target_columns.size()) {
    throw DimensionError("assemble_columns: column/target count mismatch");
  }
  Tape& tape = tape_of(columns[0]);
  const std::size_t cols = columns.size();
  const std::size_t rows = columns[0].value().size();
  std::vector<bool> seen(cols, false);
  for (std::size_t c : target_columns) {
    if (c >= cols || seen[c]) throw UsageError("assemble_columns: targets not a permutation");
    seen[c] = true;
  }
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < cols; ++i) {
    const Tensor& v = columns[i].value();
    if (v.size() != rows) throw DimensionError("assemble_columns: ragged columns");
    for (std::size_t r = 0; r < rows; ++r) out.at(r, target_columns[i]) = v[r];
  }
  std::vector<Var> inputs(columns.begin(), columns.end());
  std::vector<std::size_t> targets(target_columns.begin(), target_columns.end());
  return tape.record(std::move(out), columns,
                     [inputs, targets](Tape& t, const Tensor& g) {
                       const std::size_t rows = g.dim(0);
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         if (!t.requires_grad(inputs[i])) continue;
                         Tensor gc(inputs[i].shape());
                         for (std::size_t r = 0; r < rows; ++r) gc[r] = g.at(r, targets[i]);
                         t.accumulate(inputs[i], gc);
                       }
                     });
}

Var gru_over_time(Var x, Var wi, Var wh, Var b, const Tensor* mask, bool reverse) {
  Tape& tape = tape_of(x);
  expect_rank(x.value(), 3, "gru_over_time input");
  const std::size_t batch = x.shape()[0], steps = x.shape()[1];
  const std::size_t hidden = wh.shape()[1];
  if (steps == 0) throw ArgumentError("gru_over_time: empty sequence");
  if (mask) expect_shape(*mask, {batch, steps}, "gru_over_time mask");
  Var h = tape.constant(Tensor({batch, hidden}));
  std::vector<Var> outputs(steps);
  std::vector<double> row_mask(mask ? batch : 0);
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    if (mask) {
      for (std::size_t i = 0; i < batch; ++i) row_mask[i] = mask->at(i, t);
    }
    h = gru_cell(time_slice(x, t), h, wi, wh, b, row_mask);
    outputs[t] = h;
  }
  return stack_time(outputs);
}

Var bce(Var z, const Tensor& y, const Tensor* mask) {
  Tape& tape = tape_of(z);
  const double loss = nn::bce_loss(z.value(), y, mask);
  Tensor grad = nn::bce_grad(z.value(), y, mask);
  return tape.record(Tensor({1}, loss), {z}, [z, grad = std::move(grad)](Tape& t, const Tensor& g) {
    Tensor dz = grad;
    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] *= g[0];
    t.accumulate(z, dz);
  });
}

Var sum(Var x) {
  Tape& tape = tape_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape.record(Tensor({1}, s), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(x.shape(), g[0]));
  });
}

Var weighted_sum(Var x, const Tensor& weights) {
  Tape& tape = tape_of(x);
  if (weights.size() != x.value().size()) {
    throw DimensionError("weighted_sum: weight count mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += weights[i] * x.value()[i];
  return tape.record(Tensor({1}, s), {x}, [x, w = weights](Tape& t, const Tensor& g) {
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = w[i] * g[0];
    t.accumulate(x, dx);
  });
}

}  // namespace ag
}  // namespace csed
