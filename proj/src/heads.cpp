// SPDX-License-Identifier: Apache-2.0
#include "csed/heads.hpp"

#include "csed/errors.hpp"
#include "csed/nn.hpp"

namespace csed {
namespace {

const Var& param(const std::map<std::string, Var>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw UsageError("missing head parameter '" + name + "'");
  return it->second;
}

std::map<std::string, Var> bind_constants(Tape& tape, const ParamStore& params) {
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : params.params()) {
    if (name.rfind("head.", 0) == 0) vars.emplace(name, tape.constant(value));
  }
  return vars;
}

std::size_t chain_classes(const std::map<std::string, Var>& params, std::size_t latent) {
  const Shape& wi = param(params, "head.gru.wi").shape();
  if (wi[1] <= latent) throw DimensionError("chain head: GRU input too narrow for latent width");
  return wi[1] - latent;
}

}  // namespace

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::independent: return "independent";
    case HeadKind::gru: return "gru";
    case HeadKind::chain: return "chain";
  }
  return "?";
}

HeadKind head_kind_from_string(const std::string& s) {
  if (s == "independent") return HeadKind::independent;
  if (s == "gru") return HeadKind::gru;
  if (s == "chain") return HeadKind::chain;
  throw ConfigError("unknown head '" + s + "' (expected independent, gru or chain)");
}

void init_head(const HeadConfig& cfg, ParamStore& params, Rng& rng) {
  if (cfg.latent_dim == 0 || cfg.classes == 0) throw ConfigError("head: zero latent width or classes");
  if (cfg.kind == HeadKind::independent) {
    params.add("head.linear.w", init_uniform({cfg.classes, cfg.latent_dim}, cfg.latent_dim, rng));
    params.add("head.linear.b", init_uniform({cfg.classes}, cfg.latent_dim, rng));
    return;
  }
  if (cfg.hidden == 0) throw ConfigError("head: zero recurrent hidden size");
  const std::size_t h = cfg.hidden, din = cfg.recurrent_input();
  params.add("head.gru.wi", init_uniform({3 * h, din}, h, rng));
  params.add("head.gru.wh", init_uniform({3 * h, h}, h, rng));
  params.add("head.gru.b", init_uniform({3 * h}, h, rng));
  const std::size_t outputs = cfg.kind == HeadKind::chain ? 1 : cfg.classes;
  params.add("head.linear.w", init_uniform({outputs, h}, h, rng));
  params.add("head.linear.b", init_uniform({outputs}, h, rng));
}

ConditionVector build_condition_vector(const std::set<std::size_t>& detected,
                                       std::size_t position, const ClassOrder& order) {
  ConditionVector v(order.size(), 0.0);
  for (std::size_t c : detected) {
    if (c >= order.size()) throw UsageError("condition vector: class index out of range");
    if (order.position_of(c) >= position) {
      throw UsageError("condition vector: class " + std::to_string(c) + " at chain position " +
                       std::to_string(order.position_of(c)) + " is not before position " +
                       std::to_string(position));
    }
    v[c] = 1.0;
  }
  return v;
}

Var independent_forward(Var r, const std::map<std::string, Var>& params) {
  return ag::sigmoid(ag::linear(r, param(params, "head.linear.w"), param(params, "head.linear.b")));
}

Var gru_head_forward(Var r, const Tensor* mask, const std::map<std::string, Var>& params) {
  const Shape s = r.shape();
  if (s.size() != 3) throw DimensionError("gru head: expected (B, T, D) latent batch");
  Var h = ag::gru_over_time(r, param(params, "head.gru.wi"), param(params, "head.gru.wh"),
                            param(params, "head.gru.b"), mask, false);
  const std::size_t hidden = h.shape()[2];
  Var flat = ag::reshape(h, {s[0] * s[1], hidden});
  Var z = ag::sigmoid(ag::linear(flat, param(params, "head.linear.w"), param(params, "head.linear.b")));
  return ag::reshape(z, {s[0], s[1], z.shape()[1]});
}

Var chain_forward_teacher(Var r, const Tensor& y_true, const ClassOrder& order,
                          const std::map<std::string, Var>& params) {
  Tape& tape = *r.tape();
  expect_rank(r.value(), 2, "chain latent");
  const std::size_t rows = r.shape()[0], latent = r.shape()[1];
  const std::size_t classes = chain_classes(params, latent);
  if (order.size() != classes) throw UsageError("chain: order length does not match class count");
  expect_shape(y_true, {rows, classes}, "chain teacher labels");
  const Var& wi = param(params, "head.gru.wi");
  const Var& wh = param(params, "head.gru.wh");
  const Var& b = param(params, "head.gru.b");
  const Var& w_out = param(params, "head.linear.w");
  const Var& b_out = param(params, "head.linear.b");
  const std::size_t hidden = wh.shape()[1];

  Var h = tape.constant(Tensor({rows, hidden}));
  Tensor cond({rows, classes});
  std::vector<Var> columns;
  std::vector<std::size_t> targets;
  for (std::size_t i = 0; i < classes; ++i) {
    const std::size_t c = order[i];
    h = ag::gru_cell(ag::concat_last(r, tape.constant(cond)), h, wi, wh, b);
    columns.push_back(ag::sigmoid(ag::linear(h, w_out, b_out)));
    targets.push_back(c);
    for (std::size_t n = 0; n < rows; ++n) cond.at(n, c) = y_true.at(n, c);
  }
  return ag::assemble_columns(columns, targets);
}

ScoreMatrix independent_forward(const LatentSequence& r, const ParamStore& params) {
  return ScoreMatrix(nn::sigmoid(
      nn::linear_forward(r, params.get("head.linear.w"), params.get("head.linear.b"))));
}

ScoreMatrix gru_head_forward(const LatentSequence& r, const ParamStore& params) {
  expect_rank(r, 2, "latent sequence");
  Tape tape;
  auto vars = bind_constants(tape, params);
  Var z = gru_head_forward(tape.constant(r.reshaped({1, r.dim(0), r.dim(1)})), nullptr, vars);
  return ScoreMatrix(z.value().reshaped({r.dim(0), z.shape()[2]}));
}

ChainOutput chain_forward_inference(const LatentSequence& r, const ClassOrder& order,
                                    const ThresholdVector& thresholds,
                                    const ParamStore& params) {
  expect_rank(r, 2, "latent sequence");
  const Tensor& wi = params.get("head.gru.wi");
  const Tensor& wh = params.get("head.gru.wh");
  const Tensor& b = params.get("head.gru.b");
  const Tensor& w_out = params.get("head.linear.w");
  const Tensor& b_out = params.get("head.linear.b");
  const std::size_t frames = r.dim(0), latent = r.dim(1), hidden = wh.dim(1);
  if (wi.dim(1) <= latent) throw DimensionError("chain head: GRU input too narrow for latent width");
  const std::size_t classes = wi.dim(1) - latent;
  if (order.size() != classes) throw UsageError("chain: order length does not match class count");
  if (thresholds.size() != classes) throw DimensionError("chain: threshold count mismatch");

  // Rows are frames; each frame runs its own chain from a zero state.
  Tensor input({frames, latent + classes});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t k = 0; k < latent; ++k) input.at(t, k) = r.at(t, k);
  Tensor h({frames, hidden});
  Tensor scores({frames, classes});
  ActivityMatrix act(frames, classes);
  for (std::size_t i = 0; i < classes; ++i) {
    const std::size_t c = order[i];
    h = nn::gru_cell_forward(input, h, wi, wh, b);
    const Tensor z = nn::sigmoid(nn::linear_forward(h, w_out, b_out));
    for (std::size_t t = 0; t < frames; ++t) {
      scores.at(t, c) = z[t];
      const bool on = z[t] > thresholds[c];
      act.set(t, c, on);
      input.at(t, latent + c) = on ? 1.0 : 0.0;
    }
  }
  return {ScoreMatrix(std::move(scores)), std::move(act)};
}

ScoreMatrix chain_forward_teacher(const LatentSequence& r, const ActivityMatrix& y_true,
                                  const ClassOrder& order, const ParamStore& params) {
  Tape tape;
  auto vars = bind_constants(tape, params);
  Var z = chain_forward_teacher(tape.constant(r), y_true.to_tensor(), order, vars);
  return ScoreMatrix(z.value());
}

}  // namespace csed
