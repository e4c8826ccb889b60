// SPDX-License-Identifier: Apache-2.0
//
// Classifier heads over a latent sequence:
//  - independent: one linear+sigmoid binary classifier per class,
//  - gru: a GRU over time followed by linear+sigmoid (no chain),
//  - chain: a classifier chain. Per frame, classes are visited in chain
//    order; each step feeds [r_t, y_<i] to a shared GRU cell whose state is
//    carried across chain positions (reset per frame) and a shared
//    linear(H -> 1)+sigmoid scores the class at that position.
#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "csed/autograd.hpp"
#include "csed/chain_order.hpp"
#include "csed/featex.hpp"
#include "csed/optim.hpp"
#include "csed/types.hpp"

namespace csed {

enum class HeadKind { independent, gru, chain };

std::string to_string(HeadKind kind);
HeadKind head_kind_from_string(const std::string& s);

struct HeadConfig {
  HeadKind kind = HeadKind::independent;
  std::size_t latent_dim = 0;
  std::size_t classes = 0;
  std::size_t hidden = 0;  // gru and chain heads

  /// Input width of the recurrent cell: D for gru, D + L for chain.
  std::size_t recurrent_input() const {
    return kind == HeadKind::chain ? latent_dim + classes : latent_dim;
  }
};

/// Registers head parameters ("head.linear.{w,b}", "head.gru.{wi,wh,b}").
void init_head(const HeadConfig& cfg, ParamStore& params, Rng& rng);

/// Class-indexed multi-hot vector of classes detected before chain position.
using ConditionVector = std::vector<double>;

/// Entry c is 1 iff c is in `detected`. Throws UsageError if a detected class
/// sits at chain position >= `position`.
ConditionVector build_condition_vector(const std::set<std::size_t>& detected,
                                       std::size_t position, const ClassOrder& order);

// ---- differentiable batched forward passes ---------------------------------

/// r (N, D) -> scores (N, L).
Var independent_forward(Var r, const std::map<std::string, Var>& params);

/// r (B, T, D) -> scores (B, T, L).
Var gru_head_forward(Var r, const Tensor* mask, const std::map<std::string, Var>& params);

/// Teacher-forced chain: conditioning comes from y_true (N, L); r is (N, D).
Var chain_forward_teacher(Var r, const Tensor& y_true, const ClassOrder& order,
                          const std::map<std::string, Var>& params);

// ---- inference on a single latent sequence --------------------------------

ScoreMatrix independent_forward(const LatentSequence& r, const ParamStore& params);
ScoreMatrix gru_head_forward(const LatentSequence& r, const ParamStore& params);

struct ChainOutput {
  ScoreMatrix scores;
  ActivityMatrix activities;
};

/// Chain with binarized predictions as conditioning. Columns of the result
/// are class indices, not chain positions.
ChainOutput chain_forward_inference(const LatentSequence& r, const ClassOrder& order,
                                    const ThresholdVector& thresholds,
                                    const ParamStore& params);

/// Teacher-forced chain on plain tensors; y_true is (T, L).
ScoreMatrix chain_forward_teacher(const LatentSequence& r, const ActivityMatrix& y_true,
                                  const ClassOrder& order, const ParamStore& params);

}  // namespace csed
