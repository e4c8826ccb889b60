// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks for every differentiable component at desk scale
// (T <= 8, F <= 8, L <= 4). Each loss is a fixed random projection of the
// component output so every output element carries gradient.
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "csed/heads.hpp"
#include "support/gradcheck.hpp"

namespace csed::testing {

/// sum(w * v) with w drawn from a fixed seed, so repeated evaluations agree.
inline Var projection(Var v, std::uint64_t seed) {
  Rng local(seed);
  return ag::weighted_sum(v, random_tensor(v.shape(), local));
}

struct ComponentCheck {
  std::string name;
  GradCheckResult result;
};

inline std::map<std::string, Tensor> head_params(HeadKind kind, std::size_t d, std::size_t l,
                                                 std::size_t h, Rng& rng) {
  ParamStore store;
  init_head({kind, d, l, h}, store, rng);
  return store.params();
}

inline std::vector<ComponentCheck> component_grad_checks(std::size_t coordinates = 24) {
  std::vector<ComponentCheck> out;
  Rng rng(2024);
  const std::size_t b = 2, t = 8, f = 8, l = 4;

  out.push_back({"linear", grad_check({{"x", random_tensor({5, 6}, rng)},
                                       {"w", random_tensor({3, 6}, rng)},
                                       {"b", random_tensor({3}, rng)}},
                                      [](Tape&, const auto& v) {
                                        return projection(ag::linear(v.at("x"), v.at("w"), v.at("b")), 1);
                                      },
                                      rng, coordinates)});

  out.push_back({"conv2d", grad_check({{"x", random_tensor({b, t, f, 2}, rng)},
                                       {"k", random_tensor({3, 3, 2, 3}, rng)},
                                       {"b", random_tensor({3}, rng)}},
                                      [](Tape&, const auto& v) {
                                        return projection(ag::conv2d(v.at("x"), v.at("k"), v.at("b")), 2);
                                      },
                                      rng, coordinates)});

  out.push_back({"batchnorm", grad_check({{"x", random_tensor({b, t, f, 3}, rng, 2.0)},
                                          {"gamma", random_tensor({3}, rng)},
                                          {"beta", random_tensor({3}, rng)}},
                                         [](Tape&, const auto& v) {
                                           nn::BatchNormState state = nn::BatchNormState::fresh(3);
                                           return projection(ag::batchnorm(v.at("x"), v.at("gamma"), v.at("beta"),
                                                                           state, nn::Mode::train),
                                                             3);
                                         },
                                         rng, coordinates)});

  // Distinct values keep the argmax stable under the finite-difference step.
  Tensor pool_in({b, t, f, 2});
  std::vector<double> distinct(pool_in.size());
  for (std::size_t i = 0; i < distinct.size(); ++i) distinct[i] = 0.01 * static_cast<double>(i);
  rng.shuffle(distinct.begin(), distinct.end());
  for (std::size_t i = 0; i < distinct.size(); ++i) pool_in[i] = distinct[i];
  out.push_back({"maxpool", grad_check({{"x", pool_in}},
                                       [](Tape&, const auto& v) {
                                         return projection(ag::maxpool2d(v.at("x"), 1, 4), 4);
                                       },
                                       rng, coordinates)});

  const std::size_t in = 5, hid = 4;
  out.push_back({"gru cell", grad_check({{"x", random_tensor({3, in}, rng)},
                                         {"h", random_tensor({3, hid}, rng)},
                                         {"wi", random_tensor({3 * hid, in}, rng)},
                                         {"wh", random_tensor({3 * hid, hid}, rng)},
                                         {"b", random_tensor({3 * hid}, rng)}},
                                        [](Tape&, const auto& v) {
                                          return projection(ag::gru_cell(v.at("x"), v.at("h"), v.at("wi"),
                                                                         v.at("wh"), v.at("b")),
                                                            5);
                                        },
                                        rng, coordinates)});

  out.push_back({"bigru", grad_check({{"x", random_tensor({b, t, in}, rng)},
                                      {"fwd.wi", random_tensor({3 * hid, in}, rng)},
                                      {"fwd.wh", random_tensor({3 * hid, hid}, rng)},
                                      {"fwd.b", random_tensor({3 * hid}, rng)},
                                      {"bwd.wi", random_tensor({3 * hid, in}, rng)},
                                      {"bwd.wh", random_tensor({3 * hid, hid}, rng)},
                                      {"bwd.b", random_tensor({3 * hid}, rng)}},
                                     [](Tape&, const auto& v) {
                                       Var fw = ag::gru_over_time(v.at("x"), v.at("fwd.wi"), v.at("fwd.wh"),
                                                                  v.at("fwd.b"), nullptr, false);
                                       Var bw = ag::gru_over_time(v.at("x"), v.at("bwd.wi"), v.at("bwd.wh"),
                                                                  v.at("bwd.b"), nullptr, true);
                                       return projection(ag::concat_last(fw, bw), 6);
                                     },
                                     rng, coordinates)});

  const std::size_t d = 6;
  Tensor y({b * t, l});
  for (double& v : y.data()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;

  auto indep = head_params(HeadKind::independent, d, l, 0, rng);
  indep.emplace("r", random_tensor({b * t, d}, rng));
  out.push_back({"independent head", grad_check(indep,
                                                [&](Tape&, const auto& v) {
                                                  return ag::bce(independent_forward(v.at("r"), v), y);
                                                },
                                                rng, coordinates)});

  auto gru = head_params(HeadKind::gru, d, l, hid, rng);
  gru.emplace("r", random_tensor({b, t, d}, rng));
  const Tensor y3 = y.reshaped({b, t, l});
  out.push_back({"gru head", grad_check(gru,
                                        [&](Tape&, const auto& v) {
                                          return ag::bce(gru_head_forward(v.at("r"), nullptr, v), y3);
                                        },
                                        rng, coordinates)});

  auto chain = head_params(HeadKind::chain, d, l, hid, rng);
  chain.emplace("r", random_tensor({b * t, d}, rng));
  const ClassOrder order({2, 0, 3, 1}, OrderStrategy::explicit_order);
  out.push_back({"chain head (teacher forced)",
                 grad_check(chain,
                            [&](Tape&, const auto& v) {
                              return ag::bce(chain_forward_teacher(v.at("r"), y, order, v), y);
                            },
                            rng, coordinates)});
  return out;
}

}  // namespace csed::testing
