// SPDX-License-Identifier: Apache-2.0
#include "csed/chain_order.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csed/errors.hpp"
#include "csed/optim.hpp"

namespace csed {

std::string to_string(OrderStrategy s) {
  switch (s) {
    case OrderStrategy::explicit_order: return "explicit";
    case OrderStrategy::higher_f1: return "higher-f1";
    case OrderStrategy::lower_f1: return "lower-f1";
    case OrderStrategy::higher_freq: return "higher-freq";
    case OrderStrategy::lower_freq: return "lower-freq";
    case OrderStrategy::random: return "random";
  }
  return "?";
}

namespace {

OrderStrategy strategy_from_string(const std::string& s) {
  for (auto st : {OrderStrategy::explicit_order, OrderStrategy::higher_f1,
                  OrderStrategy::lower_f1, OrderStrategy::higher_freq,
                  OrderStrategy::lower_freq, OrderStrategy::random}) {
    if (to_string(st) == s) return st;
  }
  throw ConfigError("unknown order strategy '" + s + "'");
}

template <typename Key>
std::vector<std::size_t> sort_by_key(std::span<const Key> keys, Direction direction) {
  std::vector<std::size_t> idx(keys.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return direction == Direction::higher ? keys[a] > keys[b] : keys[a] < keys[b];
  });
  return idx;
}

}  // namespace

OrderSpec OrderSpec::parse(const std::string& text) {
  OrderSpec spec;
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  if (head == "random") {
    spec.strategy = OrderStrategy::random;
    if (colon == std::string::npos) throw ConfigError("order 'random' needs a seed: random:SEED");
    const std::string seed = text.substr(colon + 1);
    if (seed.empty() || !std::all_of(seed.begin(), seed.end(), ::isdigit)) {
      throw ConfigError("invalid random order seed '" + seed + "'");
    }
    spec.seed = std::stoull(seed);
    return spec;
  }
  if (colon != std::string::npos) throw ConfigError("unexpected argument in order '" + text + "'");
  spec.strategy = strategy_from_string(head);
  if (spec.strategy == OrderStrategy::explicit_order) {
    throw ConfigError("order must be one of higher-f1, lower-f1, higher-freq, lower-freq, random:SEED");
  }
  return spec;
}

std::string OrderSpec::to_string() const {
  if (strategy == OrderStrategy::random) return "random:" + std::to_string(seed);
  return csed::to_string(strategy);
}

ClassOrder::ClassOrder(std::vector<std::size_t> permutation, OrderStrategy strategy,
                       std::string source)
    : perm_(std::move(permutation)), pos_(perm_.size()), strategy_(strategy),
      source_(std::move(source)) {
  if (perm_.empty()) throw ArgumentError("class order: empty permutation");
  std::vector<bool> seen(perm_.size(), false);
  for (std::size_t i = 0; i < perm_.size(); ++i) {
    const std::size_t c = perm_[i];
    if (c >= perm_.size() || seen[c]) {
      throw ArgumentError("class order: not a permutation of 0.." +
                          std::to_string(perm_.size() - 1));
    }
    seen[c] = true;
    pos_[c] = i;
  }
}

ClassOrder ClassOrder::identity(std::size_t classes) {
  std::vector<std::size_t> p(classes);
  std::iota(p.begin(), p.end(), std::size_t{0});
  return ClassOrder(std::move(p), OrderStrategy::explicit_order);
}

ClassOrder ClassOrder::reversed() const {
  return ClassOrder(std::vector<std::size_t>(perm_.rbegin(), perm_.rend()), strategy_, source_);
}

nlohmann::json ClassOrder::to_json(const std::vector<std::string>& vocabulary) const {
  if (vocabulary.size() != perm_.size()) {
    throw ConfigError("class order over " + std::to_string(perm_.size()) +
                      " classes vs vocabulary of " + std::to_string(vocabulary.size()));
  }
  nlohmann::json names = nlohmann::json::array();
  for (std::size_t c : perm_) names.push_back(vocabulary[c]);
  return {{"strategy", csed::to_string(strategy_)}, {"source", source_}, {"classes", names}};
}

ClassOrder ClassOrder::from_json(const nlohmann::json& j,
                                 const std::vector<std::string>& vocabulary) {
  std::vector<std::size_t> perm;
  for (const auto& name : j.at("classes")) {
    auto it = std::find(vocabulary.begin(), vocabulary.end(), name.get<std::string>());
    if (it == vocabulary.end()) {
      throw ConfigError("class order names unknown class '" + name.get<std::string>() + "'");
    }
    perm.push_back(static_cast<std::size_t>(it - vocabulary.begin()));
  }
  if (perm.size() != vocabulary.size()) {
    throw ConfigError("class order lists " + std::to_string(perm.size()) +
                      " classes, vocabulary has " + std::to_string(vocabulary.size()));
  }
  return ClassOrder(std::move(perm), strategy_from_string(j.at("strategy").get<std::string>()),
                    j.value("source", std::string{}));
}

ClassOrder order_from_f1(std::span<const double> per_class_f1, Direction direction,
                         std::string source) {
  if (per_class_f1.empty()) throw ArgumentError("order_from_f1: no classes");
  for (double f : per_class_f1) {
    if (!std::isfinite(f)) throw ArgumentError("order_from_f1: non-finite F1 score");
  }
  return ClassOrder(sort_by_key(per_class_f1, direction),
                    direction == Direction::higher ? OrderStrategy::higher_f1
                                                   : OrderStrategy::lower_f1,
                    std::move(source));
}

ClassOrder order_from_frequency(std::span<const std::uint64_t> active_frames,
                                Direction direction) {
  if (active_frames.empty()) throw ArgumentError("order_from_frequency: no classes");
  return ClassOrder(sort_by_key(active_frames, direction),
                    direction == Direction::higher ? OrderStrategy::higher_freq
                                                   : OrderStrategy::lower_freq,
                    "training-split active frames");
}

ClassOrder order_random(std::size_t classes, std::uint64_t seed) {
  if (classes == 0) throw ArgumentError("order_random: no classes");
  std::vector<std::size_t> p(classes);
  std::iota(p.begin(), p.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(p.begin(), p.end());
  return ClassOrder(std::move(p), OrderStrategy::random, "seed=" + std::to_string(seed));
}

}  // namespace csed
