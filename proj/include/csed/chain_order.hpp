// SPDX-License-Identifier: Apache-2.0
//
// Chain orders: the sequence in which a classifier chain visits classes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace csed {

enum class OrderStrategy { explicit_order, higher_f1, lower_f1, higher_freq, lower_freq, random };

std::string to_string(OrderStrategy s);

/// Parsed form of "higher-f1", "lower-freq", "random:SEED", ...
struct OrderSpec {
  OrderStrategy strategy = OrderStrategy::explicit_order;
  std::uint64_t seed = 0;  // random only

  static OrderSpec parse(const std::string& text);
  std::string to_string() const;
  bool needs_f1() const {
    return strategy == OrderStrategy::higher_f1 || strategy == OrderStrategy::lower_f1;
  }
  friend bool operator==(const OrderSpec&, const OrderSpec&) = default;
};

/// Permutation of 0..L-1 plus a record of how it was produced.
class ClassOrder {
 public:
  ClassOrder() = default;
  /// Throws ArgumentError unless `permutation` is a permutation of 0..L-1.
  ClassOrder(std::vector<std::size_t> permutation, OrderStrategy strategy,
             std::string source = {});

  static ClassOrder identity(std::size_t classes);

  std::size_t size() const noexcept { return perm_.size(); }
  /// Class visited at chain position i.
  std::size_t operator[](std::size_t position) const { return perm_[position]; }
  std::size_t position_of(std::size_t cls) const { return pos_.at(cls); }
  const std::vector<std::size_t>& permutation() const noexcept { return perm_; }
  OrderStrategy strategy() const noexcept { return strategy_; }
  /// Inputs that produced the order: a seed or the id of a source report.
  const std::string& source() const noexcept { return source_; }

  ClassOrder reversed() const;

  /// {"strategy", "source", "classes": [names in chain order]}
  nlohmann::json to_json(const std::vector<std::string>& vocabulary) const;
  static ClassOrder from_json(const nlohmann::json& j,
                              const std::vector<std::string>& vocabulary);

  friend bool operator==(const ClassOrder& a, const ClassOrder& b) {
    return a.perm_ == b.perm_ && a.strategy_ == b.strategy_ && a.source_ == b.source_;
  }

 private:
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> pos_;
  OrderStrategy strategy_ = OrderStrategy::explicit_order;
  std::string source_;
};

enum class Direction { higher, lower };

/// Descending (higher) or ascending (lower) per-class F1; ties by class index.
ClassOrder order_from_f1(std::span<const double> per_class_f1, Direction direction,
                         std::string source = {});

/// Sorted by active-frame counts from the training split; ties by class index.
ClassOrder order_from_frequency(std::span<const std::uint64_t> active_frames,
                                Direction direction);

/// Uniform random permutation, reproducible per seed.
ClassOrder order_random(std::size_t classes, std::uint64_t seed);

}  // namespace csed
