// SPDX-License-Identifier: Apache-2.0
//
// Per-frame multi-label matrices shared by heads, metrics, data and training.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csed/tensor.hpp"

namespace csed {

/// T x L binary activity (multi-hot per frame).
class ActivityMatrix {
 public:
  ActivityMatrix() = default;
  ActivityMatrix(std::size_t frames, std::size_t classes);

  /// Throws ArgumentError unless every value is exactly 0 or 1.
  static ActivityMatrix from_tensor(const Tensor& t);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t classes() const noexcept { return classes_; }

  bool operator()(std::size_t t, std::size_t c) const {
    return cells_[t * classes_ + c] != 0;
  }
  void set(std::size_t t, std::size_t c, bool active) {
    cells_[t * classes_ + c] = active ? 1 : 0;
  }

  std::span<const std::uint8_t> cells() const noexcept { return cells_; }
  Tensor to_tensor() const;

  friend bool operator==(const ActivityMatrix&, const ActivityMatrix&) = default;

 private:
  std::size_t frames_ = 0;
  std::size_t classes_ = 0;
  std::vector<std::uint8_t> cells_;
};

/// T x L scores, every element strictly inside (0, 1).
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  explicit ScoreMatrix(Tensor scores);

  std::size_t frames() const { return scores_.dim(0); }
  std::size_t classes() const { return scores_.dim(1); }
  double operator()(std::size_t t, std::size_t c) const { return scores_.at(t, c); }
  const Tensor& tensor() const noexcept { return scores_; }

 private:
  Tensor scores_;
};

/// Per-class binarization thresholds, each in (0, 1).
class ThresholdVector {
 public:
  ThresholdVector() = default;
  explicit ThresholdVector(std::vector<double> values);
  static ThresholdVector uniform(std::size_t classes, double value);

  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t c) const { return values_[c]; }
  void set(std::size_t c, double value);
  const std::vector<double>& values() const noexcept { return values_; }

  friend bool operator==(const ThresholdVector&, const ThresholdVector&) = default;

 private:
  std::vector<double> values_;
};

/// y = 1 iff z > threshold of its class.
ActivityMatrix binarize(const ScoreMatrix& scores, const ThresholdVector& thresholds);

}  // namespace csed
