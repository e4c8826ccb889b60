// SPDX-License-Identifier: Apache-2.0
#include "csed/types.hpp"

#include <string>

#include "csed/errors.hpp"

namespace csed {

ActivityMatrix::ActivityMatrix(std::size_t frames, std::size_t classes)
    : frames_(frames), classes_(classes), cells_(frames * classes, 0) {}

ActivityMatrix ActivityMatrix::from_tensor(const Tensor& t) {
  expect_rank(t, 2, "activity matrix");
  ActivityMatrix a(t.dim(0), t.dim(1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] != 0.0 && t[i] != 1.0) {
      throw ArgumentError("activity matrix: non-binary value " + std::to_string(t[i]) +
                          " at frame " + std::to_string(i / a.classes_) + ", class " +
                          std::to_string(i % a.classes_));
    }
    a.cells_[i] = t[i] != 0.0;
  }
  return a;
}

Tensor ActivityMatrix::to_tensor() const {
  Tensor t({frames_, classes_});
  for (std::size_t i = 0; i < cells_.size(); ++i) t[i] = cells_[i];
  return t;
}

ScoreMatrix::ScoreMatrix(Tensor scores) : scores_(std::move(scores)) {
  expect_rank(scores_, 2, "score matrix");
  for (std::size_t i = 0; i < scores_.size(); ++i) {
    if (!(scores_[i] > 0.0 && scores_[i] < 1.0)) {
      throw ArgumentError("score matrix: value " + std::to_string(scores_[i]) +
                          " outside (0, 1)");
    }
  }
}

ThresholdVector::ThresholdVector(std::vector<double> values) : values_(std::move(values)) {
  for (std::size_t c = 0; c < values_.size(); ++c) set(c, values_[c]);
}

ThresholdVector ThresholdVector::uniform(std::size_t classes, double value) {
  return ThresholdVector(std::vector<double>(classes, value));
}

void ThresholdVector::set(std::size_t c, double value) {
  if (!(value > 0.0 && value < 1.0)) {
    throw ArgumentError("threshold " + std::to_string(value) + " for class " +
                        std::to_string(c) + " outside (0, 1)");
  }
  values_.at(c) = value;
}

ActivityMatrix binarize(const ScoreMatrix& scores, const ThresholdVector& thresholds) {
  if (thresholds.size() != scores.classes()) {
    throw DimensionError("binarize: " + std::to_string(thresholds.size()) +
                         " thresholds for " + std::to_string(scores.classes()) + " classes");
  }
  ActivityMatrix a(scores.frames(), scores.classes());
  for (std::size_t t = 0; t < scores.frames(); ++t)
    for (std::size_t c = 0; c < scores.classes(); ++c)
      a.set(t, c, scores(t, c) > thresholds[c]);
  return a;
}

}  // namespace csed
