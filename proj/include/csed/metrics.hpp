// SPDX-License-Identifier: Apache-2.0
//
// Frame-based and segment-based F1 for polyphonic detection, macro-averaged
// over classes.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/types.hpp"

namespace csed {

enum class MetricUnit { frame, segment };

struct ConfusionCounts {
  MetricUnit unit = MetricUnit::frame;
  std::vector<std::uint64_t> tp, fp, fn;
  std::uint64_t units = 0;  // frames or segments evaluated

  explicit ConfusionCounts(std::size_t classes = 0, MetricUnit u = MetricUnit::frame)
      : unit(u), tp(classes), fp(classes), fn(classes) {}

  std::size_t classes() const noexcept { return tp.size(); }
  /// Sums counts of another clip; units and class counts must agree.
  ConfusionCounts& operator+=(const ConfusionCounts& other);

  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts frame_counts(const ActivityMatrix& pred, const ActivityMatrix& ref);

/// A class is active in a segment iff it is active in any of its frames; a
/// trailing partial segment counts as a full one.
ConfusionCounts segment_counts(const ActivityMatrix& pred, const ActivityMatrix& ref,
                               std::size_t frames_per_segment);

struct ClassScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct F1Summary {
  std::vector<ClassScore> per_class;
  double macro_f1 = 0.0;
};

/// F1_c = 2TP / (2TP + FP + FN), 0 when the denominator is 0; macro is the
/// mean over all classes.
F1Summary f1_from_counts(const ConfusionCounts& counts);

/// 100 * (candidate - baseline) / baseline. Throws ArgumentError if baseline <= 0.
double relative_improvement(double candidate, double baseline);

struct MetricsReport {
  std::vector<std::string> classes;
  ConfusionCounts frame_counts{0, MetricUnit::frame};
  ConfusionCounts segment_counts{0, MetricUnit::segment};
  F1Summary frame;
  F1Summary segment;
  std::size_t frames_per_segment = 1;

  static MetricsReport from_counts(std::vector<std::string> classes, ConfusionCounts frames,
                                   ConfusionCounts segments, std::size_t frames_per_segment);

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  /// One row per class plus a final "macro" row.
  std::string to_csv() const;
  /// Aligned per-class table (frame and segment F1) for humans.
  std::string to_text() const;
};

}  // namespace csed
