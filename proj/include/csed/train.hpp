// SPDX-License-Identifier: Apache-2.0
//
// Mini-batch BCE training with Adam, per-class threshold calibration on the
// validation split, and evaluation into a MetricsReport.
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/checkpoint.hpp"
#include "csed/data.hpp"
#include "csed/metrics.hpp"
#include "csed/model.hpp"

namespace csed {

/// Which label cells enter the loss: only real frames, or padding too.
enum class LossMask { valid_frames, all_frames };
std::string to_string(LossMask m);
LossMask loss_mask_from_string(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  HeadKind head = HeadKind::independent;
  ClassOrder order;  // chain visiting order; empty selects identity
  std::string extractor = "desk";
  std::size_t head_hidden = 0;  // 0 selects the latent width
  LossMask loss_mask = LossMask::valid_frames;

  /// Throws ConfigError unless lr >= 0 (0 freezes parameters), batch >= 1
  /// and epochs >= 1.
  void validate() const;
  nlohmann::json to_json(const std::vector<std::string>& classes) const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_frame_f1 = 0.0;  // macro, thresholds 0.5
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;

  /// Header plus one row per completed epoch.
  std::string to_csv() const;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainingHistory history;
};

/// Keeps the epoch with the highest validation frame macro F1 (earliest on
/// ties). Throws DivergenceError on a non-finite batch loss.
TrainResult train_model(const Dataset& dataset, const TrainConfig& cfg);

/// Mean masked BCE of one batch under the model (infer mode; chain heads are
/// teacher-forced).
double batch_loss(Model& model, const Batch& batch, nn::Mode mode);

/// Grid {step, 2 step, ..., < 1}, ascending.
std::vector<double> threshold_grid(double step);

/// Grid value maximizing frame F1 of class `cls` pooled over clips; ties pick
/// the smallest value.
double best_threshold(const std::vector<ScoreMatrix>& scores,
                      const std::vector<const ActivityMatrix*>& refs, std::size_t cls,
                      const std::vector<double>& grid);

/// Per-class thresholds maximizing frame F1 of that class on `split`; ties
/// pick the smallest value. Chain heads are calibrated position by position
/// in chain order with earlier thresholds already fixed.
ThresholdVector calibrate_thresholds(const Model& model, const Dataset& dataset,
                                     double step = 0.05, Split split = Split::val);

/// Inference on every clip of `split` with counts pooled across clips.
/// Throws ConfigError when the vocabularies differ.
MetricsReport evaluate(const Model& model, const Dataset& dataset, Split split,
                       const ThresholdVector& thresholds, std::size_t frames_per_segment);

}  // namespace csed
