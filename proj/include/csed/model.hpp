// SPDX-License-Identifier: Apache-2.0
//
// A detector = standardizer + CRNN extractor + one classifier head.
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/chain_order.hpp"
#include "csed/data.hpp"
#include "csed/featex.hpp"
#include "csed/heads.hpp"

namespace csed {

struct ModelSpec {
  FeatureExtractorConfig extractor;
  HeadKind head = HeadKind::independent;
  std::size_t head_hidden = 0;  // 0 selects the latent width D
  std::vector<std::string> classes;
  ClassOrder order;  // chain visiting order; identity for other heads

  std::size_t num_classes() const { return classes.size(); }
  HeadConfig head_config() const;
  void validate() const;

  nlohmann::json to_json() const;
  static ModelSpec from_json(const nlohmann::json& j);
};

/// Training batch of equal-length chunks.
struct Batch {
  Tensor features;   // (B, T, F), standardized, zero on padded frames
  Tensor labels;     // (B*T, L)
  Tensor mask;       // (B, T), 1 on valid frames
  Tensor loss_mask;  // (B*T, L)
};

Batch make_batch(const std::vector<const Chunk*>& chunks);

struct Prediction {
  ScoreMatrix scores;
  ActivityMatrix activities;
};

class Model {
 public:
  Model() = default;
  /// Fresh parameters drawn from `rng`.
  Model(ModelSpec spec, Standardizer normalizer, Rng& rng);
  Model(ModelSpec spec, Standardizer normalizer, ParamStore params, ExtractorBuffers buffers);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }
  const ExtractorBuffers& buffers() const noexcept { return buffers_; }
  const Standardizer& normalizer() const noexcept { return normalizer_; }

  /// Differentiable forward of a batch; returns scores (B*T, L). Chain heads
  /// are teacher-forced with the batch labels.
  Var forward(Tape& tape, const std::map<std::string, Var>& vars, const Batch& batch,
              nn::Mode mode);

  /// Standardized latent sequences of a clip, one per chunk (valid frames only).
  std::vector<LatentSequence> latents(const Clip& clip) const;

  /// Scores and activities for a clip from cached chunk latents.
  Prediction predict(const std::vector<LatentSequence>& latents,
                     const ThresholdVector& thresholds) const;
  Prediction predict(const Clip& clip, const ThresholdVector& thresholds) const;

 private:
  ModelSpec spec_;
  Standardizer normalizer_;
  ParamStore params_;
  ExtractorBuffers buffers_;
};

/// Standardized, chunked copies of every clip in `split`.
std::vector<Chunk> prepare_chunks(const Dataset& dataset, Split split,
                                  const Standardizer& normalizer, std::size_t chunk_frames);

}  // namespace csed
