// SPDX-License-Identifier: Apache-2.0
//
// CRNN feature extractor: conv3x3 -> batchnorm -> relu -> pool(1, k) blocks
// that reduce the frequency axis to one bin, then a bidirectional GRU over
// time. Maps a (T, F) feature sequence to a (T, 2H) latent sequence.
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/autograd.hpp"
#include "csed/nn.hpp"
#include "csed/optim.hpp"

namespace csed {

using LatentSequence = Tensor;  // (T, D)

struct ConvBlockConfig {
  std::size_t channels = 0;
  std::size_t pool_freq = 1;

  friend bool operator==(const ConvBlockConfig&, const ConvBlockConfig&) = default;
};

struct FeatureExtractorConfig {
  std::string name;
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::vector<ConvBlockConfig> blocks;
  std::size_t bigru_hidden = 0;

  std::size_t latent_dim() const { return 2 * bigru_hidden; }
  /// Channels fed to the BiGRU after the frequency axis collapses.
  std::size_t collapsed_channels() const;
  /// Throws ConfigError if the pooling schedule does not reduce F to 1.
  void validate() const;

  nlohmann::json to_json() const;
  static FeatureExtractorConfig from_json(const nlohmann::json& j);

  friend bool operator==(const FeatureExtractorConfig&, const FeatureExtractorConfig&) = default;
};

struct ExtractorPresets {
  FeatureExtractorConfig paper_scale;
  FeatureExtractorConfig desk_scale;
};

/// paper_scale: T=512, F=64, three (64 ch, pool 4) blocks, BiGRU 62 -> D=124.
/// desk_scale: T=64, F=16, two (8 ch, pool 4) blocks, BiGRU 8 -> D=16.
ExtractorPresets default_presets();
FeatureExtractorConfig preset_by_name(const std::string& name);

/// Running batchnorm statistics, one entry per conv block.
using ExtractorBuffers = std::vector<nn::BatchNormState>;

void init_extractor(const FeatureExtractorConfig& cfg, ParamStore& params,
                    ExtractorBuffers& buffers, Rng& rng);

/// Batched, differentiable extraction. `x` is (B, T, F); `mask` (B, T) marks
/// valid frames. Padded frames never influence valid outputs and come out
/// as zeros.
Var extract(Var x, const Tensor& mask, const FeatureExtractorConfig& cfg,
            const std::map<std::string, Var>& params, ExtractorBuffers& buffers,
            nn::Mode mode);

/// Single-sequence inference (or training-mode) pass without gradients.
LatentSequence extract(const Tensor& features, const FeatureExtractorConfig& cfg,
                       const ParamStore& params, ExtractorBuffers& buffers,
                       nn::Mode mode);

}  // namespace csed
