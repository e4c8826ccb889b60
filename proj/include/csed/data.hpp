// SPDX-License-Identifier: Apache-2.0
//
// Clips, synthetic multi-label event streams with controllable inter-class
// dependency, CSV/manifest ingestion, chunking and splits.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/tensor.hpp"
#include "csed/types.hpp"

namespace csed {

enum class Split { train, val, test };
std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct Clip {
  std::string id;
  Tensor features;        // (T, F)
  ActivityMatrix labels;  // (T, L)
  Split split = Split::train;

  std::size_t frames() const { return labels.frames(); }
  /// Throws ArgumentError if features and labels disagree on T.
  void validate() const;
};

struct Dataset {
  std::vector<std::string> classes;  // vocabulary, unique non-empty names
  std::vector<Clip> clips;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t feature_bins() const;
  std::vector<const Clip*> split(Split s) const;
  void validate() const;
};

void validate_vocabulary(const std::vector<std::string>& classes);

// ---- synthetic generation --------------------------------------------------

struct SynthClass {
  std::string name;
  double base_logit = -3.0;  // on-switch log-odds with no active predecessors
  double stay_on = 0.8;      // probability an active event persists a frame
  double gain = 1.0;         // spectral template amplitude
  std::uint64_t template_seed = 1;  // equal seeds give identical spectra
};

struct SynthConfig {
  std::string name = "custom";
  std::size_t bins = 16;
  std::size_t frames_per_clip = 64;
  std::array<std::size_t, 3> clips_per_split{120, 40, 40};  // train, val, test
  std::vector<SynthClass> classes;
  Tensor dependency;  // (L, L), zero diagonal; row c holds A[c, k]
  double noise_level = 0.1;
  std::uint64_t seed = 1;

  std::size_t num_classes() const { return classes.size(); }
  /// Throws ConfigError on invalid probabilities, shapes or names.
  void validate() const;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Six classes with no inter-class dependency (A = 0).
SynthConfig independent_preset();
/// Six classes whose quiet events are driven by loud ones through A.
SynthConfig dependent_preset();
SynthConfig synth_preset_by_name(const std::string& name);

/// Per-class spectral templates (L, F): smooth non-negative bumps, peak 1,
/// each drawn from its class's template seed.
Tensor spectral_templates(const SynthConfig& cfg);

/// Each class follows a two-state Markov chain. From off, it switches on with
/// probability sig(base_c + sum_k A[c,k] y[t-1,k]); from on, it stays on with
/// probability 1 - (1 - stay_on_c) * (1 - that same switch probability).
/// Features are x_t = log(1 + sum_c y[t,c] gain_c g_c + noise_t) with
/// exponential noise scaled by noise_level.
Dataset synth_generate(const SynthConfig& cfg);

/// Raw activity stream of one long sequence (no features), for statistics.
ActivityMatrix synth_activity(const SynthConfig& cfg, std::size_t frames, std::uint64_t seed);

// ---- statistics ------------------------------------------------------------

struct CooccurrenceStats {
  Tensor rates;                   // (L, L): fraction of frames where both active
  std::vector<double> marginals;  // fraction of frames where each is active
  std::uint64_t frames = 0;

  /// max over pairs j != k of |rate(j,k) - marginal(j) * marginal(k)|
  double max_independence_gap() const;
  double independence_gap(std::size_t j, std::size_t k) const;
};

CooccurrenceStats cooccurrence_stats(std::span<const ActivityMatrix> labels);
CooccurrenceStats cooccurrence_stats(const Dataset& dataset);

/// Active-frame count per class over the training split.
std::vector<std::uint64_t> active_frame_counts(const Dataset& dataset, Split split = Split::train);

// ---- files -----------------------------------------------------------------

/// Reads headerless CSV feature (T x F) and label (T x L) files.
Clip load_clip(const std::filesystem::path& features_path,
               const std::filesystem::path& labels_path,
               const std::vector<std::string>& vocabulary);

/// Writes <dir>/manifest.json and one feature and one label CSV per clip.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_manifest(const std::filesystem::path& manifest_path);

// ---- chunking and splits ---------------------------------------------------

struct Chunk {
  Tensor features;        // (T_chunk, F), zero past `valid`
  ActivityMatrix labels;  // (T_chunk, L), zero past `valid`
  std::size_t valid = 0;  // frames [0, valid) are real
  std::size_t clip_index = 0;
  std::size_t offset = 0;  // first clip frame in this chunk
};

/// Non-overlapping consecutive chunks; the last one is zero-padded.
std::vector<Chunk> chunk(const Clip& clip, std::size_t chunk_frames);

/// Seeded shuffle of clip indices partitioned by `fractions` (train, val, test).
std::vector<Split> split_dataset(std::size_t clips, std::array<double, 3> fractions,
                                 std::uint64_t seed);

/// Per-bin mean and standard deviation computed on one split.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> stddev;

  static Standardizer fit(const Dataset& dataset, Split split = Split::train);
  Tensor apply(const Tensor& features) const;
};

}  // namespace csed
