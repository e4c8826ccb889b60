// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the pipeline behind the command-line tool:
// dataset synthesis, training, calibration, evaluation, order resolution and
// multi-seed head/order comparisons.
#pragma once

#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csed/data.hpp"
#include "csed/metrics.hpp"
#include "csed/train.hpp"

namespace csed {

inline constexpr const char* kArtifactVersion = "csed 1.0.0";

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitData = 3,
  kExitDivergence = 4,
  kExitIo = 5,
};

int exit_code_for(const std::exception& e);

struct ExperimentConfig {
  /// Exactly one source: a synthetic generator config or a manifest file.
  std::optional<SynthConfig> synthetic;
  std::filesystem::path manifest;

  std::string extractor = "desk";
  std::vector<HeadKind> heads{HeadKind::independent, HeadKind::gru, HeadKind::chain};
  std::vector<OrderSpec> orders{OrderSpec{OrderStrategy::higher_f1}};
  TrainConfig train;  // head, order, seed and extractor are set per run
  std::size_t frames_per_segment = 8;
  double threshold_step = 0.05;
  std::filesystem::path out = "csed-out";
  std::vector<std::uint64_t> seeds{1};

  /// Throws ConfigError on unknown keys, wrong types or invalid values.
  /// Relative manifest paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Dataset of one run. Synthetic sources are regenerated with `seed`.
Dataset load_experiment_dataset(const ExperimentConfig& cfg, std::uint64_t seed);

/// Orders needing per-class F1 take it from `baseline_f1`; throws ConfigError
/// when it is required but absent.
ClassOrder resolve_order(const OrderSpec& spec, const Dataset& dataset,
                         const std::vector<double>* baseline_f1,
                         const std::string& baseline_source = "baseline");

/// Per-class frame F1 of a saved MetricsReport (report.json).
std::vector<double> baseline_f1_from_report(const std::filesystem::path& path,
                                            const std::vector<std::string>& classes);

struct RunResult {
  HeadKind head = HeadKind::independent;
  std::string order_label;  // "-" for non-chain heads
  ClassOrder order;
  std::uint64_t seed = 0;
  TrainResult trained;      // checkpoint carries calibrated thresholds
  MetricsReport val;
  MetricsReport test;
};

/// Train, calibrate on val, evaluate val and test.
RunResult run_once(const Dataset& dataset, const ExperimentConfig& cfg, HeadKind head,
                   const ClassOrder& order, const std::string& order_label, std::uint64_t seed);

struct RunSummary {
  std::string head;
  std::string order;  // strategy label or "-"
  nlohmann::json order_classes;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  MetricsReport report;  // test split
};

struct Aggregate {
  double mean = 0.0;
  std::optional<double> stddev;  // sample std, present when n >= 2
  std::size_t n = 0;

  static Aggregate of(const std::vector<double>& values);
  nlohmann::json to_json() const;
  std::string to_text(int precision = 3) const;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<std::string> order_labels;  // chain orders in config order
  std::vector<RunSummary> runs;

  std::vector<double> values(const std::string& head, const std::string& order, MetricUnit unit) const;
  /// Chain frame F1 spread across orders within each seed, then averaged.
  std::optional<double> mean_order_stddev() const;

  nlohmann::json to_json() const;
  std::string to_text() const;
  /// One row per run.
  std::string to_csv() const;
};

// ---- commands ----------------------------------------------------------------

struct CommandOptions {
  std::optional<HeadKind> head;
  std::optional<OrderSpec> order;
  std::vector<std::uint64_t> seeds;
  std::optional<std::filesystem::path> out;
  std::optional<std::size_t> frames_per_segment;
  std::optional<std::filesystem::path> baseline_report;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> manifest;
  Split split = Split::test;
};

/// Applies command-line overrides onto a loaded config.
void apply_overrides(ExperimentConfig& cfg, const CommandOptions& opts);

void cmd_synth(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
void cmd_calibrate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);
MetricsReport cmd_eval(const ExperimentConfig* cfg, const CommandOptions& opts, std::ostream& log);
ExperimentReport cmd_compare(const ExperimentConfig& cfg, std::ostream& log);
void cmd_orders(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log);

/// Writes text, creating parent directories; throws IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace csed
