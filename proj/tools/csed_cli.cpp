// SPDX-License-Identifier: Apache-2.0
//
// csed: synthesize data, train, calibrate, evaluate and compare detectors.
#include <iostream>

#include <CLI11.hpp>

#include "csed/errors.hpp"
#include "csed/experiment.hpp"

namespace {

using namespace csed;

struct Args {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string out;
  std::string head;
  std::string order;
  std::size_t frames_per_segment = 0;
  std::string baseline_report;
  std::string checkpoint;
  std::string manifest;
  std::string split = "test";
};

CommandOptions to_options(const Args& a) {
  CommandOptions o;
  if (!a.head.empty()) o.head = head_kind_from_string(a.head);
  if (!a.order.empty()) {
    try {
      o.order = OrderSpec::parse(a.order);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("--order: ") + e.what());
    }
  }
  o.seeds = a.seeds;
  if (!a.out.empty()) o.out = a.out;
  if (a.frames_per_segment > 0) o.frames_per_segment = a.frames_per_segment;
  if (!a.baseline_report.empty()) o.baseline_report = a.baseline_report;
  if (!a.checkpoint.empty()) o.checkpoint = a.checkpoint;
  if (!a.manifest.empty()) o.manifest = a.manifest;
  o.split = split_from_string(a.split);
  return o;
}

ExperimentConfig load_config(const Args& a, const CommandOptions& o) {
  if (a.config.empty()) throw ConfigError("--config PATH is required");
  ExperimentConfig cfg = ExperimentConfig::load(a.config);
  apply_overrides(cfg, o);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sound event detection with classifier chains"};
  app.require_subcommand(1);
  Args a;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", a.config, "experiment config (JSON)");
    if (config_required) c->required();
    sub->add_option("--seed", a.seeds, "seed (repeatable)")->take_all();
    sub->add_option("--out", a.out, "output directory");
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  common(synth, true);
  auto* train = app.add_subcommand("train", "train one model");
  common(train, true);
  train->add_option("--head", a.head, "independent|gru|chain");
  train->add_option("--order", a.order, "higher-f1|lower-f1|higher-freq|lower-freq|random:SEED");
  train->add_option("--baseline-report", a.baseline_report, "baseline report.json for F1 orders");
  auto* calibrate = app.add_subcommand("calibrate", "calibrate per-class thresholds on val");
  common(calibrate, true);
  calibrate->add_option("--checkpoint", a.checkpoint, "checkpoint to calibrate")->required();
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  common(eval, false);
  eval->add_option("--checkpoint", a.checkpoint, "checkpoint")->required();
  eval->add_option("--manifest", a.manifest, "dataset manifest.json");
  eval->add_option("--frames-per-segment", a.frames_per_segment, "segment length in frames")
      ->check(CLI::PositiveNumber);
  eval->add_option("--split", a.split, "train|val|test");
  auto* compare = app.add_subcommand("compare", "train and compare heads and chain orders");
  common(compare, true);
  compare->add_option("--head", a.head, "restrict to one head");
  compare->add_option("--order", a.order, "restrict to one chain order");
  compare->add_option("--frames-per-segment", a.frames_per_segment, "segment length in frames")
      ->check(CLI::PositiveNumber);
  auto* orders = app.add_subcommand("orders", "print chain orders");
  common(orders, true);
  orders->add_option("--order", a.order, "one strategy instead of the configured list");
  orders->add_option("--baseline-report", a.baseline_report, "baseline report.json for F1 orders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    const CommandOptions opts = to_options(a);
    if (*synth) {
      cmd_synth(load_config(a, opts), std::cout);
    } else if (*train) {
      cmd_train(load_config(a, opts), opts, std::cout);
    } else if (*calibrate) {
      cmd_calibrate(load_config(a, opts), opts, std::cout);
    } else if (*eval) {
      if (a.config.empty()) {
        cmd_eval(nullptr, opts, std::cout);
      } else {
        const ExperimentConfig cfg = load_config(a, opts);
        cmd_eval(&cfg, opts, std::cout);
      }
    } else if (*compare) {
      cmd_compare(load_config(a, opts), std::cout);
    } else if (*orders) {
      cmd_orders(load_config(a, opts), opts, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
  return kExitOk;
}
