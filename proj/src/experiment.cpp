// SPDX-License-Identifier: Apache-2.0
#include "csed/experiment.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "csed/errors.hpp"

namespace csed {

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) return kExitConfig;
  if (dynamic_cast<const DivergenceError*>(&e)) return kExitDivergence;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const CheckpointError*>(&e)) return kExitIo;
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const ArgumentError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return kExitData;
  }
  return kExitFailure;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

namespace {

void ensure_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

}  // namespace

// ---- config --------------------------------------------------------------------

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed,
                    const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key, const std::string& where) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir) {
  reject_unknown(j, {"dataset", "extractor", "heads", "orders", "train", "metrics", "out", "seeds"},
                 "config");
  ExperimentConfig cfg;
  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  const auto& ds = j.at("dataset");
  reject_unknown(ds, {"synthetic", "manifest"}, "config.dataset");
  if (ds.contains("synthetic") == ds.contains("manifest")) {
    throw ConfigError("config.dataset: give exactly one of 'synthetic' or 'manifest'");
  }
  if (ds.contains("synthetic")) {
    const auto& s = ds.at("synthetic");
    try {
      cfg.synthetic = s.is_string() ? synth_preset_by_name(s.get<std::string>())
                                    : SynthConfig::from_json(s);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config.dataset.synthetic: ") + e.what());
    }
  } else {
    std::filesystem::path m = get_as<std::string>(ds, "manifest", "config.dataset");
    cfg.manifest = m.is_relative() && !base_dir.empty() ? base_dir / m : m;
  }
  if (j.contains("extractor")) cfg.extractor = get_as<std::string>(j, "extractor", "config");
  if (j.contains("heads")) {
    cfg.heads.clear();
    for (const auto& h : get_as<std::vector<std::string>>(j, "heads", "config")) {
      cfg.heads.push_back(head_kind_from_string(h));
    }
  }
  if (j.contains("orders")) {
    cfg.orders.clear();
    for (const auto& o : get_as<std::vector<std::string>>(j, "orders", "config")) {
      try {
        cfg.orders.push_back(OrderSpec::parse(o));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config.orders: ") + e.what());
      }
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"learning_rate", "batch_size", "epochs", "head_hidden", "loss_mask"},
                   "config.train");
    if (t.contains("learning_rate")) cfg.train.learning_rate = get_as<double>(t, "learning_rate", "config.train");
    if (t.contains("batch_size")) cfg.train.batch_size = get_as<std::size_t>(t, "batch_size", "config.train");
    if (t.contains("epochs")) cfg.train.epochs = get_as<std::size_t>(t, "epochs", "config.train");
    if (t.contains("head_hidden")) cfg.train.head_hidden = get_as<std::size_t>(t, "head_hidden", "config.train");
    if (t.contains("loss_mask")) {
      cfg.train.loss_mask = loss_mask_from_string(get_as<std::string>(t, "loss_mask", "config.train"));
    }
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    reject_unknown(m, {"frames_per_segment", "threshold_step"}, "config.metrics");
    if (m.contains("frames_per_segment")) {
      cfg.frames_per_segment = get_as<std::size_t>(m, "frames_per_segment", "config.metrics");
    }
    if (m.contains("threshold_step")) cfg.threshold_step = get_as<double>(m, "threshold_step", "config.metrics");
  }
  if (j.contains("out")) cfg.out = get_as<std::string>(j, "out", "config");
  if (j.contains("seeds")) cfg.seeds = get_as<std::vector<std::uint64_t>>(j, "seeds", "config");
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, path.parent_path());
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  if (synthetic) {
    j["dataset"] = {{"synthetic", synthetic->to_json()}};
  } else {
    j["dataset"] = {{"manifest", manifest.generic_string()}};
  }
  j["extractor"] = extractor;
  j["heads"] = nlohmann::json::array();
  for (HeadKind h : heads) j["heads"].push_back(to_string(h));
  j["orders"] = nlohmann::json::array();
  for (const auto& o : orders) j["orders"].push_back(o.to_string());
  j["train"] = {{"learning_rate", train.learning_rate}, {"batch_size", train.batch_size},
                {"epochs", train.epochs}, {"head_hidden", train.head_hidden},
                {"loss_mask", to_string(train.loss_mask)}};
  j["metrics"] = {{"frames_per_segment", frames_per_segment}, {"threshold_step", threshold_step}};
  j["out"] = out.generic_string();
  j["seeds"] = seeds;
  return j;
}

void ExperimentConfig::validate() const {
  if (synthetic) synthetic->validate();
  preset_by_name(extractor);
  if (heads.empty()) throw ConfigError("config: 'heads' must not be empty");
  if (orders.empty()) throw ConfigError("config: 'orders' must not be empty");
  if (seeds.empty()) throw ConfigError("config: 'seeds' must not be empty");
  if (frames_per_segment < 1) throw ConfigError("config: frames_per_segment must be >= 1");
  if (!(threshold_step > 0.0 && threshold_step <= 0.5)) {
    throw ConfigError("config: threshold_step must lie in (0, 0.5]");
  }
  train.validate();
}

void apply_overrides(ExperimentConfig& cfg, const CommandOptions& opts) {
  if (opts.head) cfg.heads = {*opts.head};
  if (opts.order) cfg.orders = {*opts.order};
  if (!opts.seeds.empty()) cfg.seeds = opts.seeds;
  if (opts.out) cfg.out = *opts.out;
  if (opts.frames_per_segment) cfg.frames_per_segment = *opts.frames_per_segment;
  cfg.validate();
}

// ---- pipeline -------------------------------------------------------------------

Dataset load_experiment_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.synthetic) {
    SynthConfig s = *cfg.synthetic;
    s.seed = seed;
    return synth_generate(s);
  }
  return load_manifest(cfg.manifest);
}

ClassOrder resolve_order(const OrderSpec& spec, const Dataset& dataset,
                         const std::vector<double>* baseline_f1,
                         const std::string& baseline_source) {
  switch (spec.strategy) {
    case OrderStrategy::higher_f1:
    case OrderStrategy::lower_f1:
      if (!baseline_f1) {
        throw ConfigError("order '" + spec.to_string() +
                          "' ranks classes by baseline per-class F1; provide a baseline report");
      }
      if (baseline_f1->size() != dataset.num_classes()) {
        throw ConfigError("baseline report covers a different number of classes");
      }
      return order_from_f1(*baseline_f1,
                           spec.strategy == OrderStrategy::higher_f1 ? Direction::higher
                                                                     : Direction::lower,
                           baseline_source);
    case OrderStrategy::higher_freq:
    case OrderStrategy::lower_freq: {
      const auto counts = active_frame_counts(dataset, Split::train);
      return order_from_frequency(counts, spec.strategy == OrderStrategy::higher_freq
                                              ? Direction::higher
                                              : Direction::lower);
    }
    case OrderStrategy::random:
      return order_random(dataset.num_classes(), spec.seed);
    case OrderStrategy::explicit_order:
      break;
  }
  throw ConfigError("order strategy cannot be resolved from a dataset");
}

std::vector<double> baseline_f1_from_report(const std::filesystem::path& path,
                                            const std::vector<std::string>& classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open baseline report '" + path.string() + "'");
  MetricsReport report;
  try {
    report = MetricsReport::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("baseline report '" + path.string() + "' unreadable: " + e.what());
  }
  if (report.classes != classes) {
    throw ConfigError("baseline report '" + path.string() + "' has a different class vocabulary");
  }
  std::vector<double> f1;
  for (const auto& c : report.frame.per_class) f1.push_back(c.f1);
  return f1;
}

RunResult run_once(const Dataset& dataset, const ExperimentConfig& cfg, HeadKind head,
                   const ClassOrder& order, const std::string& order_label, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.head = head;
  tc.order = order;
  tc.seed = seed;
  tc.extractor = cfg.extractor;
  RunResult r{head, order_label, order, seed, train_model(dataset, tc), {}, {}};
  Checkpoint& ckpt = r.trained.checkpoint;
  ckpt.thresholds = calibrate_thresholds(ckpt.model, dataset, cfg.threshold_step, Split::val);
  ckpt.threshold_source = fmt::format("calibrated on val (grid step {})", cfg.threshold_step);
  r.val = evaluate(ckpt.model, dataset, Split::val, *ckpt.thresholds, cfg.frames_per_segment);
  r.test = evaluate(ckpt.model, dataset, Split::test, *ckpt.thresholds, cfg.frames_per_segment);
  return r;
}

// ---- report ---------------------------------------------------------------------

Aggregate Aggregate::of(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  if (a.n >= 2) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

nlohmann::json Aggregate::to_json() const {
  nlohmann::json j = {{"mean", mean}, {"n", n}};
  if (stddev) j["std"] = *stddev;
  return j;
}

std::string Aggregate::to_text(int precision) const {
  if (!stddev) return fmt::format("{:.{}f}", mean, precision);
  return fmt::format("{:.{}f}±{:.{}f}", mean, precision, *stddev, precision);
}

namespace {

constexpr const char* kNoOrder = "-";

struct HeadRow {
  const char* label;
  HeadKind head;
};
constexpr HeadRow kHeadRows[] = {{"Independent", HeadKind::independent},
                                 {"GRU head", HeadKind::gru},
                                 {"Chain head", HeadKind::chain}};

double metric_of(const MetricsReport& r, MetricUnit unit) {
  return unit == MetricUnit::frame ? r.frame.macro_f1 : r.segment.macro_f1;
}

std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace

std::vector<double> ExperimentReport::values(const std::string& head, const std::string& order,
                                             MetricUnit unit) const {
  std::vector<double> out;
  for (const auto& r : runs) {
    if (r.head == head && r.order == order) out.push_back(metric_of(r.report, unit));
  }
  return out;
}

std::optional<double> ExperimentReport::mean_order_stddev() const {
  if (order_labels.size() < 2) return std::nullopt;
  std::map<std::uint64_t, std::vector<double>> per_seed;
  for (const auto& r : runs) {
    if (r.head == "chain") per_seed[r.seed].push_back(r.report.frame.macro_f1);
  }
  std::vector<double> spreads;
  for (const auto& [_, v] : per_seed) {
    if (auto s = Aggregate::of(v).stddev) spreads.push_back(*s);
  }
  if (spreads.empty()) return std::nullopt;
  return Aggregate::of(spreads).mean;
}

namespace {

// The head table lists chain runs under the first configured order.
std::string head_table_order(const ExperimentReport& rep, HeadKind head) {
  return head == HeadKind::chain && !rep.order_labels.empty() ? rep.order_labels.front() : kNoOrder;
}

}  // namespace

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json j;
  j["artifact_version"] = kArtifactVersion;
  j["config"] = config;
  j["selection_policy"] = "best validation frame macro F1 epoch; per-class thresholds calibrated on val";
  j["runs"] = nlohmann::json::array();
  for (const auto& r : runs) {
    j["runs"].push_back({{"head", r.head},
                         {"order", r.order},
                         {"order_classes", r.order_classes},
                         {"seed", r.seed},
                         {"best_epoch", r.best_epoch},
                         {"report", r.report.to_json()}});
  }
  if (runs.size() == 1) return j;

  nlohmann::json head_table = nlohmann::json::array();
  const auto base = Aggregate::of(values("independent", kNoOrder, MetricUnit::frame));
  const auto base_seg = Aggregate::of(values("independent", kNoOrder, MetricUnit::segment));
  for (const auto& row : kHeadRows) {
    const std::string head = to_string(row.head);
    const std::string order = head_table_order(*this, row.head);
    const auto frame = Aggregate::of(values(head, order, MetricUnit::frame));
    if (frame.n == 0) continue;
    const auto seg = Aggregate::of(values(head, order, MetricUnit::segment));
    nlohmann::json e = {{"method", row.label}, {"head", head}, {"order", order},
                        {"frame_f1", frame.to_json()}, {"segment_f1", seg.to_json()}};
    if (base.n > 0 && row.head != HeadKind::independent && base.mean > 0 && base_seg.mean > 0) {
      e["relative_improvement_frame_pct"] = relative_improvement(frame.mean, base.mean);
      e["relative_improvement_segment_pct"] = relative_improvement(seg.mean, base_seg.mean);
    }
    head_table.push_back(std::move(e));
  }
  j["head_table"] = std::move(head_table);

  nlohmann::json orders = nlohmann::json::array();
  std::vector<double> order_means;
  for (const auto& label : order_labels) {
    const auto frame = Aggregate::of(values("chain", label, MetricUnit::frame));
    if (frame.n == 0) continue;
    const auto seg = Aggregate::of(values("chain", label, MetricUnit::segment));
    orders.push_back({{"order", label}, {"frame_f1", frame.to_json()}, {"segment_f1", seg.to_json()}});
    order_means.push_back(frame.mean);
  }
  if (!orders.empty()) {
    j["order_table"] = {{"orders", orders}, {"average", Aggregate::of(order_means).to_json()}};
    if (auto s = mean_order_stddev()) j["order_table"]["mean_within_seed_std"] = *s;
  }
  return j;
}

std::string ExperimentReport::to_text() const {
  std::ostringstream os;
  os << kArtifactVersion << " experiment report\n";
  os << "selection: best validation frame macro F1 epoch; thresholds calibrated on val\n";
  if (runs.size() == 1) {
    const auto& r = runs.front();
    os << fmt::format("head {} | order {} | seed {}\n\n", r.head, r.order, r.seed);
    os << r.report.to_text();
    return os.str();
  }
  std::set<std::uint64_t> seeds;
  for (const auto& r : runs) seeds.insert(r.seed);
  os << "seeds: " << seeds.size() << " (mean±std across seeds)\n\n";

  const auto base = Aggregate::of(values("independent", kNoOrder, MetricUnit::frame));
  const auto base_seg = Aggregate::of(values("independent", kNoOrder, MetricUnit::segment));
  os << pad_right("Head", 20) << pad_right("Frame F1", 16) << pad_right("Segment F1", 16)
     << "Rel. to independent (frame / segment)\n";
  for (const auto& row : kHeadRows) {
    const std::string head = to_string(row.head);
    const std::string order = head_table_order(*this, row.head);
    const auto frame = Aggregate::of(values(head, order, MetricUnit::frame));
    if (frame.n == 0) continue;
    const auto seg = Aggregate::of(values(head, order, MetricUnit::segment));
    std::string rel = "-";
    if (base.n > 0 && row.head != HeadKind::independent && base.mean > 0 && base_seg.mean > 0) {
      rel = fmt::format("{:+.2f}% / {:+.2f}%", relative_improvement(frame.mean, base.mean),
                        relative_improvement(seg.mean, base_seg.mean));
    }
    os << pad_right(row.label, 20) << pad_right(frame.to_text(), 16) << pad_right(seg.to_text(), 16)
       << rel << '\n';
  }
  if (!order_labels.empty() && !values("chain", order_labels.front(), MetricUnit::frame).empty()) {
    os << "(chain head uses order " << order_labels.front() << ")\n\n";
    os << pad_right("Order", 20) << pad_right("Frame F1", 16) << "Segment F1\n";
    std::vector<double> order_means;
    for (const auto& label : order_labels) {
      const auto frame = Aggregate::of(values("chain", label, MetricUnit::frame));
      if (frame.n == 0) continue;
      const auto seg = Aggregate::of(values("chain", label, MetricUnit::segment));
      os << pad_right(label, 20) << pad_right(frame.to_text(), 16) << seg.to_text() << '\n';
      order_means.push_back(frame.mean);
    }
    os << pad_right("Average", 20) << Aggregate::of(order_means).to_text() << '\n';
    if (auto s = mean_order_stddev()) {
      os << fmt::format("within-seed std across orders (mean over seeds): {:.4f}\n", *s);
    }
  }
  return os.str();
}

std::string ExperimentReport::to_csv() const {
  std::string out = "head,order,seed,best_epoch,frame_macro_f1,segment_macro_f1\n";
  for (const auto& r : runs) {
    out += fmt::format("{},{},{},{},{:.17g},{:.17g}\n", r.head, r.order, r.seed, r.best_epoch,
                       r.report.frame.macro_f1, r.report.segment.macro_f1);
  }
  return out;
}

// ---- commands -------------------------------------------------------------------

namespace {

std::string cooccurrence_text(const CooccurrenceStats& st, const std::vector<std::string>& names) {
  std::ostringstream os;
  std::size_t width = 8;
  for (const auto& n : names) width = std::max(width, n.size() + 2);
  os << pad_right("class", width) << "marginal\n";
  for (std::size_t c = 0; c < names.size(); ++c) {
    os << pad_right(names[c], width) << fmt::format("{:.4f}", st.marginals[c]) << '\n';
  }
  os << "largest |P(j,k) - P(j)P(k)| pairs:\n";
  std::vector<std::tuple<double, std::size_t, std::size_t>> gaps;
  for (std::size_t j = 0; j < names.size(); ++j) {
    for (std::size_t k = j + 1; k < names.size(); ++k) gaps.emplace_back(st.independence_gap(j, k), j, k);
  }
  std::stable_sort(gaps.begin(), gaps.end(),
                   [](const auto& a, const auto& b) { return std::get<0>(a) > std::get<0>(b); });
  for (std::size_t i = 0; i < std::min<std::size_t>(3, gaps.size()); ++i) {
    const auto& [g, j, k] = gaps[i];
    os << fmt::format("  {} / {}: {:.4f}\n", names[j], names[k], g);
  }
  return os.str();
}

void save_run_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  ensure_directory(dir);
  save_checkpoint(r.trained.checkpoint, dir / "checkpoint.csed");
  write_text_file(dir / "history.csv", r.trained.history.to_csv());
  write_text_file(dir / "report.json", r.test.to_json().dump(2) + "\n");
  write_text_file(dir / "val_report.json", r.val.to_json().dump(2) + "\n");
}

std::string run_dir_name(HeadKind head, const std::string& order, std::uint64_t seed) {
  std::string o = order;
  std::replace(o.begin(), o.end(), ':', '-');
  return head == HeadKind::chain ? fmt::format("chain-{}-seed{}", o, seed)
                                 : fmt::format("{}-seed{}", to_string(head), seed);
}

std::vector<std::string> order_names(const ClassOrder& order, const std::vector<std::string>& classes) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < order.size(); ++i) out.push_back(classes[order[i]]);
  return out;
}

HeadKind single_head(const ExperimentConfig& cfg, const char* command) {
  if (cfg.heads.size() != 1) {
    throw ConfigError(fmt::format("{} trains one model; choose it with --head", command));
  }
  return cfg.heads.front();
}

}  // namespace

void cmd_synth(const ExperimentConfig& cfg, std::ostream& log) {
  if (!cfg.synthetic) throw ConfigError("synth needs a 'synthetic' dataset section");
  ensure_directory(cfg.out);
  SynthConfig s = *cfg.synthetic;
  s.seed = cfg.seeds.front();
  const Dataset ds = synth_generate(s);
  save_dataset(ds, cfg.out);
  log << fmt::format("wrote {} clips to {}\n", ds.clips.size(), cfg.out.string());
  log << "co-occurrence (generated clips)\n" << cooccurrence_text(cooccurrence_stats(ds), ds.classes);
  constexpr std::size_t kStreamFrames = 1'000'000;
  const ActivityMatrix stream = synth_activity(s, kStreamFrames, s.seed);
  const auto st = cooccurrence_stats(std::span<const ActivityMatrix>(&stream, 1));
  const double gap = st.max_independence_gap();
  log << fmt::format("independence check on {} frames: max gap {:.4f} (tolerance 0.01) -> independent: {}\n",
                     kStreamFrames, gap, gap <= 0.01 ? "PASS" : "FAIL");
}

void cmd_train(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const HeadKind head = single_head(cfg, "train");
  ensure_directory(cfg.out);
  const std::uint64_t seed = cfg.seeds.front();
  const Dataset ds = load_experiment_dataset(cfg, seed);
  ClassOrder order = ClassOrder::identity(ds.num_classes());
  std::string label = kNoOrder;
  if (head == HeadKind::chain) {
    const OrderSpec spec = cfg.orders.front();
    std::optional<std::vector<double>> f1;
    if (spec.needs_f1()) {
      if (!opts.baseline_report) {
        throw ConfigError("--order " + spec.to_string() +
                          " ranks classes by the baseline's per-class F1; pass --baseline-report "
                          "PATH with a report.json from evaluating an independent model");
      }
      f1 = baseline_f1_from_report(*opts.baseline_report, ds.classes);
    }
    order = resolve_order(spec, ds, f1 ? &*f1 : nullptr,
                          opts.baseline_report ? opts.baseline_report->filename().string() : "");
    label = spec.to_string();
  }
  TrainConfig tc = cfg.train;
  tc.head = head;
  tc.order = order;
  tc.seed = seed;
  tc.extractor = cfg.extractor;
  const TrainResult r = train_model(ds, tc);
  save_checkpoint(r.checkpoint, cfg.out / "checkpoint.csed");
  write_text_file(cfg.out / "history.csv", r.history.to_csv());
  log << fmt::format("trained {} head (order {}) for {} epochs; best epoch {}; wrote {}\n",
                     to_string(head), label, r.history.epochs.size(), r.history.best_epoch,
                     (cfg.out / "checkpoint.csed").string());
}

void cmd_calibrate(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  if (!opts.checkpoint) throw ConfigError("calibrate needs --checkpoint PATH");
  Checkpoint ckpt = load_checkpoint(*opts.checkpoint);
  const Dataset ds = load_experiment_dataset(cfg, cfg.seeds.front());
  ckpt.thresholds = calibrate_thresholds(ckpt.model, ds, cfg.threshold_step, Split::val);
  ckpt.threshold_source = fmt::format("calibrated on val (grid step {})", cfg.threshold_step);
  const auto path = opts.out ? *opts.out / "checkpoint.csed" : *opts.checkpoint;
  if (path.has_parent_path()) ensure_directory(path.parent_path());
  save_checkpoint(ckpt, path);
  for (std::size_t c = 0; c < ds.num_classes(); ++c) {
    log << fmt::format("{}: {:.2f}\n", ds.classes[c], (*ckpt.thresholds)[c]);
  }
  log << "wrote " << path.string() << '\n';
}

MetricsReport cmd_eval(const ExperimentConfig* cfg, const CommandOptions& opts, std::ostream& log) {
  if (!opts.checkpoint) throw ConfigError("eval needs --checkpoint PATH");
  if (!cfg && !opts.manifest) throw ConfigError("eval needs --manifest PATH or --config PATH");
  const Checkpoint ckpt = load_checkpoint(*opts.checkpoint);
  const Dataset ds = opts.manifest ? load_manifest(*opts.manifest)
                                   : load_experiment_dataset(*cfg, cfg->seeds.front());
  const std::size_t fps = opts.frames_per_segment ? *opts.frames_per_segment
                          : cfg                    ? cfg->frames_per_segment
                                                   : ExperimentConfig{}.frames_per_segment;
  const std::size_t l = ckpt.model.spec().num_classes();
  const ThresholdVector thresholds = ckpt.thresholds ? *ckpt.thresholds : ThresholdVector::uniform(l, 0.5);
  const std::string provenance = ckpt.thresholds ? ckpt.threshold_source : "default 0.5";
  const MetricsReport report = evaluate(ckpt.model, ds, opts.split, thresholds, fps);

  const std::filesystem::path out = opts.out ? *opts.out : cfg ? cfg->out : ".";
  ensure_directory(out);
  nlohmann::json j = report.to_json();
  j["thresholds"] = {{"values", thresholds.values()}, {"provenance", provenance}};
  j["split"] = to_string(opts.split);
  const std::string text = fmt::format("split: {} | head: {} | thresholds: {}\n", to_string(opts.split),
                                       to_string(ckpt.model.spec().head), provenance) +
                           report.to_text();
  write_text_file(out / "report.json", j.dump(2) + "\n");
  write_text_file(out / "report.csv", report.to_csv());
  write_text_file(out / "report.txt", text);
  log << text;
  return report;
}

ExperimentReport cmd_compare(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_directory(cfg.out);
  ExperimentReport rep;
  rep.config = cfg.to_json();
  const bool want_chain =
      std::find(cfg.heads.begin(), cfg.heads.end(), HeadKind::chain) != cfg.heads.end();
  if (want_chain) {
    for (const auto& o : cfg.orders) rep.order_labels.push_back(o.to_string());
  }
  bool needs_baseline = false;
  for (const auto& o : cfg.orders) needs_baseline |= want_chain && o.needs_f1();

  std::ostringstream timing;
  auto record = [&](const RunResult& r, const Dataset& ds, double seconds) {
    save_run_artifacts(r, cfg.out / "runs" / run_dir_name(r.head, r.order_label, r.seed));
    rep.runs.push_back({to_string(r.head), r.order_label,
                        nlohmann::json(order_names(r.order, ds.classes)), r.seed,
                        r.trained.history.best_epoch, r.test});
    log << fmt::format("  {:<12} {:<12} seed {:<4} frame F1 {:.4f}  segment F1 {:.4f}  ({:.1f} s)\n",
                       to_string(r.head), r.order_label, r.seed, r.test.frame.macro_f1,
                       r.test.segment.macro_f1, seconds);
    timing << fmt::format("{} {} seed {}: {:.2f} s\n", to_string(r.head), r.order_label, r.seed, seconds);
  };
  auto timed = [&](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult r = fn();
    return std::pair{std::move(r),
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
  };

  for (std::uint64_t seed : cfg.seeds) {
    const Dataset ds = load_experiment_dataset(cfg, seed);
    log << fmt::format("seed {}: {} clips, {} classes\n", seed, ds.clips.size(), ds.num_classes());
    const ClassOrder identity = ClassOrder::identity(ds.num_classes());
    std::optional<std::vector<double>> baseline_f1;
    for (HeadKind head : {HeadKind::independent, HeadKind::gru}) {
      const bool listed = std::find(cfg.heads.begin(), cfg.heads.end(), head) != cfg.heads.end();
      if (!listed && !(head == HeadKind::independent && needs_baseline)) continue;
      auto [r, secs] = timed([&] { return run_once(ds, cfg, head, identity, kNoOrder, seed); });
      if (head == HeadKind::independent) {
        baseline_f1.emplace();
        for (const auto& c : r.val.frame.per_class) baseline_f1->push_back(c.f1);
      }
      record(r, ds, secs);
    }
    if (!want_chain) continue;
    for (const auto& spec : cfg.orders) {
      const ClassOrder order = resolve_order(spec, ds, baseline_f1 ? &*baseline_f1 : nullptr,
                                             fmt::format("independent seed {} val", seed));
      auto [r, secs] = timed([&] { return run_once(ds, cfg, HeadKind::chain, order, spec.to_string(), seed); });
      record(r, ds, secs);
    }
  }
  write_text_file(cfg.out / "experiment_report.json", rep.to_json().dump(2) + "\n");
  write_text_file(cfg.out / "experiment_report.txt", rep.to_text());
  write_text_file(cfg.out / "experiment_runs.csv", rep.to_csv());
  write_text_file(cfg.out / "timing.log", timing.str());
  log << '\n' << rep.to_text();
  return rep;
}

void cmd_orders(const ExperimentConfig& cfg, const CommandOptions& opts, std::ostream& log) {
  const Dataset ds = load_experiment_dataset(cfg, cfg.seeds.front());
  std::optional<std::vector<double>> f1;
  if (opts.baseline_report) f1 = baseline_f1_from_report(*opts.baseline_report, ds.classes);
  for (const auto& spec : cfg.orders) {
    if (spec.needs_f1() && !f1) {
      log << spec.to_string() << ": needs --baseline-report\n";
      continue;
    }
    const ClassOrder order = resolve_order(spec, ds, f1 ? &*f1 : nullptr,
                                           opts.baseline_report ? opts.baseline_report->string() : "");
    log << spec.to_string() << ":";
    for (const auto& name : order_names(order, ds.classes)) log << " [" << name << "]";
    log << '\n';
  }
}

}  // namespace csed
