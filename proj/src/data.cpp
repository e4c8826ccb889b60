// SPDX-License-Identifier: Apache-2.0
#include "csed/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "csed/errors.hpp"
#include "csed/nn.hpp"
#include "csed/optim.hpp"

namespace csed {

namespace fs = std::filesystem;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

void Clip::validate() const {
  expect_rank(features, 2, "clip '" + id + "' features");
  if (features.dim(0) != labels.frames()) {
    throw ArgumentError("clip '" + id + "': " + std::to_string(features.dim(0)) +
                        " feature frames vs " + std::to_string(labels.frames()) + " label frames");
  }
}

std::size_t Dataset::feature_bins() const {
  return clips.empty() ? 0 : clips.front().features.dim(1);
}

std::vector<const Clip*> Dataset::split(Split s) const {
  std::vector<const Clip*> out;
  for (const Clip& c : clips)
    if (c.split == s) out.push_back(&c);
  return out;
}

void validate_vocabulary(const std::vector<std::string>& classes) {
  if (classes.empty()) throw ConfigError("vocabulary is empty");
  std::set<std::string> seen;
  for (const auto& c : classes) {
    if (c.empty()) throw ConfigError("vocabulary contains an empty class name");
    if (!seen.insert(c).second) throw ConfigError("duplicate class name '" + c + "'");
  }
}

void Dataset::validate() const {
  validate_vocabulary(classes);
  const std::size_t bins = feature_bins();
  for (const Clip& c : clips) {
    c.validate();
    if (c.labels.classes() != classes.size()) {
      throw ConfigError("clip '" + c.id + "' has " + std::to_string(c.labels.classes()) +
                        " label columns for " + std::to_string(classes.size()) + " classes");
    }
    if (c.features.dim(1) != bins) throw ConfigError("clip '" + c.id + "' has a different bin count");
  }
}

// ---- synthetic generation --------------------------------------------------

void SynthConfig::validate() const {
  const std::size_t l = classes.size();
  if (l == 0) throw ConfigError("synth: no classes");
  if (bins == 0 || frames_per_clip == 0) throw ConfigError("synth: zero bins or frames per clip");
  std::vector<std::string> names;
  for (const auto& c : classes) {
    names.push_back(c.name);
    if (!(c.stay_on > 0.0 && c.stay_on < 1.0)) {
      throw ConfigError("synth: class '" + c.name + "' persistence must lie in (0, 1)");
    }
    if (!std::isfinite(c.base_logit) || !std::isfinite(c.gain) || c.gain < 0.0) {
      throw ConfigError("synth: class '" + c.name + "' has invalid base logit or gain");
    }
  }
  validate_vocabulary(names);
  if (dependency.shape() != Shape{l, l}) throw ConfigError("synth: dependency matrix must be L x L");
  for (std::size_t i = 0; i < l; ++i) {
    if (dependency.at(i, i) != 0.0) throw ConfigError("synth: dependency diagonal must be zero");
  }
  try {
    dependency.check_finite("synth dependency");
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) throw ConfigError("synth: invalid noise level");
}

nlohmann::json SynthConfig::to_json() const {
  nlohmann::json cls = nlohmann::json::array();
  for (const auto& c : classes) {
    cls.push_back({{"name", c.name}, {"base_logit", c.base_logit}, {"stay_on", c.stay_on}, {"gain", c.gain},
                   {"template_seed", c.template_seed}});
  }
  nlohmann::json dep = nlohmann::json::array();
  for (std::size_t i = 0; i < classes.size(); ++i) {
    std::vector<double> row(dependency.data().begin() + i * classes.size(),
                            dependency.data().begin() + (i + 1) * classes.size());
    dep.push_back(row);
  }
  return {{"name", name},
          {"bins", bins},
          {"frames_per_clip", frames_per_clip},
          {"clips_per_split", clips_per_split},
          {"classes", cls},
          {"dependency", dep},
          {"noise_level", noise_level},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {"name", "bins", "frames_per_clip", "clips_per_split",
                                              "classes", "dependency", "noise_level",
                                              "seed", "preset"};
  SynthConfig cfg;
  if (j.contains("preset")) cfg = synth_preset_by_name(j.at("preset").get<std::string>());
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("synth: unknown key '" + key + "'");
  }
  try {
    if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
    if (j.contains("bins")) cfg.bins = j.at("bins").get<std::size_t>();
    if (j.contains("frames_per_clip")) cfg.frames_per_clip = j.at("frames_per_clip").get<std::size_t>();
    if (j.contains("clips_per_split")) cfg.clips_per_split = j.at("clips_per_split").get<std::array<std::size_t, 3>>();
    if (j.contains("classes")) {
      cfg.classes.clear();
      for (const auto& c : j.at("classes")) {
        cfg.classes.push_back({c.at("name").get<std::string>(), c.at("base_logit").get<double>(),
                               c.at("stay_on").get<double>(), c.at("gain").get<double>(),
                               c.value("template_seed", std::uint64_t{cfg.classes.size() + 1})});
      }
    }
    if (j.contains("dependency")) {
      const auto rows = j.at("dependency").get<std::vector<std::vector<double>>>();
      std::vector<double> flat;
      for (const auto& r : rows) {
        if (r.size() != rows.size()) throw ConfigError("synth: dependency matrix must be square");
        flat.insert(flat.end(), r.begin(), r.end());
      }
      cfg.dependency = Tensor({rows.size(), rows.size()}, std::move(flat));
    }
    if (j.contains("noise_level")) cfg.noise_level = j.at("noise_level").get<double>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("synth: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

// Loud events: car, large vehicle, people walking. Quiet events: brakes
// squeaking, people speaking, children. Template seeds give each class its own
// spectral region in the independent preset; in the dependent preset the three
// quiet events share one template and are each driven by a loud event, so only
// the co-occurring loud event tells them apart.
enum Cls : std::size_t { kBrakes, kCar, kChildren, kLargeVehicle, kSpeaking, kWalking, kNumCls };

std::vector<SynthClass> base_classes() {
  return {{"brakes squeaking", -3.6, 0.85, 0.6, 17}, {"car", -3.2, 0.93, 2.0, 1},
          {"children", -3.6, 0.85, 0.6, 3},          {"large vehicle", -3.4, 0.93, 2.0, 27},
          {"people speaking", -3.6, 0.85, 0.6, 33},  {"people walking", -3.2, 0.93, 2.0, 31}};
}

}  // namespace

SynthConfig independent_preset() {
  SynthConfig cfg;
  cfg.name = "independent";
  cfg.classes = base_classes();
  cfg.dependency = Tensor({kNumCls, kNumCls});
  return cfg;
}

SynthConfig dependent_preset() {
  SynthConfig cfg = independent_preset();
  cfg.name = "dependent";
  // Followers fire almost only while their driver is active.
  auto& c = cfg.classes;
  for (Cls q : {kBrakes, kSpeaking, kChildren}) {
    c[q].base_logit = -8.0;
    c[q].template_seed = 3;
  }
  cfg.dependency.at(kBrakes, kCar) = 7.0;
  cfg.dependency.at(kSpeaking, kWalking) = 7.0;
  cfg.dependency.at(kChildren, kLargeVehicle) = 7.0;
  return cfg;
}

SynthConfig synth_preset_by_name(const std::string& name) {
  if (name == "independent") return independent_preset();
  if (name == "dependent") return dependent_preset();
  throw ConfigError("unknown synthetic preset '" + name + "' (expected independent or dependent)");
}

Tensor spectral_templates(const SynthConfig& cfg) {
  const std::size_t l = cfg.num_classes(), f = cfg.bins;
  Tensor g({l, f});
  const double width_lo = std::max(1.0, static_cast<double>(f) / 16.0);
  const double width_hi = std::max(1.5, static_cast<double>(f) / 6.0);
  for (std::size_t c = 0; c < l; ++c) {
    Rng rng(cfg.classes[c].template_seed);
    const double center = rng.uniform(0.0, static_cast<double>(f));
    const double width = rng.uniform(width_lo, width_hi);
    const double center2 = rng.uniform(0.0, static_cast<double>(f));
    const double weight2 = rng.uniform(0.2, 0.6);
    double peak = 0.0;
    for (std::size_t k = 0; k < f; ++k) {
      const double d1 = (static_cast<double>(k) - center) / width;
      const double d2 = (static_cast<double>(k) - center2) / width;
      const double v = std::exp(-0.5 * d1 * d1) + weight2 * std::exp(-0.5 * d2 * d2);
      g.at(c, k) = v;
      peak = std::max(peak, v);
    }
    for (std::size_t k = 0; k < f; ++k) g.at(c, k) /= peak;
  }
  return g;
}

namespace {

constexpr std::size_t kBurnInFrames = 64;

class ActivityProcess {
 public:
  explicit ActivityProcess(const SynthConfig& cfg) : cfg_(cfg), prev_(cfg.num_classes(), 0) {}

  void step(Rng& rng, std::vector<std::uint8_t>& next) {
    const std::size_t l = cfg_.num_classes();
    next.assign(l, 0);
    for (std::size_t c = 0; c < l; ++c) {
      double logit = cfg_.classes[c].base_logit;
      for (std::size_t k = 0; k < l; ++k) logit += cfg_.dependency.at(c, k) * prev_[k];
      const double p_switch = nn::sigmoid(logit);
      const double p_on =
          prev_[c] ? 1.0 - (1.0 - cfg_.classes[c].stay_on) * (1.0 - p_switch) : p_switch;
      next[c] = rng.bernoulli(p_on) ? 1 : 0;
    }
    prev_ = next;
  }

 private:
  const SynthConfig& cfg_;
  std::vector<std::uint8_t> prev_;
};

}  // namespace

ActivityMatrix synth_activity(const SynthConfig& cfg, std::size_t frames, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ActivityProcess proc(cfg);
  std::vector<std::uint8_t> y;
  for (std::size_t i = 0; i < kBurnInFrames; ++i) proc.step(rng, y);
  ActivityMatrix out(frames, cfg.num_classes());
  for (std::size_t t = 0; t < frames; ++t) {
    proc.step(rng, y);
    for (std::size_t c = 0; c < y.size(); ++c) out.set(t, c, y[c]);
  }
  return out;
}

Dataset synth_generate(const SynthConfig& cfg) {
  cfg.validate();
  const std::size_t l = cfg.num_classes(), f = cfg.bins, frames = cfg.frames_per_clip;
  const Tensor templates = spectral_templates(cfg);
  Dataset ds;
  for (const auto& c : cfg.classes) ds.classes.push_back(c.name);
  Rng rng(cfg.seed);
  const Split splits[3] = {Split::train, Split::val, Split::test};
  std::size_t index = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t n = 0; n < cfg.clips_per_split[s]; ++n, ++index) {
      Clip clip;
      char id[32];
      std::snprintf(id, sizeof id, "clip%05zu", index);
      clip.id = id;
      clip.split = splits[s];
      clip.features = Tensor({frames, f});
      clip.labels = ActivityMatrix(frames, l);
      ActivityProcess proc(cfg);
      std::vector<std::uint8_t> y;
      for (std::size_t i = 0; i < kBurnInFrames; ++i) proc.step(rng, y);
      for (std::size_t t = 0; t < frames; ++t) {
        proc.step(rng, y);
        for (std::size_t k = 0; k < f; ++k) {
          double energy = 0.0;
          for (std::size_t c = 0; c < l; ++c) {
            if (y[c]) energy += cfg.classes[c].gain * templates.at(c, k);
          }
          double u;
          do {
            u = rng.uniform();
          } while (u <= 0.0);
          energy += cfg.noise_level * -std::log(u);
          clip.features.at(t, k) = std::log1p(energy);
        }
        for (std::size_t c = 0; c < l; ++c) clip.labels.set(t, c, y[c]);
      }
      ds.clips.push_back(std::move(clip));
    }
  }
  return ds;
}

// ---- statistics ------------------------------------------------------------

double CooccurrenceStats::independence_gap(std::size_t j, std::size_t k) const {
  return std::abs(rates.at(j, k) - marginals[j] * marginals[k]);
}

double CooccurrenceStats::max_independence_gap() const {
  double gap = 0.0;
  for (std::size_t j = 0; j < marginals.size(); ++j)
    for (std::size_t k = 0; k < marginals.size(); ++k)
      if (j != k) gap = std::max(gap, independence_gap(j, k));
  return gap;
}

CooccurrenceStats cooccurrence_stats(std::span<const ActivityMatrix> labels) {
  if (labels.empty()) throw ArgumentError("cooccurrence_stats: empty dataset");
  const std::size_t l = labels.front().classes();
  std::vector<std::uint64_t> both(l * l, 0);
  CooccurrenceStats s;
  for (const ActivityMatrix& a : labels) {
    if (a.classes() != l) throw DimensionError("cooccurrence_stats: class count differs between clips");
    for (std::size_t t = 0; t < a.frames(); ++t)
      for (std::size_t j = 0; j < l; ++j)
        if (a(t, j))
          for (std::size_t k = 0; k < l; ++k) both[j * l + k] += a(t, k);
    s.frames += a.frames();
  }
  if (s.frames == 0) throw ArgumentError("cooccurrence_stats: no frames");
  s.rates = Tensor({l, l});
  s.marginals.resize(l);
  const double n = static_cast<double>(s.frames);
  for (std::size_t i = 0; i < l * l; ++i) s.rates[i] = static_cast<double>(both[i]) / n;
  for (std::size_t j = 0; j < l; ++j) s.marginals[j] = s.rates.at(j, j);
  return s;
}

CooccurrenceStats cooccurrence_stats(const Dataset& dataset) {
  std::vector<ActivityMatrix> labels;
  labels.reserve(dataset.clips.size());
  for (const Clip& c : dataset.clips) labels.push_back(c.labels);
  return cooccurrence_stats(labels);
}

std::vector<std::uint64_t> active_frame_counts(const Dataset& dataset, Split split) {
  std::vector<std::uint64_t> counts(dataset.num_classes(), 0);
  for (const Clip* c : dataset.split(split))
    for (std::size_t t = 0; t < c->frames(); ++t)
      for (std::size_t k = 0; k < counts.size(); ++k) counts[k] += c->labels(t, k);
  return counts;
}

// ---- files -----------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw ParseError("empty file '" + path.string() + "'", path.string());
  return rows;
}

double parse_real(const std::string& cell, const fs::path& path, std::size_t row, std::size_t col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size() || !std::isfinite(v)) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw ParseError("'" + path.string() + "' row " + std::to_string(row) + " column " +
                         std::to_string(col) + ": not a finite number: '" + cell + "'",
                     path.string(), row, col);
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

Clip load_clip(const fs::path& features_path, const fs::path& labels_path,
               const std::vector<std::string>& vocabulary) {
  const auto frows = read_csv(features_path);
  const auto lrows = read_csv(labels_path);
  const std::size_t bins = frows.front().size();
  Tensor features({frows.size(), bins});
  for (std::size_t r = 0; r < frows.size(); ++r) {
    if (frows[r].size() != bins) {
      throw ColumnCountError("'" + features_path.string() + "' row " + std::to_string(r + 1) + " has " +
                           std::to_string(frows[r].size()) + " columns, expected " + std::to_string(bins),
                       features_path.string(), r + 1);
    }
    for (std::size_t c = 0; c < bins; ++c)
      features.at(r, c) = parse_real(frows[r][c], features_path, r + 1, c + 1);
  }
  if (lrows.size() != frows.size()) {
    throw RowCountError("row count mismatch: " + std::to_string(frows.size()) + " feature frames vs " +
                         std::to_string(lrows.size()) + " label frames",
                     labels_path.string());
  }
  ActivityMatrix labels(lrows.size(), vocabulary.size());
  for (std::size_t r = 0; r < lrows.size(); ++r) {
    if (lrows[r].size() != vocabulary.size()) {
      throw ColumnCountError("'" + labels_path.string() + "' row " + std::to_string(r + 1) + " has " +
                           std::to_string(lrows[r].size()) + " columns for a vocabulary of " +
                           std::to_string(vocabulary.size()) + " classes",
                       labels_path.string(), r + 1);
    }
    for (std::size_t c = 0; c < vocabulary.size(); ++c) {
      const std::string& cell = lrows[r][c];
      if (cell != "0" && cell != "1") {
        throw LabelValueError("'" + labels_path.string() + "' row " + std::to_string(r + 1) + " column " +
                             std::to_string(c + 1) + ": label must be 0 or 1, got '" + cell + "'",
                         labels_path.string(), r + 1, c + 1);
      }
      labels.set(r, c, cell == "1");
    }
  }
  Clip clip;
  clip.id = features_path.stem().string();
  clip.features = std::move(features);
  clip.labels = std::move(labels);
  clip.validate();
  return clip;
}

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  std::error_code ec;
  fs::create_directories(dir / "clips", ec);
  if (ec) throw IoError("cannot create '" + (dir / "clips").string() + "': " + ec.message());
  nlohmann::json clips = nlohmann::json::array();
  for (const Clip& c : dataset.clips) {
    const std::string fname = "clips/" + c.id + ".features.csv";
    const std::string lname = "clips/" + c.id + ".labels.csv";
    std::string ftext, ltext;
    for (std::size_t t = 0; t < c.frames(); ++t) {
      for (std::size_t k = 0; k < c.features.dim(1); ++k) {
        if (k) ftext += ',';
        ftext += format_real(c.features.at(t, k));
      }
      ftext += '\n';
      for (std::size_t k = 0; k < c.labels.classes(); ++k) {
        if (k) ltext += ',';
        ltext += c.labels(t, k) ? '1' : '0';
      }
      ltext += '\n';
    }
    write_text_file(dir / fname, ftext);
    write_text_file(dir / lname, ltext);
    clips.push_back({{"id", c.id}, {"features", fname}, {"labels", lname}, {"split", to_string(c.split)}});
  }
  nlohmann::json manifest = {{"format", "csed-manifest"},
                             {"version", 1},
                             {"classes", dataset.classes},
                             {"feature_bins", dataset.feature_bins()},
                             {"clips", clips}};
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + manifest_path.string() + "': " + e.what(), manifest_path.string());
  }
  Dataset ds;
  try {
    ds.classes = j.at("classes").get<std::vector<std::string>>();
    validate_vocabulary(ds.classes);
    const fs::path base = manifest_path.parent_path();
    for (const auto& c : j.at("clips")) {
      Clip clip = load_clip(base / c.at("features").get<std::string>(),
                            base / c.at("labels").get<std::string>(), ds.classes);
      clip.id = c.at("id").get<std::string>();
      clip.split = split_from_string(c.at("split").get<std::string>());
      ds.clips.push_back(std::move(clip));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("manifest '" + manifest_path.string() + "': " + e.what(), manifest_path.string());
  }
  ds.validate();
  return ds;
}

// ---- chunking and splits ---------------------------------------------------

std::vector<Chunk> chunk(const Clip& clip, std::size_t chunk_frames) {
  if (chunk_frames == 0) throw ArgumentError("chunk: chunk length must be >= 1");
  clip.validate();
  const std::size_t frames = clip.frames(), bins = clip.features.dim(1), classes = clip.labels.classes();
  std::vector<Chunk> out;
  for (std::size_t start = 0; start < frames; start += chunk_frames) {
    Chunk ch;
    ch.valid = std::min(chunk_frames, frames - start);
    ch.offset = start;
    ch.features = Tensor({chunk_frames, bins});
    ch.labels = ActivityMatrix(chunk_frames, classes);
    for (std::size_t t = 0; t < ch.valid; ++t) {
      for (std::size_t k = 0; k < bins; ++k) ch.features.at(t, k) = clip.features.at(start + t, k);
      for (std::size_t c = 0; c < classes; ++c) ch.labels.set(t, c, clip.labels(start + t, c));
    }
    out.push_back(std::move(ch));
  }
  return out;
}

std::vector<Split> split_dataset(std::size_t clips, std::array<double, 3> fractions,
                                 std::uint64_t seed) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw ConfigError("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(clips)));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(clips)));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= clips) {
    throw ConfigError("split of " + std::to_string(clips) + " clips would leave a split empty");
  }
  std::vector<std::size_t> order(clips);
  for (std::size_t i = 0; i < clips; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  std::vector<Split> out(clips, Split::test);
  for (std::size_t i = 0; i < n_train; ++i) out[order[i]] = Split::train;
  for (std::size_t i = n_train; i < n_train + n_val; ++i) out[order[i]] = Split::val;
  return out;
}

Standardizer Standardizer::fit(const Dataset& dataset, Split split) {
  const auto clips = dataset.split(split);
  if (clips.empty()) throw ArgumentError("standardizer: empty split");
  const std::size_t bins = dataset.feature_bins();
  Standardizer s{std::vector<double>(bins, 0.0), std::vector<double>(bins, 0.0)};
  double n = 0.0;
  for (const Clip* c : clips) {
    for (std::size_t t = 0; t < c->frames(); ++t)
      for (std::size_t k = 0; k < bins; ++k) s.mean[k] += c->features.at(t, k);
    n += static_cast<double>(c->frames());
  }
  for (double& m : s.mean) m /= n;
  for (const Clip* c : clips) {
    for (std::size_t t = 0; t < c->frames(); ++t) {
      for (std::size_t k = 0; k < bins; ++k) {
        const double d = c->features.at(t, k) - s.mean[k];
        s.stddev[k] += d * d;
      }
    }
  }
  for (std::size_t k = 0; k < bins; ++k) {
    s.stddev[k] = std::max(std::sqrt(s.stddev[k] / n), 1e-8);
    if (!std::isfinite(s.mean[k]) || !std::isfinite(s.stddev[k])) {
      throw ArgumentError("standardizer: bin " + std::to_string(k) + " statistics overflow");
    }
  }
  return s;
}

Tensor Standardizer::apply(const Tensor& features) const {
  expect_rank(features, 2, "standardizer input");
  if (features.dim(1) != mean.size()) throw DimensionError("standardizer: bin count mismatch");
  Tensor out(features.shape());
  for (std::size_t t = 0; t < features.dim(0); ++t)
    for (std::size_t k = 0; k < mean.size(); ++k)
      out.at(t, k) = (features.at(t, k) - mean[k]) / stddev[k];
  return out;
}

}  // namespace csed
