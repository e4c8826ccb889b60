// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include <doctest.h>

#include "csed/data.hpp"
#include "csed/errors.hpp"
#include "csed/optim.hpp"

using namespace csed;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("csed_data_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string rows(std::size_t n, const std::string& row) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += row + "\n";
  return s;
}

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg = dependent_preset();
  cfg.clips_per_split = {6, 2, 2};
  cfg.frames_per_clip = 40;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic generation is seeded") {
  const Dataset a = synth_generate(small_config(3));
  const Dataset b = synth_generate(small_config(3));
  const Dataset c = synth_generate(small_config(4));
  REQUIRE(a.clips.size() == 10);
  bool differs = false;
  for (std::size_t i = 0; i < a.clips.size(); ++i) {
    CHECK(a.clips[i].features.values() == b.clips[i].features.values());
    CHECK(a.clips[i].labels == b.clips[i].labels);
    differs |= a.clips[i].labels != c.clips[i].labels;
  }
  CHECK(differs);
  CHECK(a.split(Split::train).size() == 6);
  CHECK(a.split(Split::val).size() == 2);
  CHECK(a.split(Split::test).size() == 2);
  CHECK(a.classes.size() == 6);
  CHECK(a.feature_bins() == 16);
}

TEST_CASE("strong dependency drives the follower") {
  SynthConfig cfg;
  cfg.classes = {{"driver", -1.0, 0.7, 1.0}, {"follower", -5.0, 0.01, 1.0}};
  cfg.dependency = Tensor({2, 2});
  cfg.dependency.at(1, 0) = 10.0;
  const ActivityMatrix y = synth_activity(cfg, 200000, 5);
  std::size_t after_on = 0, follow_on = 0, after_off = 0, follow_off = 0;
  for (std::size_t t = 1; t < y.frames(); ++t) {
    if (y(t - 1, 0)) {
      ++after_on;
      follow_on += y(t, 1);
    } else {
      ++after_off;
      follow_off += y(t, 1);
    }
  }
  REQUIRE(after_on > 1000);
  CHECK(static_cast<double>(follow_on) / after_on >= 0.95);
  CHECK(static_cast<double>(follow_off) / after_off <= 0.05);
}

TEST_CASE("silent noiseless frames are zero") {
  SynthConfig cfg = independent_preset();
  for (auto& c : cfg.classes) c.base_logit = -60.0;
  cfg.noise_level = 0.0;
  cfg.clips_per_split = {1, 1, 1};
  const Dataset ds = synth_generate(cfg);
  for (const Clip& clip : ds.clips)
    for (double v : clip.features.data()) CHECK(v == 0.0);
}

TEST_CASE("synth config validation and serialization") {
  SynthConfig cfg = dependent_preset();
  CHECK(SynthConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
  cfg.classes[0].stay_on = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = dependent_preset();
  cfg.dependency.at(2, 2) = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = dependent_preset();
  cfg.dependency = Tensor({5, 5});
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_THROWS_AS(synth_preset_by_name("urban"), ConfigError);
  auto j = dependent_preset().to_json();
  j["surprise"] = 1;
  CHECK_THROWS_AS(SynthConfig::from_json(j), ConfigError);
}

TEST_CASE("co-occurrence statistics") {
  ActivityMatrix y(4, 3);
  y.set(0, 0, true);
  y.set(1, 0, true);
  y.set(2, 1, true);
  y.set(3, 1, true);
  y.set(1, 2, true);
  const std::vector<ActivityMatrix> labels = {y};
  const CooccurrenceStats s = cooccurrence_stats(labels);
  CHECK(s.frames == 4);
  CHECK(s.marginals[0] == 0.5);
  CHECK(s.rates.at(0, 1) == 0.0);
  CHECK(s.rates.at(0, 2) == 0.25);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(s.rates.at(j, j) == s.marginals[j]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(s.rates.at(j, k) == s.rates.at(k, j));
  }
  CHECK(s.independence_gap(0, 1) == 0.25);
  CHECK_THROWS_AS(cooccurrence_stats(std::vector<ActivityMatrix>{}), ArgumentError);
}

TEST_CASE("presets differ in dependency") {
  const std::vector<ActivityMatrix> ind = {synth_activity(independent_preset(), 1000000, 11)};
  CHECK(cooccurrence_stats(ind).max_independence_gap() <= 0.01);
  const std::vector<ActivityMatrix> dep = {synth_activity(dependent_preset(), 1000000, 11)};
  CHECK(cooccurrence_stats(dep).max_independence_gap() >= 0.05);
}

TEST_CASE("load_clip") {
  TempDir dir;
  const std::vector<std::string> vocab = {"a", "b"};
  write(dir.path / "f.csv", "0.5,1\n2,3\n4,5\n");
  write(dir.path / "l.csv", "0,1\n1,1\n0,0\n");
  const Clip clip = load_clip(dir.path / "f.csv", dir.path / "l.csv", vocab);
  CHECK(clip.features.shape() == Shape{3, 2});
  CHECK(clip.features.at(0, 0) == 0.5);
  CHECK(clip.labels(1, 0));
  CHECK_FALSE(clip.labels(2, 1));

  write(dir.path / "bad.csv", "0,1\n1,2\n0,0\n");
  try {
    load_clip(dir.path / "f.csv", dir.path / "bad.csv", vocab);
    FAIL("accepted a non-binary label");
  } catch (const LabelValueError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
    CHECK(std::string(e.what()).find("row 2 column 2") != std::string::npos);
  }
  write(dir.path / "empty.csv", "");
  CHECK_THROWS_AS(load_clip(dir.path / "empty.csv", dir.path / "l.csv", vocab), ParseError);
  CHECK_THROWS_AS(load_clip(dir.path / "f.csv", dir.path / "empty.csv", vocab), ParseError);
  write(dir.path / "short.csv", "0,1\n1,1\n");
  CHECK_THROWS_AS(load_clip(dir.path / "f.csv", dir.path / "short.csv", vocab), RowCountError);
  CHECK_THROWS_AS(load_clip(dir.path / "f.csv", dir.path / "l.csv", {"a", "b", "c"}), ColumnCountError);
  write(dir.path / "ragged.csv", "0.5,1\n2\n4,5\n");
  CHECK_THROWS_AS(load_clip(dir.path / "ragged.csv", dir.path / "l.csv", vocab), ColumnCountError);
  CHECK_THROWS_AS(load_clip(dir.path / "missing.csv", dir.path / "l.csv", vocab), IoError);

  std::string wide = "0";
  for (int i = 1; i < 64; ++i) wide += ",0.25";
  write(dir.path / "big_f.csv", rows(512, wide));
  write(dir.path / "big_l.csv", rows(512, "1,0,0,0,0,0,0,0,0,1"));
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("c" + std::to_string(i));
  const Clip big = load_clip(dir.path / "big_f.csv", dir.path / "big_l.csv", ten);
  CHECK(big.features.shape() == Shape{512, 64});
  CHECK(big.labels.classes() == 10);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  const Dataset ds = synth_generate(small_config(9));
  save_dataset(ds, dir.path / "ds");
  const Dataset back = load_manifest(dir.path / "ds" / "manifest.json");
  CHECK(back.classes == ds.classes);
  REQUIRE(back.clips.size() == ds.clips.size());
  for (std::size_t i = 0; i < ds.clips.size(); ++i) {
    CHECK(back.clips[i].id == ds.clips[i].id);
    CHECK(back.clips[i].split == ds.clips[i].split);
    CHECK(back.clips[i].labels == ds.clips[i].labels);
    CHECK(back.clips[i].features.values() == ds.clips[i].features.values());
  }
  CHECK_THROWS_AS(load_manifest(dir.path / "nope.json"), IoError);
}

TEST_CASE("chunking") {
  Rng rng(2);
  auto make = [&](std::size_t frames) {
    Clip c;
    c.features = Tensor({frames, 3});
    for (double& v : c.features.data()) v = rng.uniform();
    c.labels = ActivityMatrix(frames, 2);
    for (std::size_t t = 0; t < frames; ++t)
      for (std::size_t k = 0; k < 2; ++k) c.labels.set(t, k, rng.bernoulli(0.3));
    return c;
  };
  const auto full = chunk(make(1024), 512);
  REQUIRE(full.size() == 2);
  CHECK(full[0].valid == 512);
  CHECK(full[1].valid == 512);
  CHECK(chunk(make(512), 512).size() == 1);

  const Clip clip = make(700);
  const auto parts = chunk(clip, 512);
  REQUIRE(parts.size() == 2);
  CHECK(parts[1].valid == 188);
  CHECK(512 - parts[1].valid == 324);
  for (std::size_t t = parts[1].valid; t < 512; ++t) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(parts[1].features.at(t, k) == 0.0);
    for (std::size_t k = 0; k < 2; ++k) CHECK_FALSE(parts[1].labels(t, k));
  }
  // Valid frames concatenated in order rebuild the clip.
  ActivityMatrix rebuilt(700, 2);
  Tensor features({700, 3});
  for (const Chunk& ch : parts)
    for (std::size_t t = 0; t < ch.valid; ++t) {
      for (std::size_t k = 0; k < 2; ++k) rebuilt.set(ch.offset + t, k, ch.labels(t, k));
      for (std::size_t k = 0; k < 3; ++k) features.at(ch.offset + t, k) = ch.features.at(t, k);
    }
  CHECK(rebuilt == clip.labels);
  CHECK(features.values() == clip.features.values());
  CHECK_THROWS_AS(chunk(clip, 0), ArgumentError);
}

TEST_CASE("split_dataset") {
  const auto a = split_dataset(10, {0.6, 0.2, 0.2}, 4);
  std::size_t counts[3] = {0, 0, 0};
  for (Split s : a) ++counts[static_cast<int>(s)];
  CHECK(counts[0] == 6);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 2);
  CHECK(split_dataset(10, {0.6, 0.2, 0.2}, 4) == a);
  CHECK_THROWS_AS(split_dataset(10, {1.0, 0.0, 0.0}, 4), ConfigError);
  CHECK_THROWS_AS(split_dataset(10, {0.5, 0.2, 0.2}, 4), ConfigError);
  CHECK_THROWS_AS(split_dataset(2, {0.6, 0.2, 0.2}, 4), ConfigError);
}

TEST_CASE("vocabulary rules") {
  CHECK_THROWS_AS(validate_vocabulary({}), ConfigError);
  CHECK_THROWS_AS(validate_vocabulary({"a", ""}), ConfigError);
  CHECK_THROWS_AS(validate_vocabulary({"a", "a"}), ConfigError);
  CHECK_NOTHROW(validate_vocabulary({"brakes squeaking", "car"}));
}

TEST_CASE("standardizer") {
  Dataset ds = synth_generate(small_config(5));
  const Standardizer s = Standardizer::fit(ds, Split::train);
  // Oracle: train-split statistics per bin.
  for (std::size_t k : {std::size_t{0}, std::size_t{7}}) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (const Clip* c : ds.split(Split::train))
      for (std::size_t t = 0; t < c->frames(); ++t) {
        sum += c->features.at(t, k);
        sq += c->features.at(t, k) * c->features.at(t, k);
        n += 1.0;
      }
    const double mean = sum / n;
    CHECK(s.mean[k] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(s.stddev[k] == doctest::Approx(std::sqrt(sq / n - mean * mean)).epsilon(1e-9));
  }
  const Tensor z = s.apply(ds.clips.front().features);
  CHECK(std::isfinite(z.at(0, 0)));

  ds.clips.front().features.at(0, 3) = 1e308;
  CHECK_THROWS_AS(Standardizer::fit(ds, Split::train), ArgumentError);
}
