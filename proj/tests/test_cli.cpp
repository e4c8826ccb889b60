// SPDX-License-Identifier: Apache-2.0
//
// End-to-end runs of the csed binary (path in $CSED_CLI).
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <doctest.h>
#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string output;
};

const fs::path& work_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("csed_cli_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run csed(const std::string& args) {
  const char* bin = std::getenv("CSED_CLI");
  REQUIRE_MESSAGE(bin != nullptr, "CSED_CLI must point at the csed binary");
  const fs::path log = work_dir() / "last.log";
  const std::string cmd = std::string(bin) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path write_config(const std::string& name, nlohmann::json cfg) {
  const fs::path p = work_dir() / (name + ".json");
  std::ofstream(p) << cfg.dump(2);
  return p;
}

nlohmann::json small_config(const std::string& out, const std::string& preset = "dependent") {
  return {{"dataset", {{"synthetic", {{"preset", preset}, {"clips_per_split", {6, 3, 3}}}}}},
          {"heads", {"independent", "gru", "chain"}},
          {"orders", {"higher-freq"}},
          {"train", {{"epochs", 2}, {"batch_size", 4}}},
          {"out", (work_dir() / out).string()},
          {"seeds", {1}}};
}

}  // namespace

TEST_CASE("synth writes a manifest, reports independence and is reproducible") {
  const auto cfg = write_config("synth", small_config("synth_a", "independent"));
  const Run a = csed("synth --config " + cfg.string());
  CHECK(a.code == 0);
  CHECK(a.output.find("independent: PASS") != std::string::npos);
  const Run b = csed("synth --config " + cfg.string() + " --out " + (work_dir() / "synth_b").string());
  CHECK(b.code == 0);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(work_dir() / "synth_a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path twin = work_dir() / "synth_b" / fs::relative(e.path(), work_dir() / "synth_a");
    CHECK_MESSAGE(slurp(e.path()) == slurp(twin), e.path().string());
  }
  CHECK(files == 1 + 2 * 12);

  const auto dep = write_config("synth_dep", small_config("synth_dep", "dependent"));
  const Run d = csed("synth --config " + dep.string());
  CHECK(d.code == 0);
  CHECK(d.output.find("independent: FAIL") != std::string::npos);
}

TEST_CASE("train, calibrate and eval") {
  const auto cfg = write_config("pipeline", small_config("pipeline"));
  const fs::path out = work_dir() / "pipeline";
  const Run t = csed("train --config " + cfg.string() + " --head independent");
  REQUIRE(t.code == 0);
  const std::string history = slurp(out / "history.csv");
  CHECK(count_lines(history) == 1 + 2);
  const fs::path ckpt = out / "checkpoint.csed";
  REQUIRE(fs::exists(ckpt));

  const Run e = csed("eval --config " + cfg.string() + " --checkpoint " + ckpt.string() + " --out " +
                     (out / "eval_default").string());
  REQUIRE(e.code == 0);
  auto report = nlohmann::json::parse(slurp(out / "eval_default" / "report.json"));
  CHECK(report["thresholds"]["provenance"] == "default 0.5");
  CHECK(count_lines(slurp(out / "eval_default" / "report.csv")) == 1 + 6 + 1);
  CHECK(slurp(out / "eval_default" / "report.txt").find("default 0.5") != std::string::npos);

  const Run c = csed("calibrate --config " + cfg.string() + " --checkpoint " + ckpt.string());
  REQUIRE(c.code == 0);
  const Run e2 = csed("eval --config " + cfg.string() + " --checkpoint " + ckpt.string() + " --out " +
                      (out / "eval_cal").string() + " --frames-per-segment 1");
  REQUIRE(e2.code == 0);
  report = nlohmann::json::parse(slurp(out / "eval_cal" / "report.json"));
  CHECK(report["thresholds"]["provenance"].get<std::string>().rfind("calibrated on val", 0) == 0);
  CHECK(report["segment_macro_f1"].get<double>() == report["frame_macro_f1"].get<double>());

  // Against the generated dataset on disk.
  const Run s = csed("synth --config " + cfg.string() + " --out " + (out / "data").string());
  REQUIRE(s.code == 0);
  const Run m = csed("eval --checkpoint " + ckpt.string() + " --manifest " + (out / "data" / "manifest.json").string() +
                     " --out " + (out / "eval_manifest").string());
  CHECK(m.code == 0);
  const auto from_disk = nlohmann::json::parse(slurp(out / "eval_manifest" / "report.json"));
  CHECK(from_disk["split"] == "test");
  CHECK(from_disk["frame_counts"] == nlohmann::json::parse(slurp(out / "eval_cal" / "report.json"))["frame_counts"]);
}

TEST_CASE("chain with an F1 order needs a baseline report") {
  auto j = small_config("f1order");
  j["orders"] = {"higher-f1"};
  const auto cfg = write_config("f1order", j);
  const Run r = csed("train --config " + cfg.string() + " --head chain");
  CHECK(r.code == 2);
  CHECK(r.output.find("--baseline-report") != std::string::npos);
  CHECK_FALSE(fs::exists(work_dir() / "f1order" / "checkpoint.csed"));

  const fs::path base = work_dir() / "f1base";
  REQUIRE(csed("train --config " + cfg.string() + " --head independent --out " + base.string()).code == 0);
  REQUIRE(csed("eval --config " + cfg.string() + " --checkpoint " + (base / "checkpoint.csed").string() +
               " --split val --out " + base.string())
              .code == 0);
  const Run ok = csed("train --config " + cfg.string() + " --head chain --baseline-report " +
                      (base / "report.json").string());
  CHECK(ok.code == 0);
  CHECK(fs::exists(work_dir() / "f1order" / "checkpoint.csed"));
}

TEST_CASE("exit codes") {
  auto bad = small_config("badkey");
  bad["trian"] = {{"epochs", 1}};
  const Run unknown = csed("train --config " + write_config("badkey", bad).string() + " --head gru");
  CHECK(unknown.code == 2);
  CHECK(unknown.output.find("trian") != std::string::npos);
  CHECK_FALSE(fs::exists(work_dir() / "badkey"));

  CHECK(csed("train --config " + write_config("multi", small_config("multi")).string()).code == 2);
  CHECK(csed("frobnicate").code == 2);
  CHECK(csed("eval --checkpoint x.csed --frames-per-segment 0 --manifest m.json").code == 2);
  CHECK(csed("eval --checkpoint " + (work_dir() / "absent.csed").string() + " --manifest m.json").code == 5);

  auto hot = small_config("diverge");
  hot["train"]["learning_rate"] = 1e300;
  const Run div = csed("train --config " + write_config("diverge", hot).string() + " --head independent");
  CHECK(div.code == 4);
  CHECK(div.output.find("epoch") != std::string::npos);

  // Feature files with non-finite or overflowing values are data errors.
  const auto cfg = write_config("bad_data_src", small_config("bad_data_src"));
  const fs::path data = work_dir() / "bad_data";
  REQUIRE(csed("synth --config " + cfg.string() + " --out " + data.string()).code == 0);
  const fs::path victim = data / "clips" / "clip00000.features.csv";
  const std::string original = slurp(victim);
  auto manifest_cfg = small_config("bad_data");
  manifest_cfg["dataset"] = {{"manifest", (data / "manifest.json").string()}};
  const auto bad_cfg = write_config("bad_data", manifest_cfg);
  for (const std::string value : {"inf", "1e308"}) {
    std::string text = original;
    text.replace(0, text.find(','), value);
    std::ofstream(victim) << text;
    const Run r = csed("train --config " + bad_cfg.string() + " --head independent");
    CHECK_MESSAGE(r.code == 3, value);
  }

  // Vocabulary mismatch between checkpoint and dataset.
  auto three = small_config("three");
  three["dataset"]["synthetic"]["classes"] = {
      {{"name", "a"}, {"base_logit", -3}, {"stay_on", 0.8}, {"gain", 1}},
      {{"name", "b"}, {"base_logit", -3}, {"stay_on", 0.8}, {"gain", 1}},
      {{"name", "c"}, {"base_logit", -3}, {"stay_on", 0.8}, {"gain", 1}}};
  three["dataset"]["synthetic"]["dependency"] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  const auto three_cfg = write_config("three", three);
  REQUIRE(csed("train --config " + three_cfg.string() + " --head independent").code == 0);
  const Run mismatch = csed("eval --config " + cfg.string() + " --checkpoint " +
                            (work_dir() / "three" / "checkpoint.csed").string() + " --out " +
                            (work_dir() / "mismatch").string());
  CHECK(mismatch.code == 2);
}

TEST_CASE("compare writes reproducible reports") {
  auto j = small_config("cmp_a");
  j["seeds"] = {1, 2};
  const auto a = write_config("cmp_a", j);
  REQUIRE(csed("compare --config " + a.string()).code == 0);
  j["out"] = (work_dir() / "cmp_b").string();
  const auto b = write_config("cmp_b", j);
  REQUIRE(csed("compare --config " + b.string()).code == 0);
  const std::string text = slurp(work_dir() / "cmp_a" / "experiment_report.txt");
  CHECK(text.find("Independent") != std::string::npos);
  CHECK(text.find("GRU head") != std::string::npos);
  CHECK(text.find("Chain head") != std::string::npos);
  CHECK(text.find("Average") != std::string::npos);
  for (const auto& e : fs::recursive_directory_iterator(work_dir() / "cmp_a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), work_dir() / "cmp_a");
    if (rel == "timing.log") continue;
    std::string x = slurp(e.path()), y = slurp(work_dir() / "cmp_b" / rel);
    // The config echo names the output directory.
    if (rel.extension() == ".json" && rel.filename() == "experiment_report.json") {
      auto jx = nlohmann::json::parse(x), jy = nlohmann::json::parse(y);
      jx["config"].erase("out");
      jy["config"].erase("out");
      CHECK(jx == jy);
      continue;
    }
    CHECK_MESSAGE(x == y, rel.string());
  }
}
