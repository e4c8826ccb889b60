// SPDX-License-Identifier: Apache-2.0
#include "csed/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "csed/errors.hpp"

namespace csed {
namespace {

void check_pair(const ActivityMatrix& pred, const ActivityMatrix& ref) {
  if (pred.frames() != ref.frames() || pred.classes() != ref.classes()) {
    throw DimensionError("metrics: prediction " + std::to_string(pred.frames()) + "x" +
                         std::to_string(pred.classes()) + " vs reference " +
                         std::to_string(ref.frames()) + "x" + std::to_string(ref.classes()));
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

const char* unit_name(MetricUnit u) { return u == MetricUnit::frame ? "frame" : "segment"; }

nlohmann::json counts_json(const ConfusionCounts& c) {
  return {{"unit", unit_name(c.unit)}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"units", c.units}};
}

ConfusionCounts counts_from_json(const nlohmann::json& j) {
  ConfusionCounts c(0, j.at("unit").get<std::string>() == "frame" ? MetricUnit::frame
                                                                   : MetricUnit::segment);
  c.tp = j.at("tp").get<std::vector<std::uint64_t>>();
  c.fp = j.at("fp").get<std::vector<std::uint64_t>>();
  c.fn = j.at("fn").get<std::vector<std::uint64_t>>();
  c.units = j.at("units").get<std::uint64_t>();
  return c;
}

}  // namespace

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  if (other.unit != unit || other.classes() != classes()) {
    throw DimensionError("confusion counts: cannot add counts of a different unit or class count");
  }
  for (std::size_t c = 0; c < classes(); ++c) {
    tp[c] += other.tp[c];
    fp[c] += other.fp[c];
    fn[c] += other.fn[c];
  }
  units += other.units;
  return *this;
}

ConfusionCounts frame_counts(const ActivityMatrix& pred, const ActivityMatrix& ref) {
  check_pair(pred, ref);
  ConfusionCounts counts(ref.classes(), MetricUnit::frame);
  counts.units = ref.frames();
  for (std::size_t t = 0; t < ref.frames(); ++t) {
    for (std::size_t c = 0; c < ref.classes(); ++c) {
      const bool p = pred(t, c), r = ref(t, c);
      counts.tp[c] += p && r;
      counts.fp[c] += p && !r;
      counts.fn[c] += !p && r;
    }
  }
  return counts;
}

ConfusionCounts segment_counts(const ActivityMatrix& pred, const ActivityMatrix& ref,
                               std::size_t frames_per_segment) {
  check_pair(pred, ref);
  if (frames_per_segment == 0) throw ArgumentError("segment_counts: frames_per_segment must be >= 1");
  const std::size_t classes = ref.classes();
  ConfusionCounts counts(classes, MetricUnit::segment);
  std::vector<bool> p(classes), r(classes);
  for (std::size_t start = 0; start < ref.frames(); start += frames_per_segment) {
    const std::size_t end = std::min(ref.frames(), start + frames_per_segment);
    std::fill(p.begin(), p.end(), false);
    std::fill(r.begin(), r.end(), false);
    for (std::size_t t = start; t < end; ++t) {
      for (std::size_t c = 0; c < classes; ++c) {
        p[c] = p[c] || pred(t, c);
        r[c] = r[c] || ref(t, c);
      }
    }
    for (std::size_t c = 0; c < classes; ++c) {
      counts.tp[c] += p[c] && r[c];
      counts.fp[c] += p[c] && !r[c];
      counts.fn[c] += !p[c] && r[c];
    }
    ++counts.units;
  }
  return counts;
}

F1Summary f1_from_counts(const ConfusionCounts& counts) {
  F1Summary s;
  s.per_class.resize(counts.classes());
  for (std::size_t c = 0; c < counts.classes(); ++c) {
    const double tp = static_cast<double>(counts.tp[c]);
    const double fp = static_cast<double>(counts.fp[c]);
    const double fn = static_cast<double>(counts.fn[c]);
    ClassScore& cs = s.per_class[c];
    cs.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    cs.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    const double denom = 2 * tp + fp + fn;
    cs.f1 = denom > 0 ? 2 * tp / denom : 0.0;
    s.macro_f1 += cs.f1;
  }
  if (!s.per_class.empty()) s.macro_f1 /= static_cast<double>(s.per_class.size());
  return s;
}

double relative_improvement(double candidate, double baseline) {
  if (!(baseline > 0.0)) throw ArgumentError("relative_improvement: baseline must be positive");
  return 100.0 * (candidate - baseline) / baseline;
}

MetricsReport MetricsReport::from_counts(std::vector<std::string> classes, ConfusionCounts frames,
                                         ConfusionCounts segments, std::size_t frames_per_segment) {
  if (classes.size() != frames.classes() || classes.size() != segments.classes()) {
    throw DimensionError("metrics report: class names do not match counts");
  }
  MetricsReport r;
  r.classes = std::move(classes);
  r.frame = f1_from_counts(frames);
  r.segment = f1_from_counts(segments);
  r.frame_counts = std::move(frames);
  r.segment_counts = std::move(segments);
  r.frames_per_segment = frames_per_segment;
  return r;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < classes.size(); ++c) {
    per_class.push_back({{"class", classes[c]},
                         {"frame_precision", frame.per_class[c].precision},
                         {"frame_recall", frame.per_class[c].recall},
                         {"frame_f1", frame.per_class[c].f1},
                         {"segment_precision", segment.per_class[c].precision},
                         {"segment_recall", segment.per_class[c].recall},
                         {"segment_f1", segment.per_class[c].f1}});
  }
  return {{"classes", classes},
          {"frames_per_segment", frames_per_segment},
          {"frame_macro_f1", frame.macro_f1},
          {"segment_macro_f1", segment.macro_f1},
          {"per_class", per_class},
          {"frame_counts", counts_json(frame_counts)},
          {"segment_counts", counts_json(segment_counts)}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  return from_counts(j.at("classes").get<std::vector<std::string>>(),
                     counts_from_json(j.at("frame_counts")),
                     counts_from_json(j.at("segment_counts")),
                     j.at("frames_per_segment").get<std::size_t>());
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "class,frame_tp,frame_fp,frame_fn,frame_precision,frame_recall,frame_f1,"
        "segment_tp,segment_fp,segment_fn,segment_precision,segment_recall,segment_f1\n";
  auto row = [&](const std::string& name, std::uint64_t ftp, std::uint64_t ffp, std::uint64_t ffn,
                 const ClassScore& fs, std::uint64_t stp, std::uint64_t sfp, std::uint64_t sfn,
                 const ClassScore& ss) {
    os << name << ',' << ftp << ',' << ffp << ',' << ffn << ',' << fmt("%.6f", fs.precision) << ','
       << fmt("%.6f", fs.recall) << ',' << fmt("%.6f", fs.f1) << ',' << stp << ',' << sfp << ','
       << sfn << ',' << fmt("%.6f", ss.precision) << ',' << fmt("%.6f", ss.recall) << ','
       << fmt("%.6f", ss.f1) << '\n';
  };
  ClassScore fmean, smean;
  std::uint64_t sums[6] = {0, 0, 0, 0, 0, 0};
  for (std::size_t c = 0; c < classes.size(); ++c) {
    row(classes[c], frame_counts.tp[c], frame_counts.fp[c], frame_counts.fn[c], frame.per_class[c],
        segment_counts.tp[c], segment_counts.fp[c], segment_counts.fn[c], segment.per_class[c]);
    sums[0] += frame_counts.tp[c];
    sums[1] += frame_counts.fp[c];
    sums[2] += frame_counts.fn[c];
    sums[3] += segment_counts.tp[c];
    sums[4] += segment_counts.fp[c];
    sums[5] += segment_counts.fn[c];
    fmean.precision += frame.per_class[c].precision;
    fmean.recall += frame.per_class[c].recall;
    smean.precision += segment.per_class[c].precision;
    smean.recall += segment.per_class[c].recall;
  }
  const double n = classes.empty() ? 1.0 : static_cast<double>(classes.size());
  fmean.precision /= n;
  fmean.recall /= n;
  smean.precision /= n;
  smean.recall /= n;
  fmean.f1 = frame.macro_f1;
  smean.f1 = segment.macro_f1;
  row("macro", sums[0], sums[1], sums[2], fmean, sums[3], sums[4], sums[5], smean);
  return os.str();
}

std::string MetricsReport::to_text() const {
  std::size_t width = 7;
  for (const auto& c : classes) width = std::max(width, c.size());
  std::ostringstream os;
  auto pad = [&](const std::string& s) { return s + std::string(width - s.size(), ' '); };
  os << pad("class") << "  frame-F1  segment-F1\n";
  for (std::size_t c = 0; c < classes.size(); ++c) {
    os << pad(classes[c]) << "  " << fmt("%8.3f", frame.per_class[c].f1) << "  "
       << fmt("%10.3f", segment.per_class[c].f1) << '\n';
  }
  os << pad("average") << "  " << fmt("%8.3f", frame.macro_f1) << "  "
     << fmt("%10.3f", segment.macro_f1) << '\n';
  os << "(segment = " << frames_per_segment << " frames)\n";
  return os.str();
}

}  // namespace csed
