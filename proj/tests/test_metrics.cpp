// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <doctest.h>

#include "csed/errors.hpp"
#include "csed/metrics.hpp"
#include "csed/optim.hpp"

using namespace csed;

namespace {

ActivityMatrix from_columns(std::vector<std::vector<int>> cols) {
  ActivityMatrix m(cols[0].size(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) {
    for (std::size_t t = 0; t < cols[c].size(); ++t) m.set(t, c, cols[c][t] != 0);
  }
  return m;
}

}  // namespace

TEST_CASE("frame counts worked example") {
  const auto ref = from_columns({{1, 1, 0, 0}, {0, 1, 1, 0}});
  const auto pred = from_columns({{1, 0, 0, 0}, {0, 1, 1, 1}});
  const auto c = frame_counts(pred, ref);
  CHECK(c.tp == std::vector<std::uint64_t>{1, 2});
  CHECK(c.fp == std::vector<std::uint64_t>{0, 1});
  CHECK(c.fn == std::vector<std::uint64_t>{1, 0});
  const auto s = f1_from_counts(c);
  CHECK(s.per_class[0].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.per_class[1].f1 == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(s.macro_f1 == doctest::Approx(11.0 / 15.0).epsilon(1e-15));

  const auto same = frame_counts(ref, ref);
  CHECK(same.fp == std::vector<std::uint64_t>{0, 0});
  CHECK(same.fn == std::vector<std::uint64_t>{0, 0});
  CHECK(f1_from_counts(same).macro_f1 == 1.0);

  const auto none = frame_counts(ActivityMatrix(4, 2), ref);
  CHECK(none.fn == std::vector<std::uint64_t>{2, 2});
  CHECK(none.tp == std::vector<std::uint64_t>{0, 0});
  CHECK_THROWS_AS(frame_counts(ActivityMatrix(3, 2), ref), DimensionError);
}

TEST_CASE("segment counts") {
  ActivityMatrix ref(10, 1), pred(10, 1);
  ref.set(5, 0, true);
  pred.set(9, 0, true);
  const auto c = segment_counts(pred, ref, 10);
  CHECK(c.tp[0] == 1);
  CHECK(c.fp[0] == 0);
  CHECK(c.units == 1);
  // Trailing partial segment counts as a full one.
  CHECK(segment_counts(pred, ref, 4).units == 3);
  CHECK_THROWS_AS(segment_counts(pred, ref, 0), ArgumentError);
  const auto ref2 = from_columns({{1, 1, 0, 0, 1}, {0, 1, 1, 0, 0}});
  const auto pred2 = from_columns({{1, 0, 0, 1, 1}, {0, 1, 1, 1, 0}});
  auto seg1 = segment_counts(pred2, ref2, 1);
  auto frame = frame_counts(pred2, ref2);
  CHECK(seg1.tp == frame.tp);
  CHECK(seg1.fp == frame.fp);
  CHECK(seg1.fn == frame.fn);
}

TEST_CASE("absent class scores zero and lowers macro") {
  ActivityMatrix ref(4, 2), pred(4, 2);
  ref.set(0, 0, true);
  pred.set(0, 0, true);
  const auto s = f1_from_counts(frame_counts(pred, ref));
  CHECK(s.per_class[1].f1 == 0.0);
  CHECK(s.macro_f1 == 0.5);
}

TEST_CASE("relative improvement") {
  // Reported to two decimals.
  CHECK(std::round(relative_improvement(0.411, 0.358) * 100.0) / 100.0 == doctest::Approx(14.80));
  CHECK(std::round(relative_improvement(0.631, 0.612) * 100.0) / 100.0 == doctest::Approx(3.10));
  CHECK(relative_improvement(0.5, 0.5) == 0.0);
  CHECK_THROWS_AS(relative_improvement(0.5, 0.0), ArgumentError);
}

TEST_CASE("symmetry and monotonicity") {
  Rng rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = 1 + rng.below(40), l = 1 + rng.below(4);
    ActivityMatrix a(t, l), b(t, l);
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t c = 0; c < l; ++c) {
        a.set(i, c, rng.bernoulli(0.4));
        b.set(i, c, rng.bernoulli(0.4));
      }
    }
    const auto ab = frame_counts(a, b), ba = frame_counts(b, a);
    CHECK(ab.fp == ba.fn);
    CHECK(ab.fn == ba.fp);
    CHECK(f1_from_counts(ab).macro_f1 == f1_from_counts(ba).macro_f1);
    // Flip one false negative to a true positive.
    for (std::size_t i = 0; i < t; ++i) {
      if (b(i, 0) && !a(i, 0)) {
        ActivityMatrix fixed = a;
        fixed.set(i, 0, true);
        CHECK(f1_from_counts(frame_counts(fixed, b)).per_class[0].f1 >=
              f1_from_counts(ab).per_class[0].f1);
        break;
      }
    }
  }
}

TEST_CASE("report serialization") {
  const auto ref = from_columns({{1, 1, 0, 0}, {0, 1, 1, 0}});
  const auto pred = from_columns({{1, 0, 0, 0}, {0, 1, 1, 1}});
  const auto r = MetricsReport::from_counts({"car", "children"}, frame_counts(pred, ref),
                                            segment_counts(pred, ref, 2), 2);
  const auto back = MetricsReport::from_json(r.to_json());
  CHECK(back.classes == r.classes);
  CHECK(back.frame_counts == r.frame_counts);
  CHECK(back.segment_counts == r.segment_counts);
  CHECK(back.frame.macro_f1 == r.frame.macro_f1);
  const std::string csv = r.to_csv();
  std::size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 1 + 2 + 1);  // header, classes, macro
  CHECK(csv.find("macro") != std::string::npos);
  CHECK(r.to_text().find("average") != std::string::npos);
}
