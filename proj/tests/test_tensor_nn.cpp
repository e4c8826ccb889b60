// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <limits>

#include <doctest.h>

#include "csed/autograd.hpp"
#include "csed/errors.hpp"
#include "csed/nn.hpp"
#include "csed/optim.hpp"
#include "support/gradcheck.hpp"

using namespace csed;
using csed::testing::grad_check;
using csed::testing::random_tensor;

namespace {

double scalar_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Weighted-sum readout keeps gradients O(1) for the finite-difference check.
Var readout(Var y, Rng& rng) {
  return ag::weighted_sum(y, random_tensor(y.shape(), rng));
}

}  // namespace

TEST_CASE("tensor shape bookkeeping") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.dim(1) == 3);
  CHECK_THROWS_AS(t.dim(2), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), DimensionError);
  Tensor bad({2}, std::vector<double>{1.0, std::nan("")});
  CHECK_THROWS_AS(bad.check_finite("bad"), ArgumentError);
}

TEST_CASE("linear forward examples") {
  const Tensor x = Tensor::matrix({{1, 2}});
  CHECK(nn::linear_forward(x, Tensor::matrix({{1, 0}, {0, 1}}), Tensor::vector({0, 0})) ==
        Tensor::matrix({{1, 2}}));
  CHECK(nn::linear_forward(Tensor::matrix({{1, 1}}), Tensor::matrix({{2, 3}}), Tensor::vector({1})) ==
        Tensor::matrix({{6}}));
  const Tensor r({7, 134}, 0.1);
  CHECK(nn::linear_forward(r, Tensor({1, 134}), Tensor({1})).shape() == Shape{7, 1});
  CHECK_THROWS_AS(nn::linear_forward(r, Tensor({1, 133}), Tensor({1})), DimensionError);
}

TEST_CASE("sigmoid values and symmetry") {
  CHECK(nn::sigmoid(0.0) == 0.5);
  const double big = nn::sigmoid(50.0);
  CHECK(big > 1.0 - 1e-15);
  CHECK(big < 1.0);
  CHECK(nn::sigmoid(-800.0) > 0.0);
  CHECK(nn::sigmoid(1.0) == doctest::Approx(0.7310585786).epsilon(1e-10));
  for (double x = -30.0; x <= 30.0; x += 0.37) {
    CHECK(std::abs(nn::sigmoid(x) + nn::sigmoid(-x) - 1.0) <= 1e-12);
  }
}

TEST_CASE("conv2d against a nested-loop oracle") {
  Rng rng(3);
  const Tensor x = random_tensor({5, 4, 1}, rng);
  const Tensor k = random_tensor({3, 3, 1, 2}, rng);
  const Tensor b = random_tensor({2}, rng);
  const Tensor y = nn::conv2d_forward(x, k, b);
  REQUIRE(y.shape() == Shape{5, 4, 2});
  for (int t = 0; t < 5; ++t) {
    for (int f = 0; f < 4; ++f) {
      for (int o = 0; o < 2; ++o) {
        double acc = b[o];
        for (int dt = -1; dt <= 1; ++dt) {
          for (int df = -1; df <= 1; ++df) {
            const int tt = t + dt, ff = f + df;
            if (tt < 0 || tt >= 5 || ff < 0 || ff >= 4) continue;
            acc += x[tt * 4 + ff] * k[((dt + 1) * 3 + (df + 1)) * 2 + o];
          }
        }
        CHECK(y[(t * 4 + f) * 2 + o] == doctest::Approx(acc).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("conv2d identity and constant kernels") {
  Rng rng(4);
  const Tensor x = random_tensor({6, 5, 1}, rng);
  Tensor ident({3, 3, 1, 1});
  ident[4] = 1.0;
  CHECK(nn::conv2d_forward(x, ident, Tensor({1})) == x);
  const Tensor y = nn::conv2d_forward(x, Tensor({3, 3, 1, 1}), Tensor::vector({0.25}));
  for (double v : y.data()) CHECK(v == 0.25);
  CHECK_THROWS_AS(nn::conv2d_forward(x, Tensor({3, 3, 2, 1}), Tensor({1})), DimensionError);
}

TEST_CASE("batchnorm examples") {
  auto state = nn::BatchNormState::fresh(1);
  const Tensor x({2, 1}, std::vector<double>{1.0, 3.0});
  const Tensor y = nn::batchnorm_forward(x, Tensor::vector({2.0}), Tensor::vector({0.5}), state,
                                         nn::Mode::train);
  const double scale = 1.0 / std::sqrt(1.0 + nn::kBatchNormEps);
  CHECK(y[0] == doctest::Approx(-2.0 * scale + 0.5).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(2.0 * scale + 0.5).epsilon(1e-14));
  // Running stats: mean 0.9*0 + 0.1*2, var 0.9*1 + 0.1*2 (unbiased).
  CHECK(state.running_mean[0] == doctest::Approx(0.2));
  CHECK(state.running_var[0] == doctest::Approx(1.1));

  auto s2 = nn::BatchNormState::fresh(1);
  const Tensor beta_only = nn::batchnorm_forward(x, Tensor::vector({0.0}), Tensor::vector({0.7}), s2,
                                                 nn::Mode::train);
  for (double v : beta_only.data()) CHECK(v == 0.7);

  auto s3 = nn::BatchNormState::fresh(1);
  const Tensor unit({4, 1}, std::vector<double>{-1.0, 1.0, -1.0, 1.0});
  const Tensor same = nn::batchnorm_forward(unit, Tensor::vector({1.0}), Tensor::vector({0.0}), s3,
                                            nn::Mode::train);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same[i] == doctest::Approx(unit[i]).epsilon(1e-5));

  auto s4 = nn::BatchNormState::fresh(1);
  CHECK_THROWS_AS(nn::batchnorm_forward(Tensor({0, 1}), Tensor::vector({1.0}), Tensor::vector({0.0}),
                                        s4, nn::Mode::train),
                  ArgumentError);
}

TEST_CASE("batchnorm infer mode uses running statistics") {
  nn::BatchNormState s{Tensor::vector({1.0}), Tensor::vector({4.0})};
  const Tensor y = nn::batchnorm_forward(Tensor({1, 1}, std::vector<double>{5.0}),
                                         Tensor::vector({1.0}), Tensor::vector({0.0}), s,
                                         nn::Mode::infer);
  CHECK(y[0] == doctest::Approx(4.0 / std::sqrt(4.0 + nn::kBatchNormEps)));
  CHECK(s.running_mean[0] == 1.0);
}

TEST_CASE("maxpool examples") {
  const Tensor row({1, 4, 1}, std::vector<double>{4, 1, 9, 2});
  const auto p = nn::maxpool2d(row, 1, 4);
  CHECK(p.out.shape() == Shape{1, 1, 1});
  CHECK(p.out[0] == 9.0);
  CHECK(p.argmax[0] == 2);

  Tensor x({3, 64, 2}, 0.5);
  for (std::size_t expect : {16u, 4u, 1u}) {
    x = nn::maxpool2d(x, 1, 4).out;
    CHECK(x.dim(1) == expect);
    for (double v : x.data()) CHECK(v == 0.5);
  }
  CHECK_THROWS_AS(nn::maxpool2d(Tensor({2, 6, 1}), 1, 4), ArgumentError);

  Rng rng(5);
  const Tensor in = random_tensor({4, 8, 3}, rng);
  const auto pr = nn::maxpool2d(in, 2, 4);
  const Tensor dy = random_tensor(pr.out.shape(), rng);
  const Tensor dx = nn::maxpool2d_backward(in.shape(), pr.argmax, dy);
  double sum_in = 0.0, sum_out = 0.0;
  std::size_t nonzero = 0;
  for (double v : dy.data()) sum_in += v;
  for (double v : dx.data()) {
    sum_out += v;
    nonzero += v != 0.0;
  }
  CHECK(sum_out == doctest::Approx(sum_in).epsilon(1e-14));
  CHECK(nonzero == dy.size());
}

TEST_CASE("gru cell examples") {
  const std::size_t h = 3, din = 2;
  const Tensor wi({3 * h, din}), wh({3 * h, h}), b({3 * h});
  const Tensor v = Tensor::vector({0.4, -1.0, 2.0});
  const Tensor out = nn::gru_cell_forward(Tensor::vector({1.0, 2.0}), v, wi, wh, b);
  for (std::size_t i = 0; i < h; ++i) CHECK(out[i] == 0.5 * v[i]);
  const Tensor zero = nn::gru_cell_forward(Tensor::vector({1.0, 2.0}), Tensor({h}), wi, wh, b);
  for (double x : zero.data()) CHECK(x == 0.0);
  CHECK_THROWS_AS(nn::gru_cell_forward(Tensor({3}), v, wi, wh, b), DimensionError);
}

TEST_CASE("gru cell against a scalar re-implementation") {
  Rng rng(6);
  const std::size_t h = 4, din = 3;
  const Tensor wi = random_tensor({3 * h, din}, rng), wh = random_tensor({3 * h, h}, rng);
  const Tensor b = random_tensor({3 * h}, rng);
  const Tensor x = random_tensor({din}, rng), hp = random_tensor({h}, rng);
  const Tensor out = nn::gru_cell_forward(x, hp, wi, wh, b);
  for (std::size_t j = 0; j < h; ++j) {
    auto dot_in = [&](std::size_t row) {
      double s = 0;
      for (std::size_t k = 0; k < din; ++k) s += wi.at(row, k) * x[k];
      return s;
    };
    auto dot_h = [&](std::size_t row) {
      double s = 0;
      for (std::size_t k = 0; k < h; ++k) s += wh.at(row, k) * hp[k];
      return s;
    };
    const double u = scalar_sigmoid(dot_in(j) + dot_h(j) + b[j]);
    const double r = scalar_sigmoid(dot_in(h + j) + dot_h(h + j) + b[h + j]);
    const double n = std::tanh(dot_in(2 * h + j) + r * dot_h(2 * h + j) + b[2 * h + j]);
    CHECK(out[j] == doctest::Approx((1 - u) * n + u * hp[j]).epsilon(1e-13));
  }
}

TEST_CASE("bigru examples") {
  Rng rng(7);
  const std::size_t h = 3, din = 2;
  nn::GruWeights f{random_tensor({3 * h, din}, rng), random_tensor({3 * h, h}, rng),
                   random_tensor({3 * h}, rng)};
  nn::GruWeights g{random_tensor({3 * h, din}, rng), random_tensor({3 * h, h}, rng),
                   random_tensor({3 * h}, rng)};
  const Tensor x1 = random_tensor({1, din}, rng);
  const Tensor out = nn::bigru_forward(x1, f, g);
  const Tensor a = nn::gru_cell_forward(x1.reshaped({din}), Tensor({h}), f.wi, f.wh, f.b);
  const Tensor c = nn::gru_cell_forward(x1.reshaped({din}), Tensor({h}), g.wi, g.wh, g.b);
  for (std::size_t j = 0; j < h; ++j) {
    CHECK(out[j] == a[j]);
    CHECK(out[h + j] == c[j]);
  }
  CHECK_THROWS_AS(nn::bigru_forward(Tensor({0, din}), f, g), ArgumentError);

  // Palindrome with tied weights: frame t's forward half equals frame
  // (T-1-t)'s backward half.
  Tensor pal({3, din});
  const Tensor e = random_tensor({din}, rng), m = random_tensor({din}, rng);
  for (std::size_t k = 0; k < din; ++k) {
    pal.at(0, k) = e[k];
    pal.at(1, k) = m[k];
    pal.at(2, k) = e[k];
  }
  const Tensor y = nn::bigru_forward(pal, f, f);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t j = 0; j < h; ++j) CHECK(y.at(t, j) == y.at(2 - t, h + j));
  }
  const Tensor paper = nn::bigru_forward(Tensor({5, 64}, 0.1),
                                         nn::GruWeights{Tensor({186, 64}), Tensor({186, 62}), Tensor({186})},
                                         nn::GruWeights{Tensor({186, 64}), Tensor({186, 62}), Tensor({186})});
  CHECK(paper.shape() == Shape{5, 124});
}

TEST_CASE("bce loss examples") {
  CHECK(nn::bce_loss(Tensor({2, 2}, 0.5), Tensor({2, 2}, 1.0)) == doctest::Approx(std::log(2.0)));
  CHECK(nn::bce_loss(Tensor::vector({0.25}), Tensor::vector({1.0})) ==
        doctest::Approx(-std::log(0.25)));
  const Tensor z = Tensor::vector({nn::kBceClamp, 1.0 - nn::kBceClamp});
  CHECK(nn::bce_loss(z, Tensor::vector({0.0, 1.0})) <= 1e-6);
  const Tensor mask = Tensor::vector({0.0, 0.0});
  CHECK_THROWS_AS(nn::bce_loss(z, Tensor::vector({0.0, 1.0}), &mask), ArgumentError);
  const Tensor half_mask = Tensor::vector({1.0, 0.0});
  CHECK(nn::bce_loss(Tensor::vector({0.25, 0.9}), Tensor::vector({1.0, 0.0}), &half_mask) ==
        doctest::Approx(-std::log(0.25)));
}

TEST_CASE("backward basics") {
  Tape tape;
  const Tensor x = Tensor::matrix({{1.0, -2.0, 3.0}});
  Var w = tape.parameter("w", Tensor::matrix({{0.5, 0.1, 0.2}}));
  Var unused = tape.parameter("unused", Tensor::vector({7.0, 8.0}));
  (void)unused;
  Var b = tape.constant(Tensor::vector({0.0}));
  Var loss = ag::sum(ag::linear(tape.constant(x), w, b));
  const Gradients g = tape.backward(loss);
  CHECK(g.at("w") == x);
  CHECK(g.at("unused") == Tensor({2}));

  Tape other;
  Var foreign = other.constant(Tensor::vector({1.0}));
  CHECK_THROWS_AS(tape.backward(foreign), UsageError);
  CHECK_THROWS_AS(tape.backward(w), UsageError);  // not a scalar
}

TEST_CASE("gradient checks per op") {
  Rng rng(11);
  SUBCASE("linear") {
    const auto res = grad_check(
        {{"x", random_tensor({4, 3}, rng)}, {"w", random_tensor({2, 3}, rng)}, {"b", random_tensor({2}, rng)}},
        [&](Tape&, const auto& v) {
          Rng local(1);
          return readout(ag::linear(v.at("x"), v.at("w"), v.at("b")), local);
        },
        rng);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("sigmoid tanh relu") {
    const auto res = grad_check({{"x", random_tensor({3, 4}, rng, 2.0)}},
                                [&](Tape&, const auto& v) {
                                  Rng local(2);
                                  Var a = ag::sigmoid(v.at("x"));
                                  Var b = ag::tanh(v.at("x"));
                                  Var c = ag::relu(v.at("x"));
                                  return ag::sum(ag::concat_last(ag::concat_last(a, b), c));
                                },
                                rng);
    CHECK(res.max_rel_error < 1e-4);
  }
  SUBCASE("bce") {
    Tensor y({3, 2});
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<double>(i % 2);
    const Tensor mask = Tensor::matrix({{1, 1}, {0, 1}, {1, 1}});
    const auto res = grad_check({{"x", random_tensor({3, 2}, rng, 2.0)}},
                                [&](Tape&, const auto& v) {
                                  return ag::bce(ag::sigmoid(v.at("x")), y, &mask);
                                },
                                rng);
    CHECK(res.max_rel_error < 1e-4);
  }
}

TEST_CASE("adam examples") {
  ParamStore store;
  store.add("w", Tensor::vector({1.0, -2.0, 3.0}));
  const Tensor before = store.get("w");
  for (int i = 0; i < 5; ++i) store.adam_step({{"w", Tensor({3})}}, AdamConfig{});
  CHECK(store.get("w") == before);
  CHECK(store.step() == 5);

  ParamStore fresh;
  fresh.add("w", Tensor::vector({1.0, -2.0, 3.0}));
  const AdamConfig cfg;
  fresh.adam_step({{"w", Tensor::vector({0.3, -4.0, 1e-3})}}, cfg);
  const Tensor& w = fresh.get("w");
  CHECK(w[0] == doctest::Approx(1.0 - cfg.lr).epsilon(1e-6));
  CHECK(w[1] == doctest::Approx(-2.0 + cfg.lr).epsilon(1e-6));
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(w[i] - before[i]) <= cfg.lr * (1 + 1e-8));
  // Zero gradients afterwards only decay the moments.
  const double m_before = std::abs(fresh.first_moment("w")[1]);
  fresh.adam_step({{"w", Tensor({3})}}, cfg);
  CHECK(std::abs(fresh.first_moment("w")[1]) == doctest::Approx(0.9 * m_before));

  ParamStore frozen;
  frozen.add("w", Tensor::vector({1.0}));
  frozen.adam_step({{"w", Tensor::vector({5.0})}}, AdamConfig{.lr = 0.0});
  CHECK(frozen.get("w")[0] == 1.0);

  CHECK_THROWS_AS(frozen.adam_step({{"w", Tensor::vector({1.0, 2.0})}}, cfg), DimensionError);
  CHECK_THROWS_AS(frozen.adam_step({}, cfg), DimensionError);
}

TEST_CASE("rng is reproducible and in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(a.below(7) == b.below(7));
  }
  const Tensor w = init_uniform({50, 4}, 16, a);
  for (double v : w.data()) CHECK(std::abs(v) <= 0.25);
}

TEST_CASE("ops are deterministic") {
  Rng r1(9), r2(9);
  const Tensor x1 = random_tensor({2, 6, 4, 2}, r1), x2 = random_tensor({2, 6, 4, 2}, r2);
  const Tensor k = random_tensor({3, 3, 2, 3}, r1);
  CHECK(nn::conv2d_forward(x1, k, Tensor({3})) == nn::conv2d_forward(x2, k, Tensor({3})));
}
