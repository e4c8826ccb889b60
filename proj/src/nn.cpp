// SPDX-License-Identifier: Apache-2.0
#include "csed/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "csed/errors.hpp"

namespace csed::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMatrix> as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

Eigen::Map<RowMatrix> as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
  return {t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

constexpr double kSigmoidHi = 1.0 - 0x1p-53;
constexpr double kSigmoidLo = std::numeric_limits<double>::min();

struct Grid4 {
  std::size_t batch, time, freq, channels;
};

Grid4 as_grid(const Tensor& x, std::string_view what) {
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  throw DimensionError(std::string(what) + ": expected (T,F,C) or (B,T,F,C), got " +
                       shape_to_string(x.shape()));
}

Shape with_channels(const Tensor& x, std::size_t channels) {
  Shape s = x.shape();
  s.back() = channels;
  return s;
}

/// Patch matrix (B*T*F, 9*Cin); column (dt*3 + df)*Cin + ci holds the input
/// at offset (dt-1, df-1), zero outside the grid.
RowMatrix im2col(const Tensor& x, const Grid4& g) {
  const std::size_t cin = g.channels;
  RowMatrix cols = RowMatrix::Zero(static_cast<Eigen::Index>(g.batch * g.time * g.freq),
                                   static_cast<Eigen::Index>(9 * cin));
  const double* xd = x.data().data();
  std::size_t row = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < g.time; ++t) {
      for (std::size_t f = 0; f < g.freq; ++f, ++row) {
        double* dst = cols.data() + row * 9 * cin;
        for (std::size_t dt = 0; dt < 3; ++dt) {
          if (t + dt < 1 || t + dt - 1 >= g.time) continue;
          for (std::size_t df = 0; df < 3; ++df) {
            if (f + df < 1 || f + df - 1 >= g.freq) continue;
            const double* xi = xd + ((b * g.time + t + dt - 1) * g.freq + f + df - 1) * cin;
            std::copy(xi, xi + cin, dst + (dt * 3 + df) * cin);
          }
        }
      }
    }
  }
  return cols;
}

}  // namespace

// ---- linear --------------------------------------------------------------

Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b) {
  expect_rank(x, 2, "linear input");
  expect_rank(w, 2, "linear weight");
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (w.dim(1) != din) {
    throw DimensionError("linear: weight " + shape_to_string(w.shape()) +
                         " incompatible with input " + shape_to_string(x.shape()));
  }
  expect_shape(b, {dout}, "linear bias");
  Tensor out({n, dout});
  const auto xm = as_matrix(x, n, din);
  const auto wm = as_matrix(w, dout, din);
  auto om = as_matrix(out, n, dout);
  om.noalias() = xm * wm.transpose();
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), static_cast<Eigen::Index>(dout));
  return out;
}

LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy) {
  const std::size_t n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  expect_shape(dy, {n, dout}, "linear output gradient");
  LinearGrads g{Tensor({n, din}), Tensor({dout, din}), Tensor({dout})};
  const auto xm = as_matrix(x, n, din);
  const auto wm = as_matrix(w, dout, din);
  const auto gm = as_matrix(dy, n, dout);
  as_matrix(g.dx, n, din).noalias() = gm * wm;
  as_matrix(g.dw, dout, din).noalias() = gm.transpose() * xm;
  Eigen::Map<Eigen::RowVectorXd>(g.db.data().data(), static_cast<Eigen::Index>(dout)) =
      gm.colwise().sum();
  return g;
}

// ---- pointwise -----------------------------------------------------------

double sigmoid(double x) {
  double s;
  if (x >= 0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  if (s > kSigmoidHi) return kSigmoidHi;
  if (s < kSigmoidLo) return kSigmoidLo;
  return s;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::tanh(x[i]);
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] < 0 ? 0.0 : x[i];  // NaN passes through
  return out;
}

// ---- conv2d --------------------------------------------------------------

Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  const Grid4 g = as_grid(x, "conv2d");
  expect_rank(kernel, 4, "conv2d kernel");
  if (kernel.dim(0) != 3 || kernel.dim(1) != 3) {
    throw DimensionError("conv2d: kernel must be 3x3, got " +
                         shape_to_string(kernel.shape()));
  }
  if (kernel.dim(2) != g.channels) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kernel.dim(2)) +
                         " input channels, input has " + std::to_string(g.channels));
  }
  const std::size_t cout = kernel.dim(3);
  expect_shape(bias, {cout}, "conv2d bias");

  const RowMatrix cols = im2col(x, g);
  Tensor out(with_channels(x, cout));
  auto om = as_matrix(out, cols.rows(), cout);
  om.noalias() = cols * as_matrix(kernel, cols.cols(), cout);
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.data().data(), static_cast<Eigen::Index>(cout));
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel,
                            const Tensor& dy) {
  const Grid4 g = as_grid(x, "conv2d");
  const std::size_t cin = g.channels, cout = kernel.dim(3);
  expect_shape(dy, with_channels(x, cout), "conv2d output gradient");
  Conv2dGrads grads{Tensor(x.shape()), Tensor(kernel.shape()), Tensor({cout})};
  const RowMatrix cols = im2col(x, g);
  const auto gm = as_matrix(dy, cols.rows(), cout);
  const auto km = as_matrix(kernel, cols.cols(), cout);
  as_matrix(grads.dkernel, cols.cols(), cout).noalias() = cols.transpose() * gm;
  Eigen::Map<Eigen::RowVectorXd>(grads.dbias.data().data(), static_cast<Eigen::Index>(cout)) =
      gm.colwise().sum();
  const RowMatrix dcols = gm * km.transpose();
  // col2im: scatter each patch row back onto its source positions.
  double* dx = grads.dx.data().data();
  std::size_t row = 0;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < g.time; ++t) {
      for (std::size_t f = 0; f < g.freq; ++f, ++row) {
        const double* dr = dcols.data() + row * 9 * cin;
        for (std::size_t dt = 0; dt < 3; ++dt) {
          if (t + dt < 1 || t + dt - 1 >= g.time) continue;
          for (std::size_t df = 0; df < 3; ++df) {
            if (f + df < 1 || f + df - 1 >= g.freq) continue;
            double* xi = dx + ((b * g.time + t + dt - 1) * g.freq + f + df - 1) * cin;
            const double* src = dr + (dt * 3 + df) * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) xi[ci] += src[ci];
          }
        }
      }
    }
  }
  return grads;
}

// ---- batch normalization -------------------------------------------------

BatchNormState BatchNormState::fresh(std::size_t channels) {
  return {Tensor({channels}, 0.0), Tensor({channels}, 1.0)};
}

Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, BatchNormState& state, Mode mode,
                         std::span<const double> position_weights,
                         BatchNormCache* cache) {
  if (x.rank() < 1) throw DimensionError("batchnorm: scalar input");
  const std::size_t c = x.shape().back();
  expect_shape(gamma, {c}, "batchnorm gamma");
  expect_shape(beta, {c}, "batchnorm beta");
  expect_shape(state.running_mean, {c}, "batchnorm running mean");
  expect_shape(state.running_var, {c}, "batchnorm running var");
  const std::size_t positions = c ? x.size() / c : 0;
  if (!position_weights.empty() && position_weights.size() != positions) {
    throw DimensionError("batchnorm: " + std::to_string(position_weights.size()) +
                         " position weights for " + std::to_string(positions) +
                         " positions");
  }
  auto weight = [&](std::size_t p) {
    return position_weights.empty() ? 1.0 : position_weights[p];
  };

  std::vector<double> mean(c, 0.0), var(c, 0.0);
  double count = 0.0;
  if (mode == Mode::train) {
    for (std::size_t p = 0; p < positions; ++p) count += weight(p) != 0.0 ? 1.0 : 0.0;
    if (count == 0.0) throw ArgumentError("batchnorm: zero-size batch in train mode");
    for (std::size_t p = 0; p < positions; ++p) {
      if (weight(p) == 0.0) continue;
      for (std::size_t k = 0; k < c; ++k) mean[k] += x[p * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) mean[k] /= count;
    for (std::size_t p = 0; p < positions; ++p) {
      if (weight(p) == 0.0) continue;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = x[p * c + k] - mean[k];
        var[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < c; ++k) var[k] /= count;
    const double unbias = count > 1 ? count / (count - 1.0) : 1.0;
    for (std::size_t k = 0; k < c; ++k) {
      state.running_mean[k] = (1.0 - kBatchNormMomentum) * state.running_mean[k] +
                              kBatchNormMomentum * mean[k];
      state.running_var[k] = (1.0 - kBatchNormMomentum) * state.running_var[k] +
                             kBatchNormMomentum * var[k] * unbias;
    }
  } else {
    if (positions == 0) throw ArgumentError("batchnorm: empty input");
    for (std::size_t k = 0; k < c; ++k) {
      mean[k] = state.running_mean[k];
      var[k] = state.running_var[k];
    }
  }

  std::vector<double> inv_std(c);
  for (std::size_t k = 0; k < c; ++k) inv_std[k] = 1.0 / std::sqrt(var[k] + kBatchNormEps);

  Tensor out(x.shape());
  Tensor xhat(x.shape());
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      xhat[i] = (x[i] - mean[k]) * inv_std[k];
      out[i] = gamma[k] * xhat[i] + beta[k];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
    cache->weights.assign(position_weights.begin(), position_weights.end());
    cache->count = static_cast<std::size_t>(count);
    cache->mode = mode;
  }
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const Tensor& gamma, const Tensor& dy) {
  const std::size_t c = gamma.size();
  expect_shape(dy, cache.xhat.shape(), "batchnorm output gradient");
  const std::size_t positions = c ? dy.size() / c : 0;
  auto active = [&](std::size_t p) {
    return cache.weights.empty() || cache.weights[p] != 0.0;
  };
  BatchNormGrads g{Tensor(dy.shape()), Tensor({c}), Tensor({c})};
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      g.dgamma[k] += dy[i] * cache.xhat[i];
      g.dbeta[k] += dy[i];
    }
  }
  if (cache.mode == Mode::infer) {
    for (std::size_t p = 0; p < positions; ++p)
      for (std::size_t k = 0; k < c; ++k)
        g.dx[p * c + k] = dy[p * c + k] * gamma[k] * cache.inv_std[k];
    return g;
  }
  // Sums over the positions that contributed to the batch statistics.
  std::vector<double> sum_dxhat(c, 0.0), sum_dxhat_xhat(c, 0.0);
  for (std::size_t p = 0; p < positions; ++p) {
    if (!active(p)) continue;
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      const double dxhat = dy[i] * gamma[k];
      sum_dxhat[k] += dxhat;
      sum_dxhat_xhat[k] += dxhat * cache.xhat[i];
    }
  }
  const double n = static_cast<double>(cache.count);
  for (std::size_t p = 0; p < positions; ++p) {
    for (std::size_t k = 0; k < c; ++k) {
      const std::size_t i = p * c + k;
      const double dxhat = dy[i] * gamma[k];
      if (active(p)) {
        g.dx[i] = cache.inv_std[k] / n *
                  (n * dxhat - sum_dxhat[k] - cache.xhat[i] * sum_dxhat_xhat[k]);
      } else {
        g.dx[i] = dxhat * cache.inv_std[k];
      }
    }
  }
  return g;
}

// ---- max pooling ---------------------------------------------------------

PoolResult maxpool2d(const Tensor& x, std::size_t pool_t, std::size_t pool_f) {
  const Grid4 g = as_grid(x, "maxpool2d");
  if (pool_t == 0 || pool_f == 0) throw ArgumentError("maxpool2d: zero pool size");
  if (g.time % pool_t != 0 || g.freq % pool_f != 0) {
    throw ArgumentError("maxpool2d: input " + shape_to_string(x.shape()) +
                        " not divisible by pool (" + std::to_string(pool_t) + ", " +
                        std::to_string(pool_f) + ")");
  }
  const std::size_t ot = g.time / pool_t, of = g.freq / pool_f, c = g.channels;
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 3] = ot;
  out_shape[out_shape.size() - 2] = of;
  PoolResult res{Tensor(out_shape), std::vector<std::size_t>(shape_numel(out_shape))};
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t t = 0; t < ot; ++t) {
      for (std::size_t f = 0; f < of; ++f) {
        for (std::size_t k = 0; k < c; ++k) {
          std::size_t best = ((b * g.time + t * pool_t) * g.freq + f * pool_f) * c + k;
          for (std::size_t i = 0; i < pool_t; ++i) {
            for (std::size_t j = 0; j < pool_f; ++j) {
              const std::size_t idx =
                  ((b * g.time + t * pool_t + i) * g.freq + f * pool_f + j) * c + k;
              if (x[idx] > x[best]) best = idx;
            }
          }
          const std::size_t o = ((b * ot + t) * of + f) * c + k;
          res.out[o] = x[best];
          res.argmax[o] = best;
        }
      }
    }
  }
  return res;
}

Tensor maxpool2d_backward(const Shape& input_shape,
                          std::span<const std::size_t> argmax, const Tensor& dy) {
  if (argmax.size() != dy.size()) {
    throw DimensionError("maxpool2d backward: argmax/gradient size mismatch");
  }
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax[o]] += dy[o];
  return dx;
}

// ---- GRU -----------------------------------------------------------------

Tensor gru_cell_forward(const Tensor& x, const Tensor& h_prev, const Tensor& wi,
                        const Tensor& wh, const Tensor& b, GruCache* cache) {
  const bool single = x.rank() == 1;
  const Tensor xm = single ? x.reshaped({1, x.size()}) : x;
  const Tensor hm = h_prev.rank() == 1 ? h_prev.reshaped({1, h_prev.size()}) : h_prev;
  expect_rank(xm, 2, "gru input");
  expect_rank(wh, 2, "gru recurrent weight");
  const std::size_t n = xm.dim(0), hidden = wh.dim(1);
  expect_shape(hm, {n, hidden}, "gru previous state");
  expect_shape(wh, {3 * hidden, hidden}, "gru recurrent weight");
  expect_shape(wi, {3 * hidden, xm.dim(1)}, "gru input weight");
  expect_shape(b, {3 * hidden}, "gru bias");

  const Tensor zero_bias({3 * hidden});
  const Tensor a = linear_forward(xm, wi, b);
  const Tensor gh = linear_forward(hm, wh, zero_bias);
  Tensor u({n, hidden}), r({n, hidden}), cand({n, hidden}), hn({n, hidden});
  Tensor out({n, hidden});
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data().data() + i * 3 * hidden;
    const double* gr = gh.data().data() + i * 3 * hidden;
    for (std::size_t k = 0; k < hidden; ++k) {
      const std::size_t o = i * hidden + k;
      const double uk = sigmoid(ar[k] + gr[k]);
      const double rk = sigmoid(ar[hidden + k] + gr[hidden + k]);
      const double hnk = gr[2 * hidden + k];
      const double nk = std::tanh(ar[2 * hidden + k] + rk * hnk);
      u[o] = uk;
      r[o] = rk;
      hn[o] = hnk;
      cand[o] = nk;
      out[o] = (1.0 - uk) * nk + uk * hm[o];
    }
  }
  if (cache) *cache = {std::move(u), std::move(r), std::move(cand), std::move(hn)};
  return single ? out.reshaped({hidden}) : out;
}

GruGrads gru_cell_backward(const Tensor& x, const Tensor& h_prev, const Tensor& wi,
                           const Tensor& wh, const GruCache& cache, const Tensor& dh) {
  const bool single = x.rank() == 1;
  const Tensor xm = single ? x.reshaped({1, x.size()}) : x;
  const Tensor hm = h_prev.rank() == 1 ? h_prev.reshaped({1, h_prev.size()}) : h_prev;
  const Tensor dhm = dh.rank() == 1 ? dh.reshaped({1, dh.size()}) : dh;
  const std::size_t n = xm.dim(0), hidden = wh.dim(1);
  expect_shape(dhm, {n, hidden}, "gru output gradient");

  Tensor da({n, 3 * hidden}), dg({n, 3 * hidden}), dh_direct({n, hidden});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < hidden; ++k) {
      const std::size_t o = i * hidden + k;
      const double u = cache.u[o], r = cache.r[o], c = cache.n[o], hn = cache.hn[o];
      const double g = dhm[o];
      const double du = g * (hm[o] - c);
      const double dc = g * (1.0 - u);
      dh_direct[o] = g * u;
      const double dcn = dc * (1.0 - c * c);
      const double dr = dcn * hn;
      const double dau = du * u * (1.0 - u);
      const double dar = dr * r * (1.0 - r);
      double* dar_row = da.data().data() + i * 3 * hidden;
      double* dgr_row = dg.data().data() + i * 3 * hidden;
      dar_row[k] = dau;
      dar_row[hidden + k] = dar;
      dar_row[2 * hidden + k] = dcn;
      dgr_row[k] = dau;
      dgr_row[hidden + k] = dar;
      dgr_row[2 * hidden + k] = dcn * r;
    }
  }
  LinearGrads gi = linear_backward(xm, wi, da);
  LinearGrads gh = linear_backward(hm, wh, dg);
  for (std::size_t i = 0; i < gh.dx.size(); ++i) gh.dx[i] += dh_direct[i];
  GruGrads out;
  out.dx = single ? gi.dx.reshaped({xm.dim(1)}) : std::move(gi.dx);
  out.dh_prev = h_prev.rank() == 1 ? gh.dx.reshaped({hidden}) : std::move(gh.dx);
  out.dwi = std::move(gi.dw);
  out.dwh = std::move(gh.dw);
  out.db = std::move(gi.db);
  return out;
}

Tensor gru_sequence_forward(const Tensor& x, const GruWeights& w, bool reverse) {
  expect_rank(x, 2, "gru sequence");
  const std::size_t steps = x.dim(0), din = x.dim(1), hidden = w.hidden();
  if (steps == 0) throw ArgumentError("gru sequence: empty sequence");
  Tensor out({steps, hidden});
  Tensor h({hidden});
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    Tensor xt({din}, std::vector<double>(x.data().begin() + t * din,
                                         x.data().begin() + (t + 1) * din));
    h = gru_cell_forward(xt, h, w.wi, w.wh, w.b);
    std::copy(h.data().begin(), h.data().end(), out.data().begin() + t * hidden);
  }
  return out;
}

Tensor bigru_forward(const Tensor& x, const GruWeights& fwd, const GruWeights& bwd) {
  const Tensor a = gru_sequence_forward(x, fwd, false);
  const Tensor c = gru_sequence_forward(x, bwd, true);
  const std::size_t steps = x.dim(0), h1 = fwd.hidden(), h2 = bwd.hidden();
  Tensor out({steps, h1 + h2});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t k = 0; k < h1; ++k) out.at(t, k) = a.at(t, k);
    for (std::size_t k = 0; k < h2; ++k) out.at(t, h1 + k) = c.at(t, k);
  }
  return out;
}

// ---- loss ----------------------------------------------------------------

namespace {

double masked_count(const Tensor& z, const Tensor& y, const Tensor* mask) {
  if (z.shape() != y.shape()) {
    throw DimensionError("bce: scores " + shape_to_string(z.shape()) +
                         " vs targets " + shape_to_string(y.shape()));
  }
  if (mask) expect_shape(*mask, z.shape(), "bce mask");
  double count = 0;
  for (std::size_t i = 0; i < z.size(); ++i) count += (!mask || (*mask)[i] != 0.0);
  if (count == 0) throw ArgumentError("bce: every element is masked");
  return count;
}

double clamp_score(double z) {
  return std::min(std::max(z, kBceClamp), 1.0 - kBceClamp);
}

}  // namespace

double bce_loss(const Tensor& z, const Tensor& y, const Tensor* mask) {
  const double count = masked_count(z, y, mask);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask && (*mask)[i] == 0.0) continue;
    const double zc = clamp_score(z[i]);
    total -= y[i] * std::log(zc) + (1.0 - y[i]) * std::log(1.0 - zc);
  }
  return total / count;
}

Tensor bce_grad(const Tensor& z, const Tensor& y, const Tensor* mask) {
  const double count = masked_count(z, y, mask);
  Tensor g(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (mask && (*mask)[i] == 0.0) continue;
    if (z[i] < kBceClamp || z[i] > 1.0 - kBceClamp) continue;
    g[i] = (-y[i] / z[i] + (1.0 - y[i]) / (1.0 - z[i])) / count;
  }
  return g;
}

}  // namespace csed::nn
