// SPDX-License-Identifier: Apache-2.0
//
// Dense layer kernels: forward passes and their hand-written gradients.
// Layouts are row-major. Sequences are (T, D); batched feature maps are
// (B, T, F, C) with channels last.
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "csed/tensor.hpp"

namespace csed::nn {

enum class Mode { train, infer };

// ---- linear --------------------------------------------------------------

/// out[n, j] = sum_k w[j, k] * x[n, k] + b[j]
Tensor linear_forward(const Tensor& x, const Tensor& w, const Tensor& b);

struct LinearGrads {
  Tensor dx, dw, db;
};
LinearGrads linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy);

// ---- pointwise -----------------------------------------------------------

/// Logistic function, overflow-free and kept strictly inside (0, 1).
double sigmoid(double x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

// ---- conv2d --------------------------------------------------------------

/// 3x3 cross-correlation with zero padding 1 on time and frequency.
/// x is (T, F, Cin) or (B, T, F, Cin); kernel is (3, 3, Cin, Cout).
Tensor conv2d_forward(const Tensor& x, const Tensor& kernel, const Tensor& bias);

struct Conv2dGrads {
  Tensor dx, dkernel, dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& kernel,
                            const Tensor& dy);

// ---- batch normalization -------------------------------------------------

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormState fresh(std::size_t channels);
};

struct BatchNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
  std::vector<double> weights;  // per position; empty means all ones
  std::size_t count = 0;        // weighted position count in train mode
  Mode mode = Mode::train;
};

/// Normalizes over every axis but the last (channels). In train mode batch
/// statistics are taken over positions with non-zero weight and the running
/// statistics are updated; in infer mode the running statistics are used.
Tensor batchnorm_forward(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, BatchNormState& state, Mode mode,
                         std::span<const double> position_weights = {},
                         BatchNormCache* cache = nullptr);

struct BatchNormGrads {
  Tensor dx, dgamma, dbeta;
};
BatchNormGrads batchnorm_backward(const BatchNormCache& cache,
                                  const Tensor& gamma, const Tensor& dy);

// ---- max pooling ---------------------------------------------------------

struct PoolResult {
  Tensor out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Non-overlapping (pool_t, pool_f) max pooling over (..., T, F, C).
PoolResult maxpool2d(const Tensor& x, std::size_t pool_t, std::size_t pool_f);
Tensor maxpool2d_backward(const Shape& input_shape,
                          std::span<const std::size_t> argmax, const Tensor& dy);

// ---- GRU -----------------------------------------------------------------

/// Gate-stacked GRU weights. Rows of `wi` (3H x Din), `wh` (3H x H) and `b`
/// (3H) are ordered [update; reset; candidate].
struct GruWeights {
  Tensor wi, wh, b;

  std::size_t hidden() const { return wh.dim(1); }
  std::size_t input() const { return wi.dim(1); }
};

struct GruCache {
  Tensor u, r, n, hn;  // hn = Un . h_prev (before the reset gate)
};

/// One step for N rows:
///   u = sig(Wu x + Uu h + bu), r = sig(Wr x + Ur h + br),
///   n = tanh(Wn x + r * (Un h) + bn), h' = (1 - u) * n + u * h.
/// x is (N, Din) or (Din); h matches with H.
Tensor gru_cell_forward(const Tensor& x, const Tensor& h_prev,
                        const Tensor& wi, const Tensor& wh, const Tensor& b,
                        GruCache* cache = nullptr);

struct GruGrads {
  Tensor dx, dh_prev, dwi, dwh, db;
};
GruGrads gru_cell_backward(const Tensor& x, const Tensor& h_prev,
                           const Tensor& wi, const Tensor& wh,
                           const GruCache& cache, const Tensor& dh);

/// Unidirectional GRU over a (T, Din) sequence from a zero state.
Tensor gru_sequence_forward(const Tensor& x, const GruWeights& w, bool reverse);

/// Bidirectional GRU: (T, Din) -> (T, 2H), forward half first.
Tensor bigru_forward(const Tensor& x, const GruWeights& fwd, const GruWeights& bwd);

// ---- loss ----------------------------------------------------------------

inline constexpr double kBceClamp = 1e-7;

/// Mean binary cross-entropy over elements with non-zero mask.
double bce_loss(const Tensor& z, const Tensor& y, const Tensor* mask = nullptr);
Tensor bce_grad(const Tensor& z, const Tensor& y, const Tensor* mask = nullptr);

}  // namespace csed::nn
