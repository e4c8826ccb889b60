// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>

#include "csed/autograd.hpp"
#include "csed/tensor.hpp"

namespace csed {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Named trainable tensors plus their Adam moment estimates.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  const std::map<std::string, Tensor>& params() const noexcept { return params_; }

  const Tensor& first_moment(const std::string& name) const;
  const Tensor& second_moment(const std::string& name) const;
  std::uint64_t step() const noexcept { return step_; }

  /// Binds every parameter to `tape` as a leaf under its own name.
  std::map<std::string, Var> bind(Tape& tape) const;

  std::size_t parameter_count() const;

  /// One bias-corrected Adam update. `grads` must cover exactly the stored
  /// parameters with matching shapes.
  void adam_step(const Gradients& grads, const AdamConfig& cfg);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::uint64_t step_ = 0;
};

/// 64-bit Mersenne Twister with distribution helpers whose output does not
/// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Uniform(-s, s) with s = 1/sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace csed
