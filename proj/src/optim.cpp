// SPDX-License-Identifier: Apache-2.0
#include "csed/optim.hpp"

#include <cmath>

#include "csed/errors.hpp"

namespace csed {

void ParamStore::add(const std::string& name, Tensor value) {
  if (params_.count(name)) throw UsageError("duplicate parameter '" + name + "'");
  m_.emplace(name, Tensor(value.shape()));
  v_.emplace(name, Tensor(value.shape()));
  params_.emplace(name, std::move(value));
}

bool ParamStore::contains(const std::string& name) const { return params_.count(name) > 0; }

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

const Tensor& ParamStore::first_moment(const std::string& name) const {
  get(name);
  return m_.at(name);
}

const Tensor& ParamStore::second_moment(const std::string& name) const {
  get(name);
  return v_.at(name);
}

std::map<std::string, Var> ParamStore::bind(Tape& tape) const {
  std::map<std::string, Var> vars;
  for (const auto& [name, value] : params_) vars.emplace(name, tape.parameter(name, value));
  return vars;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, value] : params_) n += value.size();
  return n;
}

void ParamStore::adam_step(const Gradients& grads, const AdamConfig& cfg) {
  if (grads.size() != params_.size()) {
    throw DimensionError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params_.size()) + " parameters");
  }
  for (const auto& [name, p] : params_) {
    auto it = grads.find(name);
    if (it == grads.end()) throw DimensionError("adam: no gradient for '" + name + "'");
    expect_shape(it->second, p.shape(), "adam gradient '" + name + "'");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [name, p] : params_) {
    const Tensor& g = grads.at(name);
    Tensor& m = m_.at(name);
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw ArgumentError("Rng::below(0)");
  // Rejection sampling keeps the result exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * 3.14159265358979323846 * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  if (fan_in == 0) throw ArgumentError("init_uniform: zero fan-in");
  const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-s, s);
  return t;
}

}  // namespace csed
