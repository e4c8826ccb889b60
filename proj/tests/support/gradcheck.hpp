// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient oracle shared by unit and acceptance
// tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "csed/autograd.hpp"
#include "csed/optim.hpp"

namespace csed::testing {

using LossFn = std::function<Var(Tape&, const std::map<std::string, Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "name[index]" of the worst coordinate
};

/// Relative error |a - n| / max(|a|, |n|, floor). The floor keeps
/// coordinates whose true gradient is ~0 from dividing roundoff by zero.
inline constexpr double kRelErrorFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  const double den = std::max({std::abs(analytic), std::abs(numeric), kRelErrorFloor});
  return std::abs(analytic - numeric) / den;
}

inline double eval_loss(const std::map<std::string, Tensor>& params, const LossFn& f) {
  Tape tape;
  std::map<std::string, Var> vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.parameter(name, t));
  return f(tape, vars).value()[0];
}

/// Compares analytic and central-difference gradients on `coordinates`
/// random entries, cycling through parameters so each one is sampled.
inline GradCheckResult grad_check(std::map<std::string, Tensor> params, const LossFn& f, Rng& rng,
                                  std::size_t coordinates = 24, double h = 1e-5) {
  Gradients analytic;
  {
    Tape tape;
    std::map<std::string, Var> vars;
    for (const auto& [name, t] : params) vars.emplace(name, tape.parameter(name, t));
    analytic = tape.backward(f(tape, vars));
  }
  std::vector<std::string> names;
  for (const auto& [name, _] : params) names.push_back(name);

  GradCheckResult result;
  for (std::size_t k = 0; k < coordinates; ++k) {
    const std::string& name = names[k % names.size()];
    Tensor& p = params.at(name);
    const std::size_t i = rng.below(p.size());
    const double saved = p[i];
    p[i] = saved + h;
    const double up = eval_loss(params, f);
    p[i] = saved - h;
    const double down = eval_loss(params, f);
    p[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double err = relative_error(analytic.at(name)[i], numeric);
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = name + "[" + std::to_string(i) + "]";
    }
    ++result.coordinates;
  }
  return result;
}

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace csed::testing
