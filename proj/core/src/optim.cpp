// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/optim.hpp"

#include <cmath>

namespace floc {

void adamw_step(std::vector<Tensor>& params, OptimState& state) {
  auto& opt = state.options;
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), 0.0f);
      state.second_moment.emplace_back(p.size(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size())
    throw ShapeError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                     " parameters, got " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.first_moment[i].size() != params[i].size() || state.second_moment[i].size() != params[i].size())
      throw ShapeError("adamw_step: moment buffer " + std::to_string(i) + " does not match parameter shape " +
                       to_string(params[i].shape()));

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(opt.beta1, t);
  const double bc2 = 1.0 - std::pow(opt.beta2, t);
  const double decay = 1.0 - opt.lr * opt.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    const auto grad = params[i].grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad.empty() ? 0.0 : grad[j];
      m[j] = static_cast<float>(opt.beta1 * m[j] + (1.0 - opt.beta1) * g);
      v[j] = static_cast<float>(opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g);
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] = static_cast<float>(data[j] * decay - opt.lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
  }
}

}  // namespace floc
