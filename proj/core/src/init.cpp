// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/init.hpp"

#include <cmath>

namespace floc {

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> data(numel(shape));
  for (auto& v : data) v = static_cast<float>(dist(rng));
  return Tensor::from(std::move(shape), std::move(data), true);
}

Tensor scaled_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(fan_in)));
  std::vector<float> data(numel(shape));
  for (auto& v : data) v = static_cast<float>(dist(rng));
  return Tensor::from(std::move(shape), std::move(data), true);
}

}  // namespace floc
