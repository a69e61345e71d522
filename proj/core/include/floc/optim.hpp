// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <vector>

#include "floc/tensor.hpp"

namespace floc {

struct AdamWOptions {
  double lr = 5e-5;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers are created on the first step and must keep matching the
/// parameter list afterwards.
struct OptimState {
  AdamWOptions options;
  std::uint64_t step = 0;
  std::vector<std::vector<float>> first_moment;
  std::vector<std::vector<float>> second_moment;
};

/// One AdamW update with decoupled weight decay:
///   p <- p * (1 - lr * wd) - lr * m_hat / (sqrt(v_hat) + eps)
/// Parameters without a gradient buffer are treated as having zero gradient.
void adamw_step(std::vector<Tensor>& params, OptimState& state);

}  // namespace floc
