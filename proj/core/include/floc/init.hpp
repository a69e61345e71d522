// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <random>

#include "floc/tensor.hpp"

namespace floc {

/// The only source of randomness; always passed explicitly.
using Rng = std::mt19937_64;

/// U(-b, b) with b = sqrt(6 / fan_in).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);
/// N(0, 1 / fan_in).
Tensor scaled_normal(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace floc
