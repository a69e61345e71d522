// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cmath>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "floc/tensor.hpp"

namespace floc::detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& v) {
  for (const auto x : v)
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite value produced by ") + op);
}

// Wraps a freshly computed output. `bw` is only kept when some input
// participates in differentiation.
template <typename T, typename Backward>
BasicTensor<T> finish(const char* op, Shape shape, std::vector<T> out, std::initializer_list<BasicTensor<T>> inputs,
                      Backward&& bw) {
  check_finite(op, out);
  auto result = BasicTensor<T>::from(std::move(shape), std::move(out), false);
  bool needs_grad = false;
  for (const auto& in : inputs)
    if (in.defined() && in.requires_grad()) needs_grad = true;
  if (!needs_grad) return result;
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  for (const auto& in : inputs)
    if (in.defined()) node->inputs.push_back(in.handle());
  node->backward = std::forward<Backward>(bw);
  result.impl().requires_grad = true;
  result.impl().grad_fn = std::move(node);
  return result;
}

}  // namespace floc::detail
