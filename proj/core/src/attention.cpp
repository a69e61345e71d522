// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/attention.hpp"

#include <cmath>

#include "floc/ops.hpp"

namespace floc {

template <typename T>
AttentionResult<T> multi_head_attention(const BasicTensor<T>& tokens, const AttentionWeights<T>& weights,
                                        std::size_t heads) {
  if (tokens.rank() != 3) throw ShapeError("multi_head_attention: tokens must be [N,T,D]");
  const std::size_t N = tokens.dim(0), Tn = tokens.dim(1), D = tokens.dim(2);
  if (heads == 0 || D % heads != 0)
    throw ShapeError("multi_head_attention: token dim " + std::to_string(D) + " not divisible by " +
                     std::to_string(heads) + " heads");
  if (weights.w_qkv.dim(0) != 3 * D || weights.w_qkv.dim(1) != D)
    throw ShapeError("multi_head_attention: qkv projection must be [3D, D]");

  const auto qkv = ops::linear(tokens, weights.w_qkv, weights.b_qkv);
  auto q = ops::split_heads(ops::slice_last(qkv, 0, D), heads);
  auto k = ops::split_heads(ops::slice_last(qkv, D, D), heads);
  auto v = ops::split_heads(ops::slice_last(qkv, 2 * D, D), heads);

  const T inv_scale = T(1) / std::sqrt(static_cast<T>(D) / static_cast<T>(heads));
  auto attn = ops::softmax(ops::scale(ops::bmm_nt(q, k), inv_scale));
  auto mixed = ops::merge_heads(ops::bmm(attn, v), heads);
  auto out = ops::linear(mixed, weights.w_proj, weights.b_proj);

  AttentionResult<T> result;
  result.out = std::move(out);
  result.attn = ops::reshape(attn, {N, heads, Tn, Tn});
  result.q = std::move(q);
  result.k = std::move(k);
  return result;
}

template AttentionResult<float> multi_head_attention(const Tensor&, const AttentionWeights<float>&, std::size_t);
template AttentionResult<double> multi_head_attention(const Tensor64&, const AttentionWeights<double>&, std::size_t);

}  // namespace floc
