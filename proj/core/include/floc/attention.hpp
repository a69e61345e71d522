// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include "floc/tensor.hpp"

namespace floc {

template <typename T>
struct AttentionWeights {
  BasicTensor<T> w_qkv;   // [3D, D]
  BasicTensor<T> b_qkv;   // [3D]
  BasicTensor<T> w_proj;  // [D, D]
  BasicTensor<T> b_proj;  // [D]
};

template <typename T>
struct AttentionResult {
  BasicTensor<T> out;   // [N,T,D]
  BasicTensor<T> attn;  // [N,S,T,T], rows are distributions
  BasicTensor<T> q;     // [N*S,T,D/S]
  BasicTensor<T> k;     // [N*S,T,D/S]
};

/// Scaled dot-product self-attention with `heads` heads over tokens[N,T,D].
/// Scores are divided by sqrt(D/heads).
template <typename T>
AttentionResult<T> multi_head_attention(const BasicTensor<T>& tokens, const AttentionWeights<T>& weights,
                                        std::size_t heads);

}  // namespace floc
