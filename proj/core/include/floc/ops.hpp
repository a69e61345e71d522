// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <span>

#include "floc/tensor.hpp"

// Differentiable ops. Every op validates shapes, rejects non-finite output
// and, when any input requires a gradient, records a backward closure.
namespace floc::ops {

// Elementwise, identical shapes.
template <typename T> BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T> BasicTensor<T> scale(const BasicTensor<T>& x, T factor);
template <typename T> BasicTensor<T> relu(const BasicTensor<T>& x);
/// Exact (erf) GELU.
template <typename T> BasicTensor<T> gelu(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> sum(const BasicTensor<T>& x);
template <typename T> BasicTensor<T> mean(const BasicTensor<T>& x);

/// Same data under a new shape with equal element count.
template <typename T> BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

/// x[..., in] * w[out, in]^T + b[out]. `b` may be undefined.
template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b);

/// Batched a[B,M,K] * b[B,K,N] -> [B,M,N].
template <typename T> BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Batched a[B,M,K] * b[B,N,K]^T -> [B,M,N].
template <typename T> BasicTensor<T> bmm_nt(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// Softmax over the last axis.
template <typename T> BasicTensor<T> softmax(const BasicTensor<T>& x);

/// Normalises over the last axis, then applies gamma/beta of that length.
template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                          T eps = T(1e-5));

/// x[N,C,H,W] normalised per (sample, channel group); gamma/beta are [C].
template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, std::size_t groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps = T(1e-5));

enum class PaddingMode {
  valid,      // no padding
  zero,       // "same" padding of k/2 with zeros
  replicate,  // "same" padding of k/2 repeating the border
};

/// x[N,C,H,W] (*) w[K,C,kh,kw] + b[K]; kh, kw odd. `b` may be undefined.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, std::size_t stride,
                      PaddingMode pad);

/// Non-overlapping k x k average pooling; H and W must be multiples of k.
template <typename T> BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::size_t k);
template <typename T> BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, std::size_t k);
/// [N,C,H,W] -> [N,C].
template <typename T> BasicTensor<T> global_avg_pool(const BasicTensor<T>& x);

/// [N,C,H,W] -> [N, (H/p)(W/p), C*p*p], patches in row-major grid order.
template <typename T> BasicTensor<T> patchify(const BasicTensor<T>& x, std::size_t p);
/// [N,C,h,w] -> [N, h*w, C].
template <typename T> BasicTensor<T> map_to_tokens(const BasicTensor<T>& x);
/// [N, h*w, C] -> [N,C,h,w].
template <typename T> BasicTensor<T> tokens_to_map(const BasicTensor<T>& x, std::size_t h, std::size_t w);

/// Concatenate [N,Ta,D] and [N,Tb,D] along the token axis.
template <typename T> BasicTensor<T> concat_tokens(const BasicTensor<T>& a, const BasicTensor<T>& b);
/// Tokens [start, start+count) of [N,T,D].
template <typename T> BasicTensor<T> slice_tokens(const BasicTensor<T>& x, std::size_t start, std::size_t count);
/// Features [offset, offset+count) of the last axis.
template <typename T> BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t offset, std::size_t count);
/// Repeat [1,...] n times along axis 0.
template <typename T> BasicTensor<T> expand_batch(const BasicTensor<T>& x, std::size_t n);

/// [N,T,D] -> [N*S, T, D/S].
template <typename T> BasicTensor<T> split_heads(const BasicTensor<T>& x, std::size_t heads);
/// [N*S, T, dh] -> [N, T, S*dh].
template <typename T> BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::size_t heads);

/// Binary cross-entropy on logits[N,2] against one-hot targets built from
/// `labels` (0 = authentic, 1 = manipulated), averaged over all 2N terms.
template <typename T> BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const int> labels);

}  // namespace floc::ops
