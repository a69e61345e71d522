// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/ops.hpp"

#include "record.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace floc::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using VecMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>;

template <typename T>
using Handle = std::shared_ptr<TensorImpl<T>>;

using detail::finish;

template <typename T>
void require_same_shape(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

template <typename T>
void require_rank(const char* op, const BasicTensor<T>& x, std::size_t rank) {
  if (x.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(x.shape()));
}

bool wants(const auto& h) { return h->requires_grad; }

template <typename T, typename F>
BasicTensor<T> unary(const char* op, const BasicTensor<T>& x, F&& fwd, auto&& dfdx) {
  const auto src = x.data();
  std::vector<T> out(src.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(src[i]);
  Handle<T> hx = x.handle();
  return finish(op, x.shape(), std::move(out), {x}, [hx, dfdx](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(hx->data[i]);
  });
}

}  // namespace

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("add", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("add", a.shape(), std::move(out), {a, b}, [ha, hb](std::span<const T> g) {
    for (auto* h : {ha.get(), hb.get()}) {
      if (!h->requires_grad) continue;
      auto gs = h->grad_sink();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
    }
  });
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("sub", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("sub", a.shape(), std::move(out), {a, b}, [ha, hb](std::span<const T> g) {
    if (wants(ha)) {
      auto gs = ha->grad_sink();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
    }
    if (wants(hb)) {
      auto gs = hb->grad_sink();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] -= g[i];
    }
  });
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape("mul", a, b);
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("mul", a.shape(), std::move(out), {a, b}, [ha, hb](std::span<const T> g) {
    if (wants(ha)) {
      auto gs = ha->grad_sink();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * hb->data[i];
    }
    if (wants(hb)) {
      auto gs = hb->grad_sink();
      for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i] * ha->data[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return unary(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T) { return factor; });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return unary(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
BasicTensor<T> gelu(const BasicTensor<T>& x) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary(
      "gelu", x, [](T v) { return T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2)); },
      [](T v) {
        const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
        return cdf + v * inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T acc = 0;
  for (const auto v : x.data()) acc += v;
  Handle<T> hx = x.handle();
  return finish("sum", {1}, {acc}, {x}, [hx](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  T acc = 0;
  for (const auto v : x.data()) acc += v;
  const T inv = T(1) / static_cast<T>(x.size());
  Handle<T> hx = x.handle();
  return finish("mean", {1}, {acc * inv}, {x}, [hx, inv](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (auto& v : gx) v += g[0] * inv;
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  Handle<T> hx = x.handle();
  return finish("reshape", std::move(shape), std::move(out), {x}, [hx](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  require_rank("linear(weight)", w, 2);
  const std::size_t in = w.dim(1), outf = w.dim(0);
  if (x.shape().back() != in)
    throw ShapeError("linear: input " + to_string(x.shape()) + " incompatible with weight " + to_string(w.shape()));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != outf)) throw ShapeError("linear: bias shape " + to_string(b.shape()));
  const std::size_t rows = x.size() / in;
  std::vector<T> out(rows * outf);
  {
    ConstMatMap<T> X(x.data().data(), rows, in);
    ConstMatMap<T> W(w.data().data(), outf, in);
    MatMap<T> Y(out.data(), rows, outf);
    Y.noalias() = X * W.transpose();
    if (b.defined()) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> B(b.data().data(), outf);
      Y.rowwise() += B;
    }
  }
  Shape shape = x.shape();
  shape.back() = outf;
  Handle<T> hx = x.handle(), hw = w.handle(), hb = b.defined() ? b.handle() : nullptr;
  return finish("linear", std::move(shape), std::move(out), {x, w, b}, [=](std::span<const T> g) {
    ConstMatMap<T> G(g.data(), rows, outf);
    if (wants(hx)) {
      MatMap<T> GX(hx->grad_sink().data(), rows, in);
      GX.noalias() += G * ConstMatMap<T>(hw->data.data(), outf, in);
    }
    if (wants(hw)) {
      MatMap<T> GW(hw->grad_sink().data(), outf, in);
      GW.noalias() += G.transpose() * ConstMatMap<T>(hx->data.data(), rows, in);
    }
    if (hb && wants(hb)) {
      auto gb = hb->grad_sink();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t o = 0; o < outf; ++o) gb[o] += g[r * outf + o];
    }
  });
}

template <typename T>
BasicTensor<T> bmm(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("bmm", a, 3);
  require_rank("bmm", b, 3);
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(2);
  if (b.dim(0) != B || b.dim(1) != K)
    throw ShapeError("bmm: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  std::vector<T> out(B * M * N);
  for (std::size_t i = 0; i < B; ++i) {
    MatMap<T>(out.data() + i * M * N, M, N).noalias() =
        ConstMatMap<T>(a.data().data() + i * M * K, M, K) * ConstMatMap<T>(b.data().data() + i * K * N, K, N);
  }
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("bmm", {B, M, N}, std::move(out), {a, b}, [=](std::span<const T> g) {
    for (std::size_t i = 0; i < B; ++i) {
      ConstMatMap<T> G(g.data() + i * M * N, M, N);
      if (wants(ha))
        MatMap<T>(ha->grad_sink().data() + i * M * K, M, K).noalias() +=
            G * ConstMatMap<T>(hb->data.data() + i * K * N, K, N).transpose();
      if (wants(hb))
        MatMap<T>(hb->grad_sink().data() + i * K * N, K, N).noalias() +=
            ConstMatMap<T>(ha->data.data() + i * M * K, M, K).transpose() * G;
    }
  });
}

template <typename T>
BasicTensor<T> bmm_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("bmm_nt", a, 3);
  require_rank("bmm_nt", b, 3);
  const std::size_t B = a.dim(0), M = a.dim(1), K = a.dim(2), N = b.dim(1);
  if (b.dim(0) != B || b.dim(2) != K)
    throw ShapeError("bmm_nt: " + to_string(a.shape()) + " x " + to_string(b.shape()) + "^T");
  std::vector<T> out(B * M * N);
  for (std::size_t i = 0; i < B; ++i) {
    MatMap<T>(out.data() + i * M * N, M, N).noalias() =
        ConstMatMap<T>(a.data().data() + i * M * K, M, K) *
        ConstMatMap<T>(b.data().data() + i * N * K, N, K).transpose();
  }
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("bmm_nt", {B, M, N}, std::move(out), {a, b}, [=](std::span<const T> g) {
    for (std::size_t i = 0; i < B; ++i) {
      ConstMatMap<T> G(g.data() + i * M * N, M, N);
      if (wants(ha))
        MatMap<T>(ha->grad_sink().data() + i * M * K, M, K).noalias() +=
            G * ConstMatMap<T>(hb->data.data() + i * N * K, N, K);
      if (wants(hb))
        MatMap<T>(hb->grad_sink().data() + i * N * K, N, K).noalias() +=
            G.transpose() * ConstMatMap<T>(ha->data.data() + i * M * K, M, K);
    }
  });
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.size() / cols;
  std::vector<T> out(x.size());
  const auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = src.data() + r * cols;
    T* y = out.data() + r * cols;
    const T mx = *std::max_element(in, in + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += (y[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
  }
  Handle<T> hx = x.handle();
  auto saved = out;
  return finish("softmax", x.shape(), std::move(out), {x}, [hx, y = std::move(saved), rows, cols](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t o = r * cols;
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[o + c] * y[o + c];
      for (std::size_t c = 0; c < cols; ++c) gx[o + c] += y[o + c] * (g[o + c] - dot);
    }
  });
}

namespace {

// Shared backward for normalisation layers: given xhat, rstd per group and
// the gradient w.r.t. xhat, accumulate dL/dx for one group of `n` values.
template <typename T>
void norm_group_backward(const T* xhat, const T* gxhat, T rstd, std::size_t n, T* gx) {
  T mean_g = 0, mean_gx = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_g += gxhat[i];
    mean_gx += gxhat[i] * xhat[i];
  }
  mean_g /= static_cast<T>(n);
  mean_gx /= static_cast<T>(n);
  for (std::size_t i = 0; i < n; ++i) gx[i] += rstd * (gxhat[i] - mean_g - xhat[i] * mean_gx);
}

}  // namespace

template <typename T>
BasicTensor<T> layer_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta, T eps) {
  const std::size_t cols = x.shape().back();
  if (gamma.size() != cols || beta.size() != cols)
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(cols) + " entries");
  const std::size_t rows = x.size() / cols;
  std::vector<T> out(x.size()), xhat(x.size()), rstd(rows);
  const auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = src.data() + r * cols;
    T mu = 0, var = 0;
    for (std::size_t c = 0; c < cols; ++c) mu += in[c];
    mu /= static_cast<T>(cols);
    for (std::size_t c = 0; c < cols; ++c) var += (in[c] - mu) * (in[c] - mu);
    var /= static_cast<T>(cols);
    rstd[r] = T(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      xhat[i] = (in[c] - mu) * rstd[r];
      out[i] = xhat[i] * gamma[c] + beta[c];
    }
  }
  Handle<T> hx = x.handle(), hg = gamma.handle(), hb = beta.handle();
  return finish("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                [=, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const T> g) {
                  if (wants(hg)) {
                    auto gg = hg->grad_sink();
                    for (std::size_t i = 0; i < g.size(); ++i) gg[i % cols] += g[i] * xhat[i];
                  }
                  if (wants(hb)) {
                    auto gb = hb->grad_sink();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i % cols] += g[i];
                  }
                  if (wants(hx)) {
                    auto gx = hx->grad_sink();
                    std::vector<T> gxhat(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) gxhat[c] = g[r * cols + c] * hg->data[c];
                      norm_group_backward(xhat.data() + r * cols, gxhat.data(), rstd[r], cols, gx.data() + r * cols);
                    }
                  }
                });
}

template <typename T>
BasicTensor<T> group_norm(const BasicTensor<T>& x, std::size_t groups, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, T eps) {
  require_rank("group_norm", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (groups == 0 || C % groups != 0)
    throw ShapeError("group_norm: " + std::to_string(C) + " channels not divisible into " + std::to_string(groups));
  if (gamma.size() != C || beta.size() != C) throw ShapeError("group_norm: affine parameters must have C entries");
  const std::size_t per = (C / groups) * HW;
  std::vector<T> out(x.size()), xhat(x.size()), rstd(N * groups);
  const auto src = x.data();
  for (std::size_t ng = 0; ng < N * groups; ++ng) {
    const T* in = src.data() + ng * per;
    T mu = 0, var = 0;
    for (std::size_t i = 0; i < per; ++i) mu += in[i];
    mu /= static_cast<T>(per);
    for (std::size_t i = 0; i < per; ++i) var += (in[i] - mu) * (in[i] - mu);
    var /= static_cast<T>(per);
    rstd[ng] = T(1) / std::sqrt(var + eps);
    for (std::size_t i = 0; i < per; ++i) {
      const std::size_t idx = ng * per + i;
      const std::size_t c = (idx / HW) % C;
      xhat[idx] = (in[i] - mu) * rstd[ng];
      out[idx] = xhat[idx] * gamma[c] + beta[c];
    }
  }
  Handle<T> hx = x.handle(), hg = gamma.handle(), hb = beta.handle();
  return finish("group_norm", x.shape(), std::move(out), {x, gamma, beta},
                [=, xhat = std::move(xhat), rstd = std::move(rstd)](std::span<const T> g) {
                  if (wants(hg)) {
                    auto gg = hg->grad_sink();
                    for (std::size_t i = 0; i < g.size(); ++i) gg[(i / HW) % C] += g[i] * xhat[i];
                  }
                  if (wants(hb)) {
                    auto gb = hb->grad_sink();
                    for (std::size_t i = 0; i < g.size(); ++i) gb[(i / HW) % C] += g[i];
                  }
                  if (wants(hx)) {
                    auto gx = hx->grad_sink();
                    std::vector<T> gxhat(per);
                    for (std::size_t ng = 0; ng < N * groups; ++ng) {
                      for (std::size_t i = 0; i < per; ++i) {
                        const std::size_t idx = ng * per + i;
                        gxhat[i] = g[idx] * hg->data[(idx / HW) % C];
                      }
                      norm_group_backward(xhat.data() + ng * per, gxhat.data(), rstd[ng], per, gx.data() + ng * per);
                    }
                  }
                });
}

namespace {

struct ConvGeometry {
  std::size_t C, H, W, K, kh, kw, stride, ph, pw, Ho, Wo;
  bool replicate;
  std::size_t patch() const { return C * kh * kw; }
  std::size_t out_pixels() const { return Ho * Wo; }
};

// Source pixel for a padded tap, or -1 for a zero tap.
inline long source_index(long y, long x, const ConvGeometry& g) {
  if (y < 0 || x < 0 || y >= static_cast<long>(g.H) || x >= static_cast<long>(g.W)) {
    if (!g.replicate) return -1;
    y = std::clamp<long>(y, 0, static_cast<long>(g.H) - 1);
    x = std::clamp<long>(x, 0, static_cast<long>(g.W) - 1);
  }
  return y * static_cast<long>(g.W) + x;
}

template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.out_pixels();
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        T* row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        const T* plane = img + c * g.H * g.W;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.ph);
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pw);
            const long s = source_index(y, x, g);
            row[oy * g.Wo + ox] = s < 0 ? T(0) : plane[s];
          }
        }
      }
}

template <typename T>
void col2im(const T* cols, const ConvGeometry& g, T* img) {
  const std::size_t P = g.out_pixels();
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.kh; ++ky)
      for (std::size_t kx = 0; kx < g.kw; ++kx) {
        const T* row = cols + ((c * g.kh + ky) * g.kw + kx) * P;
        T* plane = img + c * g.H * g.W;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long y = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.ph);
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long x = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pw);
            const long s = source_index(y, x, g);
            if (s >= 0) plane[s] += row[oy * g.Wo + ox];
          }
        }
      }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b, std::size_t stride,
                      PaddingMode pad) {
  require_rank("conv2d(input)", x, 4);
  require_rank("conv2d(kernel)", w, 4);
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be >= 1");
  ConvGeometry g{};
  const std::size_t N = x.dim(0);
  g.C = x.dim(1);
  g.H = x.dim(2);
  g.W = x.dim(3);
  g.K = w.dim(0);
  g.kh = w.dim(2);
  g.kw = w.dim(3);
  if (w.dim(1) != g.C)
    throw ShapeError("conv2d: kernel expects " + std::to_string(w.dim(1)) + " channels, input has " +
                     std::to_string(g.C));
  if (g.kh % 2 == 0 || g.kw % 2 == 0) throw ShapeError("conv2d: kernel sizes must be odd");
  if (b.defined() && b.size() != g.K) throw ShapeError("conv2d: bias must have one entry per output channel");
  g.stride = stride;
  g.replicate = pad == PaddingMode::replicate;
  g.ph = pad == PaddingMode::valid ? 0 : g.kh / 2;
  g.pw = pad == PaddingMode::valid ? 0 : g.kw / 2;
  if (g.H + 2 * g.ph < g.kh || g.W + 2 * g.pw < g.kw) throw ShapeError("conv2d: output would be empty");
  g.Ho = (g.H + 2 * g.ph - g.kh) / stride + 1;
  g.Wo = (g.W + 2 * g.pw - g.kw) / stride + 1;

  const std::size_t P = g.out_pixels(), KK = g.patch();
  std::vector<T> out(N * g.K * P);
  std::vector<T> cols(N * KK * P);
  ConstMatMap<T> Wm(w.data().data(), g.K, KK);
  for (std::size_t n = 0; n < N; ++n) {
    T* cn = cols.data() + n * KK * P;
    im2col(x.data().data() + n * g.C * g.H * g.W, g, cn);
    MatMap<T> Y(out.data() + n * g.K * P, g.K, P);
    Y.noalias() = Wm * ConstMatMap<T>(cn, KK, P);
    if (b.defined())
      for (std::size_t k = 0; k < g.K; ++k) Y.row(k).array() += b[k];
  }
  Handle<T> hx = x.handle(), hw = w.handle(), hb = b.defined() ? b.handle() : nullptr;
  return finish("conv2d", {N, g.K, g.Ho, g.Wo}, std::move(out), {x, w, b},
                [=, cols = std::move(cols)](std::span<const T> grad) {
                  std::vector<T> gcols(KK * P);
                  for (std::size_t n = 0; n < N; ++n) {
                    ConstMatMap<T> G(grad.data() + n * g.K * P, g.K, P);
                    ConstMatMap<T> Cn(cols.data() + n * KK * P, KK, P);
                    if (wants(hw)) MatMap<T>(hw->grad_sink().data(), g.K, KK).noalias() += G * Cn.transpose();
                    if (hb && wants(hb)) {
                      auto gb = hb->grad_sink();
                      // Plain loop: Eigen's vectorised sum peels by address, so its
                      // rounding would depend on where the buffer was allocated.
                      const T* gp = grad.data() + n * g.K * P;
                      for (std::size_t k = 0; k < g.K; ++k) {
                        T acc = T(0);
                        for (std::size_t p = 0; p < P; ++p) acc += gp[k * P + p];
                        gb[k] += acc;
                      }
                    }
                    if (wants(hx)) {
                      MatMap<T>(gcols.data(), KK, P).noalias() =
                          ConstMatMap<T>(hw->data.data(), g.K, KK).transpose() * G;
                      col2im(gcols.data(), g, hx->grad_sink().data() + n * g.C * g.H * g.W);
                    }
                  }
                });
}

template <typename T>
BasicTensor<T> avg_pool2d(const BasicTensor<T>& x, std::size_t k) {
  require_rank("avg_pool2d", x, 4);
  const std::size_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  if (k == 0 || H % k != 0 || W % k != 0)
    throw ShapeError("avg_pool2d: " + to_string(x.shape()) + " not divisible by " + std::to_string(k));
  const std::size_t h = H / k, w = W / k;
  const T inv = T(1) / static_cast<T>(k * k);
  std::vector<T> out(NC * h * w, T(0));
  const auto src = x.data();
  for (std::size_t p = 0; p < NC; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) out[(p * h + y / k) * w + xx / k] += src[(p * H + y) * W + xx] * inv;
  Handle<T> hx = x.handle();
  return finish("avg_pool2d", {x.dim(0), x.dim(1), h, w}, std::move(out), {x}, [=](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t p = 0; p < NC; ++p)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) gx[(p * H + y) * W + xx] += g[(p * h + y / k) * w + xx / k] * inv;
  });
}

template <typename T>
BasicTensor<T> upsample_nearest(const BasicTensor<T>& x, std::size_t k) {
  require_rank("upsample_nearest", x, 4);
  if (k == 0) throw ShapeError("upsample_nearest: factor must be >= 1");
  const std::size_t NC = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3), H = h * k, W = w * k;
  std::vector<T> out(NC * H * W);
  const auto src = x.data();
  for (std::size_t p = 0; p < NC; ++p)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t xx = 0; xx < W; ++xx) out[(p * H + y) * W + xx] = src[(p * h + y / k) * w + xx / k];
  Handle<T> hx = x.handle();
  return finish("upsample_nearest", {x.dim(0), x.dim(1), H, W}, std::move(out), {x}, [=](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t p = 0; p < NC; ++p)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) gx[(p * h + y / k) * w + xx / k] += g[(p * H + y) * W + xx];
  });
}

template <typename T>
BasicTensor<T> global_avg_pool(const BasicTensor<T>& x) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  const T inv = T(1) / static_cast<T>(HW);
  std::vector<T> out(NC, T(0));
  const auto src = x.data();
  for (std::size_t p = 0; p < NC; ++p) {
    T acc = 0;
    for (std::size_t i = 0; i < HW; ++i) acc += src[p * HW + i];
    out[p] = acc * inv;
  }
  Handle<T> hx = x.handle();
  return finish("global_avg_pool", {x.dim(0), x.dim(1)}, std::move(out), {x}, [=](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t p = 0; p < NC; ++p)
      for (std::size_t i = 0; i < HW; ++i) gx[p * HW + i] += g[p] * inv;
  });
}

namespace {

// Generic gather op: out[i] = in[index[i]]; backward scatters.
template <typename T>
BasicTensor<T> gather(const char* op, const BasicTensor<T>& x, Shape shape, std::vector<std::size_t> index) {
  std::vector<T> out(index.size());
  const auto src = x.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[i] = src[index[i]];
  Handle<T> hx = x.handle();
  return finish(op, std::move(shape), std::move(out), {x}, [hx, index = std::move(index)](std::span<const T> g) {
    auto gx = hx->grad_sink();
    for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
  });
}

}  // namespace

template <typename T>
BasicTensor<T> patchify(const BasicTensor<T>& x, std::size_t p) {
  require_rank("patchify", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (p == 0 || H % p != 0 || W % p != 0)
    throw ShapeError("patchify: " + to_string(x.shape()) + " not divisible by patch " + std::to_string(p));
  const std::size_t gh = H / p, gw = W / p, F = C * p * p;
  std::vector<std::size_t> index(N * gh * gw * F);
  std::size_t i = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t gy = 0; gy < gh; ++gy)
      for (std::size_t gx = 0; gx < gw; ++gx)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t iy = 0; iy < p; ++iy)
            for (std::size_t ix = 0; ix < p; ++ix)
              index[i++] = ((n * C + c) * H + gy * p + iy) * W + gx * p + ix;
  return gather("patchify", x, {N, gh * gw, F}, std::move(index));
}

template <typename T>
BasicTensor<T> map_to_tokens(const BasicTensor<T>& x) {
  require_rank("map_to_tokens", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  std::vector<std::size_t> index(N * HW * C);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < HW; ++t)
      for (std::size_t c = 0; c < C; ++c) index[(n * HW + t) * C + c] = (n * C + c) * HW + t;
  return gather("map_to_tokens", x, {N, HW, C}, std::move(index));
}

template <typename T>
BasicTensor<T> tokens_to_map(const BasicTensor<T>& x, std::size_t h, std::size_t w) {
  require_rank("tokens_to_map", x, 3);
  const std::size_t N = x.dim(0), HW = x.dim(1), C = x.dim(2);
  if (h * w != HW) throw ShapeError("tokens_to_map: " + std::to_string(HW) + " tokens do not form a grid of that size");
  std::vector<std::size_t> index(N * C * HW);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < HW; ++t) index[(n * C + c) * HW + t] = (n * HW + t) * C + c;
  return gather("tokens_to_map", x, {N, C, h, w}, std::move(index));
}

template <typename T>
BasicTensor<T> concat_tokens(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank("concat_tokens", a, 3);
  require_rank("concat_tokens", b, 3);
  const std::size_t N = a.dim(0), Ta = a.dim(1), Tb = b.dim(1), D = a.dim(2);
  if (b.dim(0) != N || b.dim(2) != D)
    throw ShapeError("concat_tokens: " + to_string(a.shape()) + " and " + to_string(b.shape()));
  std::vector<T> out;
  out.reserve(N * (Ta + Tb) * D);
  for (std::size_t n = 0; n < N; ++n) {
    out.insert(out.end(), a.data().begin() + n * Ta * D, a.data().begin() + (n + 1) * Ta * D);
    out.insert(out.end(), b.data().begin() + n * Tb * D, b.data().begin() + (n + 1) * Tb * D);
  }
  Handle<T> ha = a.handle(), hb = b.handle();
  return finish("concat_tokens", {N, Ta + Tb, D}, std::move(out), {a, b}, [=](std::span<const T> g) {
    for (std::size_t n = 0; n < N; ++n) {
      const T* gn = g.data() + n * (Ta + Tb) * D;
      if (wants(ha)) {
        auto gs = ha->grad_sink();
        for (std::size_t i = 0; i < Ta * D; ++i) gs[n * Ta * D + i] += gn[i];
      }
      if (wants(hb)) {
        auto gs = hb->grad_sink();
        for (std::size_t i = 0; i < Tb * D; ++i) gs[n * Tb * D + i] += gn[Ta * D + i];
      }
    }
  });
}

template <typename T>
BasicTensor<T> slice_tokens(const BasicTensor<T>& x, std::size_t start, std::size_t count) {
  require_rank("slice_tokens", x, 3);
  const std::size_t N = x.dim(0), Tt = x.dim(1), D = x.dim(2);
  if (count == 0 || start + count > Tt) throw ShapeError("slice_tokens: range out of bounds");
  std::vector<std::size_t> index;
  index.reserve(N * count * D);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = start; t < start + count; ++t)
      for (std::size_t d = 0; d < D; ++d) index.push_back((n * Tt + t) * D + d);
  return gather("slice_tokens", x, {N, count, D}, std::move(index));
}

template <typename T>
BasicTensor<T> slice_last(const BasicTensor<T>& x, std::size_t offset, std::size_t count) {
  const std::size_t F = x.shape().back();
  if (count == 0 || offset + count > F) throw ShapeError("slice_last: range out of bounds");
  const std::size_t rows = x.size() / F;
  std::vector<std::size_t> index;
  index.reserve(rows * count);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t f = offset; f < offset + count; ++f) index.push_back(r * F + f);
  Shape shape = x.shape();
  shape.back() = count;
  return gather("slice_last", x, std::move(shape), std::move(index));
}

template <typename T>
BasicTensor<T> expand_batch(const BasicTensor<T>& x, std::size_t n) {
  if (x.dim(0) != 1) throw ShapeError("expand_batch: leading dimension must be 1");
  const std::size_t per = x.size();
  std::vector<std::size_t> index(n * per);
  for (std::size_t i = 0; i < index.size(); ++i) index[i] = i % per;
  Shape shape = x.shape();
  shape[0] = n;
  return gather("expand_batch", x, std::move(shape), std::move(index));
}

template <typename T>
BasicTensor<T> split_heads(const BasicTensor<T>& x, std::size_t heads) {
  require_rank("split_heads", x, 3);
  const std::size_t N = x.dim(0), Tt = x.dim(1), D = x.dim(2);
  if (heads == 0 || D % heads != 0)
    throw ShapeError("split_heads: dimension " + std::to_string(D) + " not divisible by " + std::to_string(heads) +
                     " heads");
  const std::size_t dh = D / heads;
  std::vector<std::size_t> index(x.size());
  std::size_t i = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t s = 0; s < heads; ++s)
      for (std::size_t t = 0; t < Tt; ++t)
        for (std::size_t j = 0; j < dh; ++j) index[i++] = (n * Tt + t) * D + s * dh + j;
  return gather("split_heads", x, {N * heads, Tt, dh}, std::move(index));
}

template <typename T>
BasicTensor<T> merge_heads(const BasicTensor<T>& x, std::size_t heads) {
  require_rank("merge_heads", x, 3);
  const std::size_t NS = x.dim(0), Tt = x.dim(1), dh = x.dim(2);
  if (heads == 0 || NS % heads != 0) throw ShapeError("merge_heads: batch not divisible by head count");
  const std::size_t N = NS / heads, D = heads * dh;
  std::vector<std::size_t> index(x.size());
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < Tt; ++t)
      for (std::size_t s = 0; s < heads; ++s)
        for (std::size_t j = 0; j < dh; ++j) index[(n * Tt + t) * D + s * dh + j] = ((n * heads + s) * Tt + t) * dh + j;
  return gather("merge_heads", x, {N, Tt, D}, std::move(index));
}

template <typename T>
BasicTensor<T> bce_with_logits(const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank("bce_with_logits", logits, 2);
  const std::size_t N = logits.dim(0);
  if (logits.dim(1) != 2) throw ShapeError("bce_with_logits: logits must be [N,2]");
  if (labels.size() != N) throw ShapeError("bce_with_logits: one label per row required");
  for (const int y : labels)
    if (y != 0 && y != 1) throw std::invalid_argument("bce_with_logits: labels must be 0 or 1");
  std::vector<T> target(2 * N);
  for (std::size_t n = 0; n < N; ++n) target[2 * n + static_cast<std::size_t>(labels[n])] = T(1);
  const auto z = logits.data();
  T acc = 0;
  for (std::size_t i = 0; i < 2 * N; ++i)
    acc += std::max(z[i], T(0)) - z[i] * target[i] + std::log1p(std::exp(-std::abs(z[i])));
  const T inv = T(1) / static_cast<T>(2 * N);
  Handle<T> hz = logits.handle();
  return finish("bce_with_logits", {1}, {acc * inv}, {logits},
                [hz, inv, target = std::move(target)](std::span<const T> g) {
                  auto gz = hz->grad_sink();
                  for (std::size_t i = 0; i < target.size(); ++i) {
                    const T z = hz->data[i];
                    const T sig = z >= 0 ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
                    gz[i] += g[0] * inv * (sig - target[i]);
                  }
                });
}

#define FLOC_INSTANTIATE_OPS(T)                                                                                    \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> mul(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                                         \
  template BasicTensor<T> relu(const BasicTensor<T>&);                                                             \
  template BasicTensor<T> gelu(const BasicTensor<T>&);                                                             \
  template BasicTensor<T> sum(const BasicTensor<T>&);                                                              \
  template BasicTensor<T> mean(const BasicTensor<T>&);                                                             \
  template BasicTensor<T> reshape(const BasicTensor<T>&, Shape);                                                   \
  template BasicTensor<T> linear(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> bmm(const BasicTensor<T>&, const BasicTensor<T>&);                                       \
  template BasicTensor<T> bmm_nt(const BasicTensor<T>&, const BasicTensor<T>&);                                    \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                          \
  template BasicTensor<T> layer_norm(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, T);      \
  template BasicTensor<T> group_norm(const BasicTensor<T>&, std::size_t, const BasicTensor<T>&,                    \
                                     const BasicTensor<T>&, T);                                                    \
  template BasicTensor<T> conv2d(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&, std::size_t, \
                                 PaddingMode);                                                                     \
  template BasicTensor<T> avg_pool2d(const BasicTensor<T>&, std::size_t);                                          \
  template BasicTensor<T> upsample_nearest(const BasicTensor<T>&, std::size_t);                                    \
  template BasicTensor<T> global_avg_pool(const BasicTensor<T>&);                                                  \
  template BasicTensor<T> patchify(const BasicTensor<T>&, std::size_t);                                            \
  template BasicTensor<T> map_to_tokens(const BasicTensor<T>&);                                                    \
  template BasicTensor<T> tokens_to_map(const BasicTensor<T>&, std::size_t, std::size_t);                          \
  template BasicTensor<T> concat_tokens(const BasicTensor<T>&, const BasicTensor<T>&);                             \
  template BasicTensor<T> slice_tokens(const BasicTensor<T>&, std::size_t, std::size_t);                           \
  template BasicTensor<T> slice_last(const BasicTensor<T>&, std::size_t, std::size_t);                             \
  template BasicTensor<T> expand_batch(const BasicTensor<T>&, std::size_t);                                        \
  template BasicTensor<T> split_heads(const BasicTensor<T>&, std::size_t);                                         \
  template BasicTensor<T> merge_heads(const BasicTensor<T>&, std::size_t);                                         \
  template BasicTensor<T> bce_with_logits(const BasicTensor<T>&, std::span<const int>);

FLOC_INSTANTIATE_OPS(float)
FLOC_INSTANTIATE_OPS(double)

}  // namespace floc::ops
