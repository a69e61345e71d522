// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "record.hpp"

namespace floc {

std::string_view to_string(EdgeOperator op) { return op == EdgeOperator::sobel ? "sobel" : "prewitt"; }

EdgeOperator parse_edge_operator(std::string_view name) {
  if (name == "sobel") return EdgeOperator::sobel;
  if (name == "prewitt") return EdgeOperator::prewitt;
  throw std::invalid_argument("unknown edge operator '" + std::string(name) + "'");
}

namespace {

using Kernel3 = std::array<std::array<int, 3>, 3>;

// Correlation kernels indexed [dy + 1][dx + 1]; the vertical kernel is the
// transpose of the horizontal one.
Kernel3 horizontal_kernel(EdgeOperator op) {
  const int w = op == EdgeOperator::sobel ? 2 : 1;
  return {{{-1, 0, 1}, {-w, 0, w}, {-1, 0, 1}}};
}

}  // namespace

template <typename T>
BasicTensor<T> edge_filter(const BasicTensor<T>& x, EdgeOperator op) {
  if (x.rank() != 4) throw ShapeError("edge_filter: expected [N,C,H,W], got " + to_string(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const long H = static_cast<long>(x.dim(2)), W = static_cast<long>(x.dim(3));
  if (H < 3 || W < 3) throw ShapeError("edge_filter: spatial dims must be at least 3x3, got " + to_string(x.shape()));

  const Kernel3 kx = horizontal_kernel(op);
  const auto src = x.data();
  std::vector<T> out(x.size()), gx(x.size()), gy(x.size());
  auto clampy = [H](long y) { return std::clamp<long>(y, 0, H - 1); };
  auto clampx = [W](long v) { return std::clamp<long>(v, 0, W - 1); };

  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = src.data() + p * H * W;
    for (long y = 0; y < H; ++y)
      for (long xx = 0; xx < W; ++xx) {
        T sx = 0, sy = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const T v = in[clampy(y + dy) * W + clampx(xx + dx)];
            sx += static_cast<T>(kx[dy + 1][dx + 1]) * v;
            sy += static_cast<T>(kx[dx + 1][dy + 1]) * v;
          }
        const std::size_t i = p * H * W + y * W + xx;
        gx[i] = sx;
        gy[i] = sy;
        out[i] = std::sqrt(sx * sx + sy * sy);
      }
  }

  auto hx = x.handle();
  auto mag = out;
  return detail::finish(op == EdgeOperator::sobel ? "sobel_filter" : "prewitt_filter", x.shape(), std::move(out), {x},
                        [=, gx = std::move(gx), gy = std::move(gy), mag = std::move(mag)](std::span<const T> g) {
                          auto gin = hx->grad_sink();
                          for (std::size_t p = 0; p < planes; ++p)
                            for (long y = 0; y < H; ++y)
                              for (long xx = 0; xx < W; ++xx) {
                                const std::size_t i = p * H * W + y * W + xx;
                                // d|g|/dg is undefined at zero; use 0 there.
                                if (mag[i] == T(0)) continue;
                                const T a = g[i] * gx[i] / mag[i];
                                const T b = g[i] * gy[i] / mag[i];
                                T* dst = gin.data() + p * H * W;
                                for (int dy = -1; dy <= 1; ++dy)
                                  for (int dx = -1; dx <= 1; ++dx)
                                    dst[clampy(y + dy) * W + clampx(xx + dx)] +=
                                        a * static_cast<T>(kx[dy + 1][dx + 1]) +
                                        b * static_cast<T>(kx[dx + 1][dy + 1]);
                              }
                        });
}

template Tensor edge_filter(const Tensor&, EdgeOperator);
template Tensor64 edge_filter(const Tensor64&, EdgeOperator);

double gaussian_sigma(int kernel_size) { return 0.3 * ((kernel_size - 1) * 0.5 - 1.0) + 0.8; }

std::vector<double> gaussian_kernel(int kernel_size) {
  if (kernel_size <= 0 || kernel_size % 2 == 0)
    throw std::invalid_argument("gaussian kernel size must be a positive odd number, got " +
                                std::to_string(kernel_size));
  const double sigma = gaussian_sigma(kernel_size);
  const int c = kernel_size / 2;
  std::vector<double> taps(static_cast<std::size_t>(kernel_size));
  for (int i = 0; i < kernel_size; ++i) taps[i] = std::exp(-double((i - c) * (i - c)) / (2.0 * sigma * sigma));
  const double total = std::accumulate(taps.begin(), taps.end(), 0.0);
  for (auto& t : taps) t /= total;
  return taps;
}

namespace {

// Separable blur over `channels` interleaved planes of doubles.
std::vector<double> blur_planes(const std::vector<double>& in, std::size_t w, std::size_t h, std::size_t channels,
                                int kernel_size) {
  const auto taps = gaussian_kernel(kernel_size);
  const long r = kernel_size / 2;
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  std::vector<double> tmp(in.size()), out(in.size());
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0;
        for (long k = -r; k <= r; ++k) acc += taps[k + r] * in[(y * W + std::clamp(x + k, 0L, W - 1)) * channels + c];
        tmp[(y * W + x) * channels + c] = acc;
      }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < channels; ++c) {
        double acc = 0;
        for (long k = -r; k <= r; ++k) acc += taps[k + r] * tmp[(std::clamp(y + k, 0L, H - 1) * W + x) * channels + c];
        out[(y * W + x) * channels + c] = acc;
      }
  return out;
}

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

Image gaussian_blur(const Image& img, int kernel_size) {
  img.validate();
  if (kernel_size == 0) return img;
  std::vector<double> in(img.pixels.begin(), img.pixels.end());
  const auto out = blur_planes(in, img.width, img.height, img.channels, kernel_size);
  Image result = img;
  for (std::size_t i = 0; i < out.size(); ++i) result.pixels[i] = to_byte(out[i]);
  return result;
}

FloatMap gaussian_blur(const FloatMap& map, int kernel_size) {
  if (kernel_size == 0) return map;
  std::vector<double> in(map.values.begin(), map.values.end());
  const auto out = blur_planes(in, map.width, map.height, 1, kernel_size);
  FloatMap result = map;
  for (std::size_t i = 0; i < out.size(); ++i) result.values[i] = static_cast<float>(out[i]);
  return result;
}

std::array<int, 64> jpeg_quant_table(int quality) {
  static constexpr std::array<int, 64> kLuminance = {
      16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,  14, 13, 16, 24,  40,  57,
      69, 56, 14, 17, 22,  29,  51,  87,  80, 62, 18, 22, 37,  56,  68,  109, 103, 77, 24, 35, 55,  64,
      81, 104, 113, 92, 49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("jpeg quality must be in 1..100, got " + std::to_string(quality));
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::array<int, 64> table{};
  for (std::size_t i = 0; i < 64; ++i) table[i] = std::clamp((kLuminance[i] * scale + 50) / 100, 1, 255);
  return table;
}

Image jpeg_like_compress(const Image& img, int quality) {
  img.validate();
  const auto table = jpeg_quant_table(quality);
  // Orthonormal DCT-II basis: basis[u][x].
  std::array<std::array<double, 8>, 8> basis{};
  for (int u = 0; u < 8; ++u)
    for (int x = 0; x < 8; ++x)
      basis[u][x] = (u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0)) *
                    std::cos((2.0 * x + 1.0) * u * std::numbers::pi / 16.0);

  Image out = img;
  const std::size_t W = img.width, H = img.height, C = img.channels;
  double block[8][8], tmp[8][8], coef[8][8];
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t by = 0; by < H; by += 8)
      for (std::size_t bx = 0; bx < W; bx += 8) {
        // Edge blocks replicate the last row/column.
        for (std::size_t y = 0; y < 8; ++y)
          for (std::size_t x = 0; x < 8; ++x)
            block[y][x] = double(img.at(std::min(bx + x, W - 1), std::min(by + y, H - 1), c)) - 128.0;
        for (int u = 0; u < 8; ++u)
          for (int x = 0; x < 8; ++x) {
            double acc = 0;
            for (int y = 0; y < 8; ++y) acc += basis[u][y] * block[y][x];
            tmp[u][x] = acc;
          }
        for (int u = 0; u < 8; ++u)
          for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int x = 0; x < 8; ++x) acc += tmp[u][x] * basis[v][x];
            const double q = table[u * 8 + v];
            coef[u][v] = std::round(acc / q) * q;
          }
        for (int y = 0; y < 8; ++y)
          for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int u = 0; u < 8; ++u) acc += basis[u][y] * coef[u][v];
            tmp[y][v] = acc;
          }
        for (std::size_t y = 0; y < 8 && by + y < H; ++y)
          for (std::size_t x = 0; x < 8 && bx + x < W; ++x) {
            double acc = 0;
            for (int v = 0; v < 8; ++v) acc += tmp[y][v] * basis[v][x];
            out.at(bx + x, by + y, c) = to_byte(acc + 128.0);
          }
      }
  return out;
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = double(in) / double(out);
  for (std::size_t d = 0; d < out; ++d) {
    double s = (double(d) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, double(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(s));
    const auto i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, s - double(i0)};
  }
  return taps;
}

template <typename Get>
double sample(const Tap& tx, const Tap& ty, Get&& get) {
  const double top = get(tx.i0, ty.i0) * (1.0 - tx.w1) + get(tx.i1, ty.i0) * tx.w1;
  const double bot = get(tx.i0, ty.i1) * (1.0 - tx.w1) + get(tx.i1, ty.i1) * tx.w1;
  return top * (1.0 - ty.w1) + bot * ty.w1;
}

}  // namespace

FloatMap bilinear_resize(const FloatMap& map, std::size_t new_width, std::size_t new_height) {
  if (new_width == 0 || new_height == 0) throw std::invalid_argument("bilinear_resize: target dims must be >= 1");
  if (map.width == 0 || map.height == 0) throw std::invalid_argument("bilinear_resize: empty source");
  if (new_width == map.width && new_height == map.height) return map;
  const auto tx = bilinear_taps(map.width, new_width);
  const auto ty = bilinear_taps(map.height, new_height);
  FloatMap out = FloatMap::filled(new_width, new_height);
  for (std::size_t y = 0; y < new_height; ++y)
    for (std::size_t x = 0; x < new_width; ++x)
      out.at(x, y) = static_cast<float>(
          sample(tx[x], ty[y], [&](std::size_t sx, std::size_t sy) { return double(map.at(sx, sy)); }));
  return out;
}

Image nearest_resize(const Image& img, std::size_t new_width, std::size_t new_height) {
  img.validate();
  if (new_width == 0 || new_height == 0) throw std::invalid_argument("nearest_resize: empty target");
  Image out = Image::blank(new_width, new_height, img.channels);
  for (std::size_t y = 0; y < new_height; ++y)
    for (std::size_t x = 0; x < new_width; ++x) {
      const std::size_t sx = x * img.width / new_width, sy = y * img.height / new_height;
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  return out;
}

Image bilinear_resize(const Image& img, std::size_t new_width, std::size_t new_height) {
  img.validate();
  if (new_width == 0 || new_height == 0) throw std::invalid_argument("bilinear_resize: target dims must be >= 1");
  if (new_width == img.width && new_height == img.height) return img;
  const auto tx = bilinear_taps(img.width, new_width);
  const auto ty = bilinear_taps(img.height, new_height);
  Image out = Image::blank(new_width, new_height, img.channels);
  for (std::size_t y = 0; y < new_height; ++y)
    for (std::size_t x = 0; x < new_width; ++x)
      for (std::size_t c = 0; c < img.channels; ++c)
        out.at(x, y, c) =
            to_byte(sample(tx[x], ty[y], [&](std::size_t sx, std::size_t sy) { return double(img.at(sx, sy, c)); }));
  return out;
}

namespace {

// Union-find over provisional labels with path halving.
struct DisjointSet {
  std::vector<int> parent;
  int make() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

ComponentLabels label_components(const BinaryMask& mask, Connectivity conn) {
  if (mask.bits.size() != mask.width * mask.height) throw std::invalid_argument("mask buffer size mismatch");
  const long W = static_cast<long>(mask.width), H = static_cast<long>(mask.height);
  std::vector<int> prov(mask.bits.size(), -1);
  DisjointSet sets;

  // Pass 1: provisional labels from already-visited neighbours.
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      if (!mask.bits[y * W + x]) continue;
      int label = -1;
      auto visit = [&](long nx, long ny) {
        if (nx < 0 || ny < 0 || nx >= W) return;
        const int l = prov[ny * W + nx];
        if (l < 0) return;
        if (label < 0)
          label = l;
        else
          sets.unite(label, l);
      };
      visit(x - 1, y);
      visit(x, y - 1);
      if (conn == Connectivity::eight) {
        visit(x - 1, y - 1);
        visit(x + 1, y - 1);
      }
      prov[y * W + x] = label < 0 ? sets.make() : label;
    }

  // Pass 2: resolve roots and gather statistics.
  std::vector<int> root_to_comp(sets.parent.size(), -1);
  std::vector<Component> comps;
  ComponentLabels result;
  result.labels.assign(mask.bits.size(), -1);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      const int p = prov[y * W + x];
      if (p < 0) continue;
      const int root = sets.find(p);
      int& ci = root_to_comp[root];
      if (ci < 0) {
        ci = static_cast<int>(comps.size());
        Component c;
        c.bbox = {int(x), int(y), int(x), int(y)};
        c.rep_row = static_cast<std::size_t>(y);
        c.rep_col = static_cast<std::size_t>(x);
        comps.push_back(c);
      }
      auto& c = comps[ci];
      ++c.count;
      c.bbox.x0 = std::min(c.bbox.x0, int(x));
      c.bbox.x1 = std::max(c.bbox.x1, int(x));
      c.bbox.y1 = std::max(c.bbox.y1, int(y));
      result.labels[y * W + x] = ci;
    }

  std::vector<int> order(comps.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ca = comps[a];
    const auto& cb = comps[b];
    if (ca.count != cb.count) return ca.count > cb.count;
    if (ca.rep_row != cb.rep_row) return ca.rep_row < cb.rep_row;
    return ca.rep_col < cb.rep_col;
  });
  std::vector<int> rank(comps.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[order[i]] = static_cast<int>(i);
    result.components.push_back(comps[order[i]]);
  }
  for (auto& l : result.labels)
    if (l >= 0) l = rank[l];
  return result;
}

std::vector<Component> connected_components(const BinaryMask& mask, Connectivity conn) {
  return label_components(mask, conn).components;
}

std::optional<BBox> largest_component_bbox(const BinaryMask& mask, Connectivity conn) {
  const auto comps = connected_components(mask, conn);
  if (comps.empty()) return std::nullopt;
  return comps.front().bbox;
}

}  // namespace floc
