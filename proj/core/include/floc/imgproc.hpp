// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <array>
#include <optional>
#include <string_view>
#include <vector>

#include "floc/image.hpp"
#include "floc/tensor.hpp"

namespace floc {

enum class EdgeOperator { sobel, prewitt };

std::string_view to_string(EdgeOperator op);
EdgeOperator parse_edge_operator(std::string_view name);

/// Per-channel gradient magnitude sqrt(Gx^2 + Gy^2) over x[N,C,H,W] with
/// replicate padding. The kernels are fixed; gradients flow through to `x`.
/// Requires H, W >= 3.
template <typename T>
BasicTensor<T> edge_filter(const BasicTensor<T>& x, EdgeOperator op);

template <typename T>
BasicTensor<T> sobel_filter(const BasicTensor<T>& x) {
  return edge_filter(x, EdgeOperator::sobel);
}
template <typename T>
BasicTensor<T> prewitt_filter(const BasicTensor<T>& x) {
  return edge_filter(x, EdgeOperator::prewitt);
}

/// sigma = 0.3 * ((k - 1) * 0.5 - 1) + 0.8
double gaussian_sigma(int kernel_size);
/// Normalised 1-D Gaussian taps of odd length `kernel_size`.
std::vector<double> gaussian_kernel(int kernel_size);

/// Separable Gaussian blur with replicate borders. kernel_size 0 is the
/// identity; other sizes must be odd.
Image gaussian_blur(const Image& img, int kernel_size);
FloatMap gaussian_blur(const FloatMap& map, int kernel_size);

/// IJG-scaled luminance quantisation table for quality 1..100.
std::array<int, 64> jpeg_quant_table(int quality);

/// 8x8 block DCT round trip per channel: quantise with the scaled
/// luminance table, dequantise, inverse DCT, clamp. No entropy coding.
Image jpeg_like_compress(const Image& img, int quality);

/// Bilinear resampling with half-pixel centres (align_corners = false).
FloatMap bilinear_resize(const FloatMap& map, std::size_t new_width, std::size_t new_height);
Image bilinear_resize(const Image& img, std::size_t new_width, std::size_t new_height);

/// Nearest-neighbour resampling: source index floor(i * old / new). Keeps
/// per-pixel noise statistics intact.
Image nearest_resize(const Image& img, std::size_t new_width, std::size_t new_height);

enum class Connectivity { four = 4, eight = 8 };

struct ComponentLabels {
  // -1 for background, otherwise index into `components`.
  std::vector<int> labels;
  std::vector<Component> components;
};

/// Labels all true pixels. Components are ordered by count (descending),
/// then by representative pixel (row, col ascending).
ComponentLabels label_components(const BinaryMask& mask, Connectivity conn = Connectivity::eight);
std::vector<Component> connected_components(const BinaryMask& mask, Connectivity conn = Connectivity::eight);

/// Bounding box of the largest component; nullopt for an empty mask.
std::optional<BBox> largest_component_bbox(const BinaryMask& mask, Connectivity conn = Connectivity::eight);

}  // namespace floc
