// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace floc {

/// 8-bit interleaved image, 1 or 3 channels, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  static Image blank(std::size_t w, std::size_t h, std::size_t c, std::uint8_t value = 0) {
    if (c != 1 && c != 3) throw std::invalid_argument("image channels must be 1 or 3");
    return Image{w, h, c, std::vector<std::uint8_t>(w * h * c, value)};
  }

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }

  void validate() const {
    if (channels != 1 && channels != 3) throw std::invalid_argument("image channels must be 1 or 3");
    if (width == 0 || height == 0) throw std::invalid_argument("image dimensions must be positive");
    if (pixels.size() != width * height * channels) throw std::invalid_argument("image buffer size mismatch");
  }

  bool operator==(const Image&) const = default;
};

/// true = manipulated. Stored one byte per pixel (0/1).
struct BinaryMask {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> bits;

  static BinaryMask empty(std::size_t w, std::size_t h) { return BinaryMask{w, h, std::vector<std::uint8_t>(w * h, 0)}; }
  static BinaryMask filled(std::size_t w, std::size_t h) { return BinaryMask{w, h, std::vector<std::uint8_t>(w * h, 1)}; }

  bool at(std::size_t x, std::size_t y) const { return bits[y * width + x] != 0; }
  void set(std::size_t x, std::size_t y, bool v) { bits[y * width + x] = v ? 1 : 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto b : bits) n += b != 0;
    return n;
  }
  bool none() const { return count() == 0; }

  bool operator==(const BinaryMask&) const = default;
};

/// Single-channel float raster (CAMs, probability maps).
struct FloatMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> values;

  static FloatMap filled(std::size_t w, std::size_t h, float v = 0.0f) {
    return FloatMap{w, h, std::vector<float>(w * h, v)};
  }
  float at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  float& at(std::size_t x, std::size_t y) { return values[y * width + x]; }

  bool operator==(const FloatMap&) const = default;
};

/// Inclusive pixel rectangle.
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const BBox&) const = default;
};

struct Component {
  std::size_t count = 0;
  BBox bbox;
  // First member pixel in raster order (min row, then min col).
  std::size_t rep_row = 0;
  std::size_t rep_col = 0;
};

}  // namespace floc
