// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "floc/image.hpp"

namespace floc {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Colour PNGs decode to 3 channels, grey ones to 1; alpha is dropped and
/// 16-bit samples are reduced to 8 bits.
Image read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image& img);
Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& img);

/// Masks are stored as 8-bit grey: 0 authentic, 255 manipulated. Any value
/// >= 128 (first channel) reads as manipulated.
BinaryMask mask_from_image(const Image& img);
Image mask_to_image(const BinaryMask& mask);
BinaryMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

}  // namespace floc
