// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "floc/image.hpp"
#include "floc/init.hpp"

namespace floc {

struct ManipSample {
  std::string name;  // file name inside its class directory
  Image image;
  int label = 0;                    // 1 = manipulated
  std::optional<BinaryMask> mask;   // set only by LoadMode::eval
};

/// train: images and labels only, masks/ is never opened.
/// eval: every manipulated image must have masks/<name> of equal size.
enum class LoadMode { train, eval };

/// Reads root/authentic/*.png and root/manipulated/*.png, sorted by name,
/// authentic first. Throws on an empty or malformed layout.
std::vector<ManipSample> dataset_load(const std::filesystem::path& root, LoadMode mode);

/// Spliced content: `donor` copies a region of a second, much noisier
/// image; `uniform` fills the region with that image's mean colour plus
/// noise of the same level.
enum class PasteMode { donor, uniform };

struct SynthOptions {
  std::size_t count = 400;  // even; half authentic, half manipulated
  std::size_t size = 64;
  std::uint64_t seed = 0;
  PasteMode paste = PasteMode::donor;
  int boundary_blur = 0;  // Gaussian kernel on the paste alpha, 0 = hard edge
};

struct SynthForgery {
  Image host;
  Image donor;
  Image forged;
  BinaryMask mask;
};

/// Procedural scene: two-colour gradient, a few flat shapes, low-frequency
/// texture, then i.i.d. Gaussian noise of the given sigma.
Image procedural_image(std::size_t size, Rng& rng, double noise_sigma);

/// Random star-shaped polygon covering roughly 5-20% of the image.
BinaryMask random_polygon_mask(std::size_t size, Rng& rng);

SynthForgery synth_forgery(std::size_t size, Rng& rng, PasteMode paste, int boundary_blur);

/// Writes authentic/, manipulated/ and masks/ under `root` (created if
/// needed). Throws on odd count or size < 32.
void synth_forgery_generate(const std::filesystem::path& root, const SynthOptions& options);

/// Fixed 128x128 colour scene used by codec tests and benchmarks.
Image standard_test_image();

}  // namespace floc
