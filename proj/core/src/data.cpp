// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>

#include "floc/imgproc.hpp"
#include "floc/png_io.hpp"

namespace floc {

namespace fs = std::filesystem;

namespace {

// Sensor-noise range of every camera-original image. Spliced content comes
// from a much noisier source, so the inconsistency is local.
constexpr double kNoiseLo = 6.0;
constexpr double kNoiseHi = 8.0;
constexpr double kDonorNoiseLo = 24.0;
constexpr double kDonorNoiseHi = 32.0;

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

Image quantise(const std::vector<double>& rgb, std::size_t size) {
  Image img = Image::blank(size, size, 3);
  for (std::size_t i = 0; i < rgb.size(); ++i)
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(rgb[i]), 0L, 255L));
  return img;
}

}  // namespace

std::vector<ManipSample> dataset_load(const fs::path& root, LoadMode mode) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  std::vector<ManipSample> out;
  for (int label : {0, 1}) {
    const fs::path dir = root / (label == 0 ? "authentic" : "manipulated");
    for (const auto& path : list_pngs(dir)) {
      ManipSample s;
      s.name = path.filename().string();
      s.image = read_png(path);
      s.label = label;
      if (label == 1 && mode == LoadMode::eval) {
        const fs::path mpath = root / "masks" / s.name;
        if (!fs::is_regular_file(mpath)) throw IoError("missing mask for " + s.name + ": " + mpath.string());
        s.mask = read_mask_png(mpath);
        if (s.mask->width != s.image.width || s.mask->height != s.image.height)
          throw IoError("mask " + mpath.string() + " does not match its image size");
      }
      if (label == 0 && mode == LoadMode::eval) s.mask = BinaryMask::empty(s.image.width, s.image.height);
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw IoError("no images under " + root.string() + " (expected authentic/ and manipulated/)");
  return out;
}

Image procedural_image(std::size_t size, Rng& rng, double noise_sigma) {
  const std::size_t plane = size * size;
  const double s = static_cast<double>(size);
  std::vector<double> rgb(plane * 3);

  std::array<double, 3> c0, c1;
  for (auto& v : c0) v = uniform(rng, 40, 215);
  for (auto& v : c1) v = uniform(rng, 40, 215);
  const double theta = uniform(rng, 0, 2 * std::numbers::pi);
  const double fx = uniform(rng, 0.5, 2.5), fy = uniform(rng, 0.5, 2.5), ph = uniform(rng, 0, 2 * std::numbers::pi);
  const double amp = uniform(rng, 4, 14);
  std::array<double, 3> tex_w;
  for (auto& v : tex_w) v = uniform(rng, 0.5, 1.0);

  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double u = x / s, v = y / s;
      const double t = std::clamp(0.5 + (u - 0.5) * std::cos(theta) + (v - 0.5) * std::sin(theta), 0.0, 1.0);
      const double tex = amp * std::sin(2 * std::numbers::pi * (fx * u + fy * v) + ph);
      for (std::size_t c = 0; c < 3; ++c) rgb[(y * size + x) * 3 + c] = c0[c] + (c1[c] - c0[c]) * t + tex * tex_w[c];
    }

  const int shapes = uniform_int(rng, 1, 3);
  for (int k = 0; k < shapes; ++k) {
    std::array<double, 3> col;
    for (auto& v : col) v = uniform(rng, 20, 235);
    const bool circle = uniform_int(rng, 0, 1) == 0;
    const double cx = uniform(rng, 0, s), cy = uniform(rng, 0, s);
    const double rx = uniform(rng, 0.08, 0.2) * s, ry = circle ? rx : uniform(rng, 0.08, 0.2) * s;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        const bool inside = circle ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1.0 && std::abs(dy) <= 1.0;
        if (inside)
          for (std::size_t c = 0; c < 3; ++c) rgb[(y * size + x) * 3 + c] = col[c];
      }
  }

  if (noise_sigma > 0) {
    std::normal_distribution<double> nd(0.0, noise_sigma);
    for (auto& v : rgb) v += nd(rng);
  }
  return quantise(rgb, size);
}

BinaryMask random_polygon_mask(std::size_t size, Rng& rng) {
  const double s = static_cast<double>(size);
  const double cx = uniform(rng, 0.3, 0.7) * s, cy = uniform(rng, 0.3, 0.7) * s;
  const double radius = uniform(rng, 0.2, 0.32) * s;
  const int n = uniform_int(rng, 5, 9);
  std::vector<std::array<double, 2>> poly;
  for (int k = 0; k < n; ++k) {
    const double a = 2 * std::numbers::pi * (k + uniform(rng, -0.3, 0.3)) / n;
    const double r = radius * uniform(rng, 0.6, 1.0);
    poly.push_back({cx + r * std::cos(a), cy + r * std::sin(a)});
  }
  BinaryMask mask = BinaryMask::empty(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = false;
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto& a = poly[i];
        const auto& b = poly[j];
        if ((a[1] > py) != (b[1] > py) && px < (b[0] - a[0]) * (py - a[1]) / (b[1] - a[1]) + a[0]) inside = !inside;
      }
      mask.set(x, y, inside);
    }
  return mask;
}

SynthForgery synth_forgery(std::size_t size, Rng& rng, PasteMode paste, int boundary_blur) {
  SynthForgery f;
  f.host = procedural_image(size, rng, uniform(rng, kNoiseLo, kNoiseHi));
  const double donor_sigma = uniform(rng, kDonorNoiseLo, kDonorNoiseHi);
  f.donor = procedural_image(size, rng, donor_sigma);
  if (paste == PasteMode::uniform) {
    // Flat donor colour carrying the donor's noise level.
    std::array<double, 3> mean{};
    for (std::size_t i = 0; i < f.donor.pixels.size(); ++i) mean[i % 3] += f.donor.pixels[i];
    for (auto& m : mean) m /= static_cast<double>(size * size);
    std::normal_distribution<double> noise(0.0, donor_sigma);
    std::vector<double> rgb(f.donor.pixels.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = mean[i % 3] + noise(rng);
    f.donor = quantise(rgb, size);
  }
  f.mask = random_polygon_mask(size, rng);

  FloatMap alpha = FloatMap::filled(size, size);
  for (std::size_t i = 0; i < alpha.values.size(); ++i) alpha.values[i] = f.mask.bits[i] ? 1.0f : 0.0f;
  if (boundary_blur > 0) alpha = gaussian_blur(alpha, boundary_blur);

  f.forged = f.host;
  for (std::size_t i = 0; i < size * size; ++i) {
    const double a = alpha.values[i];
    for (std::size_t c = 0; c < 3; ++c) {
      const std::size_t k = i * 3 + c;
      if (a >= 1.0)
        f.forged.pixels[k] = f.donor.pixels[k];
      else if (a > 0.0)
        f.forged.pixels[k] =
            static_cast<std::uint8_t>(std::lround(a * f.donor.pixels[k] + (1.0 - a) * f.host.pixels[k]));
    }
  }
  return f;
}

void synth_forgery_generate(const fs::path& root, const SynthOptions& options) {
  if (options.count == 0 || options.count % 2 != 0)
    throw std::invalid_argument("synth: count must be a positive even number");
  if (options.size < 32) throw std::invalid_argument("synth: size must be at least 32");
  fs::create_directories(root / "authentic");
  fs::create_directories(root / "manipulated");
  fs::create_directories(root / "masks");

  Rng rng(options.seed);
  const std::size_t half = options.count / 2;
  char name[32];
  for (std::size_t i = 0; i < half; ++i) {
    std::snprintf(name, sizeof name, "a_%04zu.png", i);
    write_png(root / "authentic" / name, procedural_image(options.size, rng, uniform(rng, kNoiseLo, kNoiseHi)));
  }
  for (std::size_t i = 0; i < half; ++i) {
    std::snprintf(name, sizeof name, "m_%04zu.png", i);
    auto f = synth_forgery(options.size, rng, options.paste, options.boundary_blur);
    write_png(root / "manipulated" / name, f.forged);
    write_mask_png(root / "masks" / name, f.mask);
  }
}

Image standard_test_image() {
  Rng rng(20240229);
  return procedural_image(128, rng, 3.0);
}

}  // namespace floc
