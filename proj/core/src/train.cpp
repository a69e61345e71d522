// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "floc/imgproc.hpp"

namespace floc {

namespace {

// Symmetric reflection of i into [0, n).
std::size_t reflect(long i, long n) {
  const long period = 2 * n;
  long r = i % period;
  if (r < 0) r += period;
  return static_cast<std::size_t>(r < n ? r : period - 1 - r);
}

}  // namespace

Image augment_geometry(const Image& img, Rng& rng) {
  img.validate();
  const auto code = std::uniform_int_distribution<int>(0, 7)(rng);
  std::array<std::size_t, 3> perm{0, 1, 2};
  if (img.channels == 3) std::shuffle(perm.begin(), perm.end(), rng);
  const bool transpose = code & 4, flip_x = code & 1, flip_y = code & 2;
  const std::size_t W = transpose ? img.height : img.width, H = transpose ? img.width : img.height;
  Image out = Image::blank(W, H, img.channels);
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      std::size_t sx = transpose ? y : x, sy = transpose ? x : y;
      if (flip_x) sx = img.width - 1 - sx;
      if (flip_y) sy = img.height - 1 - sy;
      for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(sx, sy, perm[c]);
    }
  return out;
}

Image augment_rescale(const Image& img, std::size_t size, Rng& rng, double lo, double hi) {
  img.validate();
  const double f = std::uniform_real_distribution<double>(lo, hi)(rng);
  const auto s = static_cast<std::size_t>(std::max(1L, std::lround(size * f)));
  // Nearest-neighbour resampling: interpolation would average away the
  // pixel-level noise statistics the detector relies on.
  Image scaled = nearest_resize(img, s, s);
  if (s == size) return scaled;

  Image out = Image::blank(size, size, img.channels);
  if (s > size) {
    std::uniform_int_distribution<std::size_t> off(0, s - size);
    const std::size_t ox = off(rng), oy = off(rng);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = scaled.at(x + ox, y + oy, c);
  } else {
    std::uniform_int_distribution<std::size_t> off(0, size - s);
    const long ox = static_cast<long>(off(rng)), oy = static_cast<long>(off(rng));
    const long n = static_cast<long>(s);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const std::size_t sx = reflect(static_cast<long>(x) - ox, n), sy = reflect(static_cast<long>(y) - oy, n);
        for (std::size_t c = 0; c < img.channels; ++c) out.at(x, y, c) = scaled.at(sx, sy, c);
      }
  }
  return out;
}

EpochStats train_epoch(Model<float>& model, std::span<const ManipSample> data, OptimState& state,
                       std::uint64_t seed, const TrainOptions& options) {
  if (data.empty()) throw std::invalid_argument("train_epoch: empty dataset");
  if (options.batch == 0) throw std::invalid_argument("train_epoch: batch must be positive");
  const std::size_t size = model.config().input_size;
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  auto params = model.parameters();
  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < order.size(); start += options.batch) {
    const std::size_t end = std::min(order.size(), start + options.batch);
    std::vector<Image> batch;
    std::vector<int> labels;
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = data[order[i]];
      if (!options.augment) {
        batch.push_back(s.image);
      } else {
        Image a = augment_geometry(s.image, rng);
        if (options.rescale) a = augment_rescale(a, size, rng, options.scale_min, options.scale_max);
        batch.push_back(std::move(a));
      }
      labels.push_back(s.label);
    }
    std::vector<const Image*> ptrs;
    for (const auto& b : batch) ptrs.push_back(&b);

    model.zero_grad();
    auto out = model.forward(images_to_batch(ptrs, size));
    auto loss = total_loss(out.conv_logits, out.trans_logits, labels);
    backward(loss);
    adamw_step(params, state);

    const auto scores = image_scores(out.conv_logits, out.trans_logits);
    for (std::size_t i = 0; i < labels.size(); ++i) correct += (scores[i] >= 0.5) == (labels[i] == 1);
    loss_sum += static_cast<double>(loss.item()) * labels.size();
  }
  model.zero_grad();
  stats.samples = data.size();
  stats.mean_loss = loss_sum / static_cast<double>(data.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return stats;
}

double cosine_lr(double base, std::size_t epoch, std::size_t epochs, double floor_ratio) {
  if (epochs <= 1) return base;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return base * (floor_ratio + (1.0 - floor_ratio) * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

std::vector<EpochStats> fit(Model<float>& model, std::span<const ManipSample> data, const FitOptions& options,
                            const std::function<void(std::size_t, const EpochStats&)>& on_epoch) {
  OptimState state;
  state.options.lr = options.lr;
  state.options.weight_decay = options.weight_decay;
  std::seed_seq seq{options.seed, std::uint64_t{0x5eed}};
  std::vector<std::uint64_t> seeds(options.epochs);
  seq.generate(seeds.begin(), seeds.end());
  std::vector<EpochStats> history;
  for (std::size_t e = 0; e < options.epochs; ++e) {
    state.options.lr = options.cosine ? cosine_lr(options.lr, e, options.epochs) : options.lr;
    history.push_back(train_epoch(model, data, state, seeds[e], options.train));
    if (on_epoch) on_epoch(e, history.back());
  }
  return history;
}

std::vector<double> predict_scores(const Model<float>& model, std::span<const ManipSample> data, std::size_t batch) {
  const Model<float> net = model.frozen();
  const std::size_t size = net.config().input_size;
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    std::vector<const Image*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&data[i].image);
    auto o = net.forward(images_to_batch(ptrs, size));
    for (double s : image_scores(o.conv_logits, o.trans_logits)) out.push_back(s);
  }
  return out;
}

double evaluate_accuracy(const Model<float>& model, std::span<const ManipSample> data, std::size_t batch) {
  if (data.empty()) throw std::invalid_argument("evaluate_accuracy: empty dataset");
  const auto scores = predict_scores(model, data, batch);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) correct += (scores[i] >= 0.5) == (data[i].label == 1);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace floc
