// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "floc/data.hpp"
#include "floc/model.hpp"
#include "floc/optim.hpp"

namespace floc {

struct TrainOptions {
  std::size_t batch = 8;
  bool augment = true;
  bool rescale = true;  // random rescale on top of the dihedral / channel shuffle
  double scale_min = 0.75;
  double scale_max = 1.25;
};

struct EpochStats {
  double mean_loss = 0.0;  // sample-weighted over the epoch
  double accuracy = 0.0;   // on the augmented training batches
  std::size_t samples = 0;
};

/// One of the 8 flips/rotations by multiples of 90 degrees plus a random
/// channel permutation; pixel values are untouched.
Image augment_geometry(const Image& img, Rng& rng);

/// Random rescale by a factor in [lo, hi], then a random crop (enlarged) or
/// a reflect pad at a random offset (shrunk) back to size x size.
Image augment_rescale(const Image& img, std::size_t size, Rng& rng, double lo, double hi);

/// One pass over `data` in a seed-determined order. Masks are ignored.
EpochStats train_epoch(Model<float>& model, std::span<const ManipSample> data, OptimState& state,
                       std::uint64_t seed, const TrainOptions& options = {});

/// Half-cosine decay from `base` at epoch 0 towards base * floor_ratio at
/// the last epoch.
double cosine_lr(double base, std::size_t epoch, std::size_t epochs, double floor_ratio = 0.05);

struct FitOptions {
  std::size_t epochs = 30;
  double lr = 5e-5;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  bool cosine = true;
  TrainOptions train;
};

/// Runs `epochs` calls of train_epoch with per-epoch seeds derived from
/// `seed`; `on_epoch` (optional) sees each epoch's stats as they arrive.
std::vector<EpochStats> fit(Model<float>& model, std::span<const ManipSample> data, const FitOptions& options,
                            const std::function<void(std::size_t, const EpochStats&)>& on_epoch = {});

/// Manipulation scores at the model's input size, no augmentation.
std::vector<double> predict_scores(const Model<float>& model, std::span<const ManipSample> data,
                                   std::size_t batch = 16);
/// Fraction of samples whose score falls on the side of 0.5 given by the label.
double evaluate_accuracy(const Model<float>& model, std::span<const ManipSample> data, std::size_t batch = 16);

}  // namespace floc
