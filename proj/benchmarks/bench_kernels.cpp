// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <benchmark/benchmark.h>

#include <random>

#include "floc/attention.hpp"
#include "floc/data.hpp"
#include "floc/imgproc.hpp"
#include "floc/model.hpp"
#include "floc/ops.hpp"

namespace floc {
namespace {

Tensor noise(Shape shape, std::uint64_t seed, bool grad = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 0.1f);
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = nd(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Stem-sized 3x3 conv, forward only and forward + backward.
void BM_Conv2d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  const auto x = noise({8, 16, hw, hw}, 1), w = noise({16, 16, 3, 3}, 2), b = noise({16}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, b, 1, ops::PaddingMode::zero));
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32);

void BM_Conv2dBackward(benchmark::State& state) {
  auto x = noise({8, 16, 16, 16}, 1, true), w = noise({16, 16, 3, 3}, 2, true), b = noise({16}, 3, true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    backward(ops::sum(ops::conv2d(x, w, b, 1, ops::PaddingMode::zero)));
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_Attention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  constexpr std::size_t D = 64;
  const auto tokens = noise({8, t, D}, 4);
  const AttentionWeights<float> w{noise({3 * D, D}, 5), noise({3 * D}, 6), noise({D, D}, 7), noise({D}, 8)};
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_attention(tokens, w, 4).out);
}
BENCHMARK(BM_Attention)->Arg(17)->Arg(65);

void BM_ModelForward(benchmark::State& state) {
  const Model<float> model(ModelConfig{}, 1);
  const auto x = noise({8, 3, 64, 64}, 9);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x).conv_logits);
}
BENCHMARK(BM_ModelForward)->Unit(benchmark::kMillisecond);

void BM_Components(benchmark::State& state) {
  std::mt19937_64 rng(10);
  std::bernoulli_distribution on(0.45);
  auto m = BinaryMask::empty(256, 256);
  for (auto& b : m.bits) b = on(rng) ? 1 : 0;
  for (auto _ : state) benchmark::DoNotOptimize(label_components(m));
}
BENCHMARK(BM_Components);

void BM_JpegLike(benchmark::State& state) {
  const auto img = standard_test_image();
  for (auto _ : state) benchmark::DoNotOptimize(jpeg_like_compress(img, 70));
}
BENCHMARK(BM_JpegLike);

void BM_GaussianBlur(benchmark::State& state) {
  const auto img = standard_test_image();
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_blur(img, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_GaussianBlur)->Arg(5)->Arg(29);

}  // namespace
}  // namespace floc

BENCHMARK_MAIN();
