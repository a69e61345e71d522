// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <gtest/gtest.h>

#include <random>

#include "floc/attention.hpp"
#include "floc/imgproc.hpp"
#include "floc/model.hpp"
#include "floc/ops.hpp"
#include "gradcheck.hpp"
#include "graphs.hpp"

namespace floc {
namespace {

using testing::gradcheck;
using testing::random_tensor;

constexpr double kTol = 1e-3;

// Scalarises `y` against a fixed random weight so every output element
// contributes a distinct gradient.
Tensor64 project(const Tensor64& y, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  return ops::sum(ops::mul(y, random_tensor(y.shape(), rng, false)));
}

class OpGrad : public ::testing::Test {
 protected:
  std::mt19937_64 rng{3};
};

TEST_F(OpGrad, Elementwise) {
  auto a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 3, 4}, rng);
  EXPECT_LT(gradcheck({a, b}, [](const auto& in) { return project(ops::add(in[0], in[1])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({a, b}, [](const auto& in) { return project(ops::sub(in[0], in[1])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({a, b}, [](const auto& in) { return project(ops::mul(in[0], in[1])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({a}, [](const auto& in) { return project(ops::scale(in[0], 2.5)); }).max_rel, kTol);
  EXPECT_LT(gradcheck({a}, [](const auto& in) { return project(ops::gelu(in[0])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({a}, [](const auto& in) { return ops::mean(ops::mul(in[0], in[0])); }).max_rel, kTol);
}

TEST_F(OpGrad, Relu) {
  // Keep inputs away from the kink so the central difference is exact.
  std::vector<double> v{-1.5, -0.3, 0.4, 2.0, -0.7, 0.9};
  auto x = Tensor64::from({6}, v, true);
  EXPECT_LT(gradcheck({x}, [](const auto& in) { return project(ops::relu(in[0])); }).max_rel, kTol);
}

TEST_F(OpGrad, LinearAndMatmul) {
  auto x = random_tensor({2, 5, 6}, rng), w = random_tensor({4, 6}, rng), b = random_tensor({4}, rng);
  EXPECT_LT(gradcheck({x, w, b}, [](const auto& in) { return project(ops::linear(in[0], in[1], in[2])); }).max_rel,
            kTol);
  auto p = random_tensor({3, 4, 5}, rng), q = random_tensor({3, 5, 2}, rng), r = random_tensor({3, 2, 5}, rng);
  EXPECT_LT(gradcheck({p, q}, [](const auto& in) { return project(ops::bmm(in[0], in[1])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({p, r}, [](const auto& in) { return project(ops::bmm_nt(in[0], in[1])); }).max_rel, kTol);
}

TEST_F(OpGrad, Normalisation) {
  auto t = random_tensor({2, 5, 8}, rng), g = random_tensor({8}, rng), b = random_tensor({8}, rng);
  EXPECT_LT(gradcheck({t}, [](const auto& in) { return project(ops::softmax(in[0])); }).max_rel, kTol);
  EXPECT_LT(gradcheck({t, g, b}, [](const auto& in) { return project(ops::layer_norm(in[0], in[1], in[2])); }).max_rel,
            kTol);
  auto x = random_tensor({2, 4, 6, 6}, rng), gg = random_tensor({4}, rng), gb = random_tensor({4}, rng);
  EXPECT_LT(
      gradcheck({x, gg, gb}, [](const auto& in) { return project(ops::group_norm(in[0], 2, in[1], in[2])); }).max_rel,
      kTol);
}

TEST_F(OpGrad, Convolution) {
  auto x = random_tensor({2, 4, 6, 6}, rng), w = random_tensor({3, 4, 3, 3}, rng), b = random_tensor({3}, rng);
  for (auto pad : {ops::PaddingMode::valid, ops::PaddingMode::zero, ops::PaddingMode::replicate}) {
    for (std::size_t stride : {1u, 2u}) {
      const auto r = gradcheck({x, w, b}, [&](const auto& in) { return project(ops::conv2d(in[0], in[1], in[2], stride, pad)); });
      EXPECT_LT(r.max_rel, kTol) << "stride " << stride << ": " << r.worst;
    }
  }
  // Stem geometry: 7x7 kernel, stride 4, no bias.
  auto x16 = random_tensor({1, 3, 16, 16}, rng), w7 = random_tensor({2, 3, 7, 7}, rng);
  EXPECT_LT(gradcheck({x16, w7}, [](const auto& in) {
              return project(ops::conv2d(in[0], in[1], Tensor64(), 4, ops::PaddingMode::zero));
            }).max_rel,
            kTol);
}

TEST_F(OpGrad, EdgeFilter) {
  auto x = random_tensor({2, 3, 6, 6}, rng);
  for (auto op : {EdgeOperator::sobel, EdgeOperator::prewitt}) {
    const auto r = gradcheck({x}, [op](const auto& in) { return project(edge_filter(in[0], op)); });
    EXPECT_LT(r.max_rel, kTol) << r.worst;
  }
  auto c = random_tensor({2, 3, 6, 6}, rng);
  EXPECT_LT(gradcheck({x, c}, [](const auto& in) {
              return project(combine_cabl(edge_filter(in[0], EdgeOperator::sobel), in[1]));
            }).max_rel,
            kTol);
}

TEST_F(OpGrad, Resampling) {
  auto x = random_tensor({2, 4, 6, 6}, rng);
  EXPECT_LT(gradcheck({x}, [](const auto& in) { return project(ops::avg_pool2d(in[0], 2)); }).max_rel, kTol);
  EXPECT_LT(gradcheck({x}, [](const auto& in) { return project(ops::upsample_nearest(in[0], 2)); }).max_rel, kTol);
  EXPECT_LT(gradcheck({x}, [](const auto& in) { return project(ops::global_avg_pool(in[0])); }).max_rel, kTol);
}

TEST_F(OpGrad, TokenPlumbing) {
  auto im = random_tensor({2, 3, 8, 8}, rng);
  EXPECT_LT(gradcheck({im}, [](const auto& in) { return project(ops::patchify(in[0], 4)); }).max_rel, kTol);
  EXPECT_LT(gradcheck({im}, [](const auto& in) { return project(ops::map_to_tokens(in[0])); }).max_rel, kTol);
  auto tk = random_tensor({2, 5, 8}, rng), cls = random_tensor({1, 1, 8}, rng);
  EXPECT_LT(gradcheck({tk}, [](const auto& in) {
              return project(ops::tokens_to_map(ops::slice_tokens(in[0], 1, 4), 2, 2));
            }).max_rel,
            kTol);
  EXPECT_LT(gradcheck({tk, cls}, [](const auto& in) {
              return project(ops::concat_tokens(ops::expand_batch(in[1], 2), in[0]));
            }).max_rel,
            kTol);
  EXPECT_LT(gradcheck({tk}, [](const auto& in) { return project(ops::slice_last(in[0], 2, 3)); }).max_rel, kTol);
  EXPECT_LT(gradcheck({tk}, [](const auto& in) {
              return project(ops::merge_heads(ops::scale(ops::split_heads(in[0], 2), 1.5), 2));
            }).max_rel,
            kTol);
  EXPECT_LT(gradcheck({tk}, [](const auto& in) { return project(ops::reshape(in[0], {10, 8})); }).max_rel, kTol);
}

TEST_F(OpGrad, Attention) {
  auto tk = random_tensor({2, 5, 8}, rng);
  AttentionWeights<double> w{random_tensor({24, 8}, rng, true, 0.3), random_tensor({24}, rng),
                             random_tensor({8, 8}, rng), random_tensor({8}, rng)};
  const auto r = gradcheck({tk, w.w_qkv, w.b_qkv, w.w_proj, w.b_proj}, [](const auto& in) {
    return project(multi_head_attention(in[0], AttentionWeights<double>{in[1], in[2], in[3], in[4]}, 2).out);
  });
  EXPECT_LT(r.max_rel, kTol) << r.worst;
}

TEST_F(OpGrad, BinaryCrossEntropy) {
  auto logits = random_tensor({4, 2}, rng);
  const std::vector<int> labels{0, 1, 1, 0};
  EXPECT_LT(gradcheck({logits}, [&](const auto& in) { return ops::bce_with_logits(in[0], std::span<const int>(labels)); })
                .max_rel,
            kTol);
}

TEST(MicroGraphs, TwentyRandomGraphsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = testing::make_micro_graph(seed);
    const auto r = gradcheck(g.inputs, g.f);
    std::string chain;
    for (const auto& op : g.ops) chain += op + " ";
    EXPECT_LT(r.max_rel, kTol) << "seed " << seed << " [" << chain << "] " << r.worst;
  }
}

TEST(ModelGrad, TwoBlockModelEndToEnd) {
  const auto r = testing::model_gradcheck(5);
  EXPECT_LT(r.max_rel, kTol) << r.worst;
}

TEST(Tape, RecordsOpsInTopologicalOrder) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3}, rng), b = random_tensor({3}, rng);
  const auto loss = ops::sum(ops::mul(ops::add(a, b), a));
  const auto tape = Tape<double>::record(loss);
  const auto names = tape.op_names();
  ASSERT_EQ(names.size(), 3u);
  EXPECT_EQ(names[0], "add");
  EXPECT_EQ(names[1], "mul");
  EXPECT_EQ(names[2], "sum");
}

TEST(Tape, SecondBackwardThrows) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3}, rng);
  const auto loss = ops::sum(ops::mul(a, a));
  backward(loss);
  EXPECT_THROW(backward(loss), AutogradError);
}

TEST(Tape, BackwardNeedsScalarProducedByTape) {
  std::mt19937_64 rng(1);
  auto a = random_tensor({3}, rng);
  EXPECT_THROW(backward(ops::scale(a, 2.0)), AutogradError);
  EXPECT_THROW(backward(Tensor64::from({1}, {1.0}, true)), AutogradError);
}

TEST(Tape, GradientsAccumulateAcrossForwards) {
  auto a = Tensor64::from({2}, {1.0, 2.0}, true);
  backward(ops::sum(ops::scale(a, 3.0)));
  backward(ops::sum(ops::scale(a, 3.0)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 6.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], 6.0);
}

TEST(Tensor, ShapeErrors) {
  EXPECT_THROW(Tensor64::from({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  EXPECT_THROW(ops::add(Tensor64::zeros({2}), Tensor64::zeros({3})), ShapeError);
  EXPECT_THROW(Tensor64::zeros({2, 2}).item(), ShapeError);
}

}  // namespace
}  // namespace floc
