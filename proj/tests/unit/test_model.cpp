// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "floc/model.hpp"
#include "floc/ops.hpp"

namespace floc {
namespace {

ModelConfig small_config(std::size_t depth) {
  ModelConfig c;
  c.input_size = 32;
  c.channels = 8;
  c.token_dim = 16;
  c.heads = 2;
  c.norm_groups = 2;
  c.cabl_depth = depth;
  return c;
}

Tensor random_images(std::size_t n, std::size_t size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(n * 3 * size * size);
  for (auto& x : v) x = nd(rng);
  return Tensor::from({n, 3, size, size}, std::move(v));
}

// F_i - C must equal S (.) C in every fused block, for each depth setting
// of a six-block model.
TEST(Cabl, ResidualEqualsEdgeTimesConv) {
  for (std::size_t depth : {2u, 4u, 6u}) {
    const Model<float> model(small_config(depth), 11 + depth);
    const auto out = model.forward(random_images(2, 32, depth));
    ASSERT_EQ(out.traces.size(), 6u);
    for (std::size_t b = 0; b < 6; ++b) {
      const auto& t = out.traces[b];
      ASSERT_EQ(t.cabl, b < depth) << "depth " << depth << " block " << b;
      if (!t.cabl) {
        EXPECT_FALSE(t.edge.defined());
        continue;
      }
      const auto f = t.out.data(), c = t.conv.data(), s = t.edge.data();
      ASSERT_EQ(f.size(), c.size());
      double worst = 0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double sc = double(s[i]) * double(c[i]);
        const double diff = std::abs((double(f[i]) - double(c[i])) - sc);
        worst = std::max(worst, diff / std::max(1.0, std::abs(sc)));
      }
      EXPECT_LE(worst, 1e-6) << "depth " << depth << " block " << b;
    }
  }
}

TEST(Cabl, EdgeIsTheFilterOfTheBlockInput) {
  const Model<float> model(small_config(6), 3);
  const auto stem = model.stem_forward(random_images(1, 32, 5));
  const auto t = model.cabl_block_forward(0, stem.conv);
  const auto filtered = edge_filter(t.input, EdgeOperator::sobel);
  const auto expect = filtered.data();
  const auto got = t.edge.data();
  ASSERT_EQ(expect.size(), got.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_FLOAT_EQ(got[i], expect[i]);
}

TEST(Cabl, AlternativeStructures) {
  auto cfg = small_config(6);
  cfg.cabl_structure = CablStructure::I;
  const Model<float> m1(cfg, 3);
  const auto stem = m1.stem_forward(random_images(1, 32, 5));
  const auto t1 = m1.cabl_block_forward(0, stem.conv);
  const auto f = t1.out.data(), c = t1.conv.data(), e = t1.edge.data();
  for (std::size_t i = 0; i < f.size(); ++i) EXPECT_NEAR(f[i], c[i] + e[i], 1e-5f * std::max(1.0f, std::abs(f[i])));

  cfg.cabl_structure = CablStructure::II;
  const Model<float> m2(cfg, 3);
  const auto t2 = m2.cabl_block_forward(0, stem.conv);
  EXPECT_TRUE(t2.cabl);
  EXPECT_EQ(t2.out.shape(), t1.out.shape());
  EXPECT_EQ(parse_cabl_structure("II"), CablStructure::II);
  EXPECT_THROW(parse_cabl_structure("IV"), std::invalid_argument);
}

TEST(Model, SeededInitialisationIsDeterministic) {
  const Model<float> a(small_config(6), 42), b(small_config(6), 42), c(small_config(6), 43);
  const auto pa = a.named_parameters(), pb = b.named_parameters(), pc = c.named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    const auto x = pa[i].tensor.data(), y = pb[i].tensor.data(), z = pc[i].tensor.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin())) << pa[i].name;
    any_diff |= !std::equal(x.begin(), x.end(), z.begin());
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, ForwardShapes) {
  const Model<float> model(small_config(6), 1);
  const auto out = model.forward(random_images(3, 32, 1));
  EXPECT_EQ(out.conv_logits.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.trans_logits.shape(), (Shape{3, 2}));
  EXPECT_EQ(out.grid_h, 4u);
  EXPECT_EQ(out.grid_w, 4u);
  EXPECT_EQ(out.final_conv.shape(), (Shape{3, 8, 8, 8}));
  EXPECT_EQ(out.final_tokens.shape(), (Shape{3, 17, 16}));
  EXPECT_EQ(out.queries.size(), 6u);
  EXPECT_EQ(model.conv_head_weight().shape(), (Shape{2, 8}));
  EXPECT_EQ(model.trans_head_weight().shape(), (Shape{2, 16}));
}

TEST(Model, DepthZeroHasNoEdgeFusion) {
  const Model<float> model(small_config(0), 1);
  const auto out = model.forward(random_images(1, 32, 1));
  for (const auto& t : out.traces) EXPECT_FALSE(t.cabl);
}

TEST(Model, DoubleCopyMatchesFloat) {
  const Model<float> f(small_config(6), 9);
  const Model<double> d(f);
  const auto pf = f.parameters();
  const auto pd = d.parameters();
  ASSERT_EQ(pf.size(), pd.size());
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const auto a = pf[i].data();
    const auto b = pd[i].data();
    for (std::size_t j = 0; j < a.size(); ++j) ASSERT_EQ(double(a[j]), b[j]);
  }
  const auto of = f.forward(random_images(1, 32, 2));
  const auto od = d.forward(random_images(1, 32, 2).cast<double>());
  const auto lf = of.conv_logits.data();
  const auto ld = od.conv_logits.data();
  EXPECT_NEAR(lf[0], ld[0], 1e-3);
  EXPECT_NEAR(lf[1], ld[1], 1e-3);
}

TEST(Model, ScoresAverageBranchSoftmax) {
  const auto conv = Tensor::from({1, 2}, {0.0f, 1.0f});
  const auto trans = Tensor::from({1, 2}, {2.0f, 0.0f});
  const double p1 = 1.0 / (1.0 + std::exp(-1.0)), p2 = 1.0 / (1.0 + std::exp(2.0));
  EXPECT_NEAR(image_scores(conv, trans)[0], (p1 + p2) / 2, 1e-6);
}

TEST(Model, LoadParameterChecksShape) {
  Model<float> model(small_config(6), 1);
  const auto params = model.named_parameters();
  std::vector<float> values(params[0].tensor.size(), 0.5f);
  model.load_parameter(params[0].name, values);
  EXPECT_FLOAT_EQ(model.named_parameters()[0].tensor.data()[0], 0.5f);
  values.push_back(1.0f);
  EXPECT_THROW(model.load_parameter(params[0].name, values), std::invalid_argument);
  EXPECT_THROW(model.load_parameter("no.such.param", values), std::invalid_argument);
}

TEST(Model, FrozenCopyNeedsNoGradients) {
  const Model<float> model(small_config(6), 1);
  for (const auto& p : model.frozen().parameters()) EXPECT_FALSE(p.requires_grad());
}

TEST(ModelConfig, ValidationAndJson) {
  EXPECT_NO_THROW(small_config(6).validate());
  auto bad = small_config(7);
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = small_config(6);
  bad.token_dim = 15;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = small_config(6);
  bad.input_size = 36;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  auto cfg = small_config(4);
  cfg.edge_operator = EdgeOperator::prewitt;
  cfg.cabl_structure = CablStructure::I;
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
}

}  // namespace
}  // namespace floc
