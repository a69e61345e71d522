// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "floc/cam.hpp"
#include "floc/data.hpp"
#include "floc/model.hpp"
#include "floc/png_io.hpp"

namespace floc {
namespace {

std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<float> nd(0.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

std::size_t argmax(const std::vector<float>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

TEST(ConvCam, OneHotWeightSelectsChannel) {
  std::mt19937_64 rng(1);
  const std::size_t C = 4, h = 3, w = 5;
  const auto feats = random_floats(C * h * w, rng);
  for (std::size_t j = 0; j < C; ++j) {
    std::vector<float> weights(2 * C, 0.0f);
    weights[C + j] = 1.0f;
    const auto cam = conv_cam(feats, C, h, w, weights, CamClass::manipulated);
    for (std::size_t i = 0; i < h * w; ++i) EXPECT_EQ(cam.raw[i], feats[j * h * w + i]);
  }
}

TEST(ConvCam, ZeroWeightsGiveZeroMaps) {
  std::mt19937_64 rng(1);
  const auto feats = random_floats(2 * 3 * 3, rng);
  const auto cam = conv_cam(feats, 2, 3, 3, std::vector<float>(4, 0.0f), CamClass::authentic);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_EQ(cam.raw[i], 0.0f);
    EXPECT_EQ(cam.normalized[i], 0.0f);
  }
}

TEST(ConvCam, MatchesPerPixelDotProduct) {
  std::mt19937_64 rng(2);
  const std::size_t C = 6, h = 4, w = 4;
  const auto feats = random_floats(C * h * w, rng), weights = random_floats(2 * C, rng);
  for (auto cls : {CamClass::authentic, CamClass::manipulated}) {
    const auto cam = conv_cam(feats, C, h, w, weights, cls);
    const std::size_t row = cls == CamClass::manipulated ? 1 : 0;
    for (std::size_t p = 0; p < h * w; ++p) {
      double acc = 0;
      for (std::size_t c = 0; c < C; ++c) acc += double(weights[row * C + c]) * feats[c * h * w + p];
      EXPECT_NEAR(cam.raw[p], acc, 1e-5);
      EXPECT_GE(cam.normalized[p], 0.0f);
      EXPECT_LE(cam.normalized[p], 1.0f);
    }
  }
  EXPECT_THROW(conv_cam(feats, C, h, w, std::vector<float>(2 * C + 1), CamClass::manipulated), std::invalid_argument);
}

TEST(ConvCam, ArgmaxInvariantUnderPositiveScaling) {
  std::mt19937_64 rng(3);
  const auto feats = random_floats(5 * 6 * 6, rng), weights = random_floats(10, rng);
  auto scaled = weights;
  for (auto& x : scaled) x *= 3.7f;
  EXPECT_EQ(argmax(conv_cam(feats, 5, 6, 6, weights, CamClass::manipulated).raw),
            argmax(conv_cam(feats, 5, 6, 6, scaled, CamClass::manipulated).raw));
}

TEST(TransCam, OneHotAndBruteForce) {
  std::mt19937_64 rng(4);
  const std::size_t P = 9, D = 5;
  const auto tokens = random_floats(P * D, rng);
  std::vector<float> onehot(2 * D, 0.0f);
  onehot[D + 2] = 1.0f;
  const auto cam = trans_cam(tokens, D, onehot, CamClass::manipulated);
  ASSERT_EQ(cam.height, 3u);
  for (std::size_t p = 0; p < P; ++p) EXPECT_EQ(cam.raw[p], tokens[p * D + 2]);

  const auto weights = random_floats(2 * D, rng);
  const auto cam2 = trans_cam(tokens, D, weights, CamClass::authentic, 3, 3);
  for (std::size_t p = 0; p < P; ++p) {
    double acc = 0;
    for (std::size_t d = 0; d < D; ++d) acc += double(tokens[p * D + d]) * weights[d];
    EXPECT_NEAR(cam2.raw[p], acc, 1e-5);
  }
  EXPECT_THROW(trans_cam(random_floats(8 * D, rng), D, weights, CamClass::manipulated), std::invalid_argument);
}

TEST(TransCam, EqualTokensNormalizeToZero) {
  std::vector<float> tokens;
  for (int p = 0; p < 4; ++p) tokens.insert(tokens.end(), {0.5f, -1.0f, 2.0f});
  const auto cam = trans_cam(tokens, 3, std::vector<float>{1, 2, 3, 4, 5, 6}, CamClass::manipulated);
  for (float v : cam.normalized) EXPECT_EQ(v, 0.0f);
}

// q, k laid out [S,T,D/S] for one layer.
struct Layer {
  std::vector<float> q, k;
};

Layer random_layer(std::size_t S, std::size_t T, std::size_t dh, std::mt19937_64& rng) {
  return {random_floats(S * T * dh, rng), random_floats(S * T * dh, rng)};
}

TEST(Attention, IdenticalTokensGiveUniformMatrix) {
  const std::size_t S = 2, T = 5, dh = 3;
  std::vector<float> q(S * T * dh, 0.3f);
  const std::vector<std::vector<float>> qs{q}, ks{q};
  const auto a = attention_average(qs, ks, T, S * dh, S);
  ASSERT_EQ(a.size, T - 1);
  for (double v : a.values) EXPECT_NEAR(v, 1.0 / (T - 1), 1e-12);
}

TEST(Attention, RowsAreDistributionsAndAveragingIsIdempotent) {
  std::mt19937_64 rng(5);
  const std::size_t S = 2, T = 7, dh = 4;
  const auto l = random_layer(S, T, dh, rng);
  const std::vector<std::vector<float>> q1{l.q}, k1{l.k}, q2{l.q, l.q}, k2{l.k, l.k};
  const auto a = attention_average(q1, k1, T, S * dh, S);
  const auto b = attention_average(q2, k2, T, S * dh, S);
  for (std::size_t r = 0; r < a.size; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < a.size; ++c) {
      EXPECT_GE(a.at(r, c), 0.0);
      s += a.at(r, c);
      EXPECT_NEAR(a.at(r, c), b.at(r, c), 1e-12);
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
  const std::vector<std::vector<float>> k_short{l.k, l.k};
  EXPECT_THROW(attention_average(q1, k_short, T, S * dh, S), std::invalid_argument);
}

TEST(Attention, MatchesDirectSoftmaxOracle) {
  std::mt19937_64 rng(6);
  const std::size_t S = 2, T = 4, dh = 2, L = 2;
  std::vector<std::vector<float>> qs, ks;
  for (std::size_t l = 0; l < L; ++l) {
    const auto layer = random_layer(S, T, dh, rng);
    qs.push_back(layer.q);
    ks.push_back(layer.k);
  }
  // Full T x T average, then crop the class token and renormalise rows.
  std::vector<double> full(T * T, 0.0);
  for (std::size_t l = 0; l < L; ++l) {
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> row(T);
        double mx = -1e300, z = 0;
        for (std::size_t j = 0; j < T; ++j) {
          double dot = 0;
          for (std::size_t d = 0; d < dh; ++d) dot += double(qs[l][(s * T + i) * dh + d]) * ks[l][(s * T + j) * dh + d];
          row[j] = dot / std::sqrt(double(dh));
          mx = std::max(mx, row[j]);
        }
        for (auto& v : row) z += (v = std::exp(v - mx));
        for (std::size_t j = 0; j < T; ++j) full[i * T + j] += row[j] / z / double(L * S);
      }
    }
  }
  const auto a = attention_average(qs, ks, T, S * dh, S);
  for (std::size_t i = 1; i < T; ++i) {
    double z = 0;
    for (std::size_t j = 1; j < T; ++j) z += full[i * T + j];
    for (std::size_t j = 1; j < T; ++j) EXPECT_NEAR(a.at(i - 1, j - 1), full[i * T + j] / z, 1e-6);
  }
  double z = 0;
  for (std::size_t j = 1; j < T; ++j) z += full[j];
  const auto c = class_attention(qs, ks, T, S * dh, S);
  ASSERT_EQ(c.size(), T - 1);
  for (std::size_t j = 1; j < T; ++j) EXPECT_NEAR(c[j - 1], full[j] / z, 1e-6);
}

CamMap grid_map(std::size_t h, std::size_t w, std::vector<float> raw) {
  return CamMap::from_raw(CamClass::manipulated, h, w, std::move(raw));
}

TEST(FuseCam, UniformAttentionKeepsConstantConv) {
  AttentionMatrix a{4, std::vector<double>(16, 0.25)};
  const auto fused = fuse_cam(grid_map(2, 2, {0, 0, 0, 0}), grid_map(2, 2, {3, 3, 3, 3}), a);
  for (float v : fused.raw) EXPECT_FLOAT_EQ(v, 3.0f);
}

TEST(FuseCam, ZeroTransformerMapYieldsRefinedNormalization) {
  std::mt19937_64 rng(7);
  AttentionMatrix a{4, {}};
  std::uniform_real_distribution<double> u(0.1, 1.0);
  for (std::size_t r = 0; r < 4; ++r) {
    std::vector<double> row(4);
    double s = 0;
    for (auto& v : row) s += (v = u(rng));
    for (auto v : row) a.values.push_back(v / s);
  }
  const auto conv = grid_map(2, 2, {1, -2, 0.5f, 4});
  const auto fused = fuse_cam(grid_map(2, 2, {0, 0, 0, 0}), conv, a);
  std::vector<float> refined(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) refined[i] += static_cast<float>(a.at(i, j) * conv.raw[j]);
  const auto expect = minmax_normalize(refined);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(fused.raw[i], refined[i], 1e-6);
    EXPECT_NEAR(fused.normalized[i], expect[i], 1e-6);
  }
}

TEST(FuseCam, DominatesBothInputs) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t P = 16;
    AttentionMatrix a{P, {}};
    for (std::size_t r = 0; r < P; ++r) {
      auto row = random_floats(P, rng);
      double s = 0;
      for (auto& v : row) s += (v = std::exp(v));
      for (auto v : row) a.values.push_back(v / s);
    }
    const auto trans = grid_map(4, 4, random_floats(P, rng));
    const auto conv = grid_map(8, 8, random_floats(64, rng));  // pooled to the 4x4 grid
    const auto fused = fuse_cam(trans, conv, a);
    ASSERT_EQ(fused.width, 4u);
    for (std::size_t i = 0; i < P; ++i) EXPECT_GE(fused.normalized[i], trans.normalized[i]);
    auto refined_only = fuse_cam(grid_map(4, 4, std::vector<float>(P, 0.0f)), conv, a);
    for (std::size_t i = 0; i < P; ++i) EXPECT_GE(fused.normalized[i], refined_only.normalized[i]);
  }
  EXPECT_THROW(fuse_cam(grid_map(3, 3, std::vector<float>(9)), grid_map(3, 3, std::vector<float>(9)),
                        AttentionMatrix{4, std::vector<double>(16, 0.25)}),
               ShapeError);
  EXPECT_THROW(fuse_cam(grid_map(2, 2, std::vector<float>(4)), grid_map(3, 3, std::vector<float>(9)),
                        AttentionMatrix{4, std::vector<double>(16, 0.25)}),
               ShapeError);
}

TEST(FuseCam, ClassAttentionForm) {
  const auto conv = grid_map(2, 2, {1, 2, 3, 4});
  const std::vector<double> uniform(4, 0.25);
  const auto same = fuse_cam_class_attention(conv, uniform, 2, 2);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(same.raw[i], conv.raw[i]);
  const std::vector<double> peaked{0.7, 0.1, 0.1, 0.1};
  const auto f = fuse_cam_class_attention(conv, peaked, 2, 2);
  EXPECT_FLOAT_EQ(f.raw[0], 4 * 0.7f * 1.0f);
  EXPECT_FLOAT_EQ(f.normalized[0], 1.0f);  // attention peak survives the max
  for (std::size_t i = 0; i < 4; ++i) EXPECT_GE(f.normalized[i], CamMap::from_raw(conv.cls, 2, 2, f.raw).normalized[i]);
  EXPECT_THROW(fuse_cam_class_attention(conv, std::vector<double>(3, 0.3), 2, 2), ShapeError);
  EXPECT_EQ(parse_cam_fusion("matrix"), CamFusion::matrix);
  EXPECT_THROW(parse_cam_fusion("sum"), std::invalid_argument);
}

TEST(CamMap, DegenerateNormalization) {
  const auto c = grid_map(2, 2, {5, 5, 5, 5});
  for (float v : c.normalized) EXPECT_EQ(v, 0.0f);
  const auto d = grid_map(1, 3, {-1, 0, 1});
  EXPECT_EQ(d.normalized, (std::vector<float>{0.0f, 0.5f, 1.0f}));
  EXPECT_FLOAT_EQ(d.raw_min(), -1.0f);
  EXPECT_FLOAT_EQ(d.raw_max(), 1.0f);
}

TEST(AverageCams, IdenticalMapsAreFixed) {
  const auto m = grid_map(2, 3, {0, 1, 2, 3, 4, 5});
  const std::vector<CamMap> maps{m, m, m};
  const auto avg = average_cams(maps);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_FLOAT_EQ(avg.raw[i], m.raw[i]);
    EXPECT_FLOAT_EQ(avg.normalized[i], m.normalized[i]);
  }
  EXPECT_THROW(average_cams(std::vector<CamMap>{}), std::invalid_argument);
}

class MultiScale : public ::testing::Test {
 protected:
  static ModelConfig config() {
    ModelConfig c;
    c.input_size = 32;
    c.channels = 8;
    c.token_dim = 16;
    c.heads = 2;
    c.norm_groups = 2;
    return c;
  }
  Model<float> model{Model<float>(config(), 3).frozen()};
  Image image = [] {
    std::mt19937_64 rng(9);
    return synth_forgery(40, rng, PasteMode::donor, 0).forged;
  }();
};

TEST_F(MultiScale, SingleScaleEqualsResizedFusedCam) {
  const std::vector<std::size_t> scales{32};
  const auto res = multi_scale_cam(model, image, scales);
  const auto out = model.forward(image_to_tensor(image, 32));
  const auto expect = resize_cam(fused_cam_from_outputs(model, out, 0), image.width, image.height);
  ASSERT_EQ(res.cam.width, 40u);
  ASSERT_EQ(res.cam.height, 40u);
  for (std::size_t i = 0; i < expect.raw.size(); ++i) {
    EXPECT_FLOAT_EQ(res.cam.raw[i], expect.raw[i]);
    EXPECT_FLOAT_EQ(res.cam.normalized[i], expect.normalized[i]);
  }
  EXPECT_DOUBLE_EQ(res.score, image_scores(out.conv_logits, out.trans_logits)[0]);
}

TEST_F(MultiScale, ToyScalesAndBothFusions) {
  const std::vector<std::size_t> scales{32, 48, 64};
  for (auto fusion : {CamFusion::class_attention, CamFusion::matrix}) {
    const auto res = multi_scale_cam(model, image, scales, CamClass::manipulated, fusion);
    EXPECT_EQ(res.scales, scales);
    for (float v : res.cam.normalized) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  EXPECT_THROW(multi_scale_cam(model, image, std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Camf, RoundTripAndSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / "floc_test_camf";
  std::filesystem::create_directories(dir);
  const auto path = dir / "a.camf";
  const auto m = grid_map(3, 2, {0.5f, -1.25f, 3.0f, 7.0f, 0.0f, 1e-8f});
  write_camf(path, m, std::vector<std::size_t>{64, 96});
  const auto back = read_camf(path);
  EXPECT_EQ(back.height, 3u);
  EXPECT_EQ(back.width, 2u);
  EXPECT_EQ(back.raw, m.raw);
  EXPECT_EQ(back.normalized, m.normalized);
  EXPECT_TRUE(std::filesystem::exists(dir / "a.camf.json"));
  std::filesystem::resize_file(path, 10);
  EXPECT_THROW(read_camf(path), IoError);
  EXPECT_THROW(read_camf(dir / "missing.camf"), IoError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace floc
