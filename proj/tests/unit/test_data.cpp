// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <gtest/gtest.h>

#include <filesystem>

#include "floc/data.hpp"
#include "floc/imgproc.hpp"
#include "floc/png_io.hpp"
#include "floc/train.hpp"

namespace floc {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  fs::path root = fs::temp_directory_path() /
                  ("floc_test_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
  void SetUp() override { fs::remove_all(root); }
  void TearDown() override { fs::remove_all(root); }
};

TEST(Synth, SplicedPixelsComeFromTheDonor) {
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    const auto f = synth_forgery(48, rng, PasteMode::donor, 0);
    ASSERT_FALSE(f.mask.none());
    for (std::size_t y = 0; y < 48; ++y)
      for (std::size_t x = 0; x < 48; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const auto& src = f.mask.at(x, y) ? f.donor : f.host;
          ASSERT_EQ(f.forged.at(x, y, c), src.at(x, y, c));
        }
  }
}

TEST(Synth, MaskCoverageAndBounds) {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const auto m = random_polygon_mask(64, rng);
    const double frac = double(m.count()) / (64.0 * 64.0);
    EXPECT_GT(frac, 0.02);
    EXPECT_LT(frac, 0.30);
    const auto box = largest_component_bbox(m);
    ASSERT_TRUE(box);
    EXPECT_GE(box->x0, 0);
    EXPECT_GE(box->y0, 0);
    EXPECT_LT(box->x1, 64);
    EXPECT_LT(box->y1, 64);
  }
}

TEST(Synth, UniformPasteIsColourHomogeneous) {
  Rng rng(7);
  const auto f = synth_forgery(64, rng, PasteMode::uniform, 0);
  const auto smooth = gaussian_blur(f.forged, 5);
  // Away from the boundary the smoothed paste is nearly one colour.
  double lo = 255, hi = 0;
  for (std::size_t y = 2; y + 2 < 64; ++y)
    for (std::size_t x = 2; x + 2 < 64; ++x) {
      bool interior = true;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) interior &= f.mask.at(x + dx, y + dy);
      if (!interior) continue;
      lo = std::min<double>(lo, smooth.at(x, y, 0));
      hi = std::max<double>(hi, smooth.at(x, y, 0));
    }
  ASSERT_LE(lo, hi);
  EXPECT_LT(hi - lo, 60);
}

TEST_F(TempDir, GenerateAndLoadRoundTrip) {
  SynthOptions o;
  o.count = 12;
  o.size = 32;
  o.seed = 3;
  synth_forgery_generate(root, o);
  EXPECT_TRUE(fs::exists(root / "authentic"));
  const auto eval = dataset_load(root, LoadMode::eval);
  ASSERT_EQ(eval.size(), 12u);
  std::size_t manip = 0;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    const auto& s = eval[i];
    EXPECT_EQ(s.label, i < 6 ? 0 : 1);  // authentic first
    EXPECT_EQ(s.image.width, 32u);
    manip += s.label;
    if (s.label == 1) {
      ASSERT_TRUE(s.mask);
      EXPECT_EQ(s.mask->width, 32u);
      EXPECT_FALSE(s.mask->none());
    }
  }
  EXPECT_EQ(manip, 6u);
  for (const auto& s : dataset_load(root, LoadMode::train)) EXPECT_FALSE(s.mask);

  // Same seed, same bytes.
  const auto again = root / "again";
  synth_forgery_generate(again, o);
  const auto twice = dataset_load(again, LoadMode::eval);
  for (std::size_t i = 0; i < eval.size(); ++i) EXPECT_EQ(eval[i].image, twice[i].image);
}

TEST_F(TempDir, TrainingRunNeverNeedsMasks) {
  SynthOptions o;
  o.count = 8;
  o.size = 32;
  synth_forgery_generate(root, o);
  fs::remove_all(root / "masks");
  const auto data = dataset_load(root, LoadMode::train);
  ASSERT_EQ(data.size(), 8u);
  ModelConfig c;
  c.input_size = 32;
  c.channels = 8;
  c.token_dim = 16;
  c.heads = 2;
  c.norm_groups = 2;
  c.num_blocks = 2;
  c.cabl_depth = 2;
  Model<float> model(c, 1);
  FitOptions fo;
  fo.epochs = 1;
  fo.train.batch = 4;
  const auto stats = fit(model, data, fo);
  ASSERT_EQ(stats.size(), 1u);
  EXPECT_EQ(stats[0].samples, 8u);
  EXPECT_THROW(dataset_load(root, LoadMode::eval), std::exception);
}

TEST_F(TempDir, LayoutErrors) {
  fs::create_directories(root);
  EXPECT_THROW(dataset_load(root, LoadMode::train), std::exception);
  EXPECT_THROW(dataset_load(root / "absent", LoadMode::train), std::exception);
  SynthOptions odd;
  odd.count = 5;
  EXPECT_THROW(synth_forgery_generate(root / "odd", odd), std::invalid_argument);
}

TEST_F(TempDir, MaskSizeMismatchIsRejected) {
  SynthOptions o;
  o.count = 4;
  o.size = 32;
  synth_forgery_generate(root, o);
  for (const auto& e : fs::directory_iterator(root / "masks")) {
    write_mask_png(e.path(), BinaryMask::empty(16, 16));
    break;
  }
  EXPECT_THROW(dataset_load(root, LoadMode::eval), std::exception);
}

TEST(Data, StandardImageIsFixed) {
  const auto a = standard_test_image(), b = standard_test_image();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.width, 128u);
  EXPECT_EQ(a.channels, 3u);
}

TEST(Png, RoundTripColourAndMask) {
  Rng rng(2);
  const auto img = procedural_image(24, rng, 8.0);
  EXPECT_EQ(decode_png(encode_png(img)), img);
  auto m = BinaryMask::empty(7, 5);
  m.set(3, 2, true);
  EXPECT_EQ(mask_from_image(decode_png(encode_png(mask_to_image(m)))), m);
  const std::vector<std::uint8_t> junk{1, 2, 3, 4};
  EXPECT_THROW(decode_png(junk), IoError);
}

}  // namespace
}  // namespace floc
