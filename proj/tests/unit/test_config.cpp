// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "floc/config.hpp"
#include "floc/png_io.hpp"

namespace floc {
namespace {

TEST(Config, EmptyObjectGivesDefaults) {
  const auto c = config_from_json("{}");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.lr, 5e-5);
  EXPECT_EQ(c.rho, 0.4);
  EXPECT_EQ(c.scales, (std::vector<std::size_t>{64, 96, 128}));
  EXPECT_EQ(c.prompt_mode, PromptMode::box_point);
  EXPECT_EQ(c.refiner, RefinerKind::builtin_region_grow);
}

TEST(Config, OverlaysKeys) {
  const auto c = config_from_json(
      R"({"seed": 7, "lr": 0.0005, "scales": [32, 64], "cabl_depth": 3, "edge_operator": "prewitt",
          "prompt_mode": "box", "refiner": "none", "cam_fusion": "matrix"})");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.lr, 5e-4);
  EXPECT_EQ(c.scales, (std::vector<std::size_t>{32, 64}));
  EXPECT_EQ(c.model.cabl_depth, 3u);
  EXPECT_EQ(c.model.edge_operator, EdgeOperator::prewitt);
  EXPECT_EQ(c.prompt_mode, PromptMode::box);
  EXPECT_EQ(c.refiner, RefinerKind::none);
  EXPECT_EQ(c.cam_fusion, CamFusion::matrix);
  EXPECT_EQ(c.fit_options().lr, 5e-4);
  EXPECT_EQ(c.pipeline_options().mode, PromptMode::box);
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(config_from_json(R"({"lr": -1})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"rho": 1.0})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"scales": [96, 64]})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"scales": []})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"refiner": "remote"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"learning_rate": 0.1})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"epochs": "ten"})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"cabl_depth": 9})"), ConfigError);
  EXPECT_THROW(config_from_json("[1, 2]"), ConfigError);
  EXPECT_THROW(config_from_json("{not json"), ConfigError);
}

TEST(Config, JsonRoundTrip) {
  auto c = config_from_json(R"({"seed": 3, "refiner": "remote", "remote_url": "http://127.0.0.1:9000"})");
  EXPECT_EQ(config_from_json(c.to_json()), c);
  EXPECT_EQ(config_from_json(c.to_json()).to_json(), c.to_json());
}

TEST(Config, FileParsing) {
  const auto path = std::filesystem::temp_directory_path() / "floc_test_config.json";
  {
    std::ofstream os(path);
    os << R"({"epochs": 2})";
  }
  EXPECT_EQ(config_parse(path).epochs, 2u);
  std::filesystem::remove(path);
  EXPECT_THROW(config_parse(path), IoError);
}

TEST(Config, ScaleLists) {
  EXPECT_EQ(parse_scales("64,96,128"), (std::vector<std::size_t>{64, 96, 128}));
  EXPECT_EQ(parse_scales("32"), (std::vector<std::size_t>{32}));
  EXPECT_THROW(parse_scales(""), ConfigError);
  EXPECT_THROW(parse_scales("64,,96"), ConfigError);
  EXPECT_THROW(parse_scales("64,x"), ConfigError);
}

}  // namespace
}  // namespace floc
