// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "floc/cgsr.hpp"
#include "floc/model.hpp"
#include "floc/train.hpp"

namespace floc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything a CLI run needs. Serialised as one flat JSON object; every key
/// is optional and unknown keys are rejected:
///   seed, epochs, batch, lr, weight_decay, scales, cam_fusion, input_size, channels,
///   token_dim, heads, num_blocks, cabl_depth, cabl_structure,
///   edge_operator, refiner, remote_url, remote_timeout_s,
///   region_tolerance, prompt_mode, rho, detection_threshold
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  std::size_t batch = 8;
  double lr = 5e-5;
  double weight_decay = 5e-4;
  std::vector<std::size_t> scales{64, 96, 128};
  CamFusion cam_fusion = CamFusion::class_attention;
  ModelConfig model;
  RefinerKind refiner = RefinerKind::builtin_region_grow;
  std::string remote_url;
  double remote_timeout_s = 30.0;
  double region_tolerance = 36.0;
  PromptMode prompt_mode = PromptMode::box_point;
  double rho = 0.4;
  double detection_threshold = 0.5;

  /// Throws ConfigError: non-positive numbers, unsorted or duplicate
  /// scales, rho or threshold outside (0,1), remote without a URL.
  void validate() const;
  /// Canonical form: sorted keys, every field present.
  std::string to_json() const;

  FitOptions fit_options() const;
  PipelineOptions pipeline_options() const;

  bool operator==(const RunConfig&) const = default;
};

/// Defaults overlaid with the keys present in `text`, then validated.
RunConfig config_from_json(std::string_view text);
/// Same, reading a file. Throws IoError if it cannot be read.
RunConfig config_parse(const std::filesystem::path& path);

/// "64,96,128" -> {64,96,128}. Throws ConfigError on empty or bad items.
std::vector<std::size_t> parse_scales(std::string_view text);

}  // namespace floc
