// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <filesystem>

#include "floc/model.hpp"

namespace floc {

/// Binary layout, little-endian:
///   "FLOC1", u32 config_len, config JSON, u32 param_count, then per
///   parameter: u32 name_len, name, u32 rank, rank x u32 dims, u32 n,
///   n x f32.
void save_checkpoint(const std::filesystem::path& path, const Model<float>& model);

/// Rebuilds the model from the stored config and overwrites every
/// parameter. Throws IoError on a malformed or truncated file and when the
/// stored parameters do not match the config.
Model<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace floc
