// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "floc/image.hpp"
#include "floc/model.hpp"

namespace floc {

enum class CamClass { authentic = 0, manipulated = 1 };

/// Activation map on a grid. `normalized` is the min-max rescaling of the
/// evidence into [0,1]; a constant map normalises to all zeros.
struct CamMap {
  CamClass cls = CamClass::manipulated;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> raw;
  std::vector<float> normalized;

  static CamMap from_raw(CamClass cls, std::size_t height, std::size_t width, std::vector<float> raw);
  float raw_min() const;
  float raw_max() const;
};

std::vector<float> minmax_normalize(std::span<const float> values);

/// raw[y,x] = sum_c w[cls,c] * feat[c,y,x]; features [C,h,w], weights [2,C].
CamMap conv_cam(std::span<const float> features, std::size_t channels, std::size_t height, std::size_t width,
                std::span<const float> head_weights, CamClass cls);

/// raw[p] = <token_p, w[cls]> over patch tokens [P,D] (class token
/// excluded), laid out on a gh x gw grid. The grid-less overload requires P
/// to be a perfect square.
CamMap trans_cam(std::span<const float> patch_tokens, std::size_t dim, std::span<const float> head_weights,
                 CamClass cls, std::size_t grid_h, std::size_t grid_w);
CamMap trans_cam(std::span<const float> patch_tokens, std::size_t dim, std::span<const float> head_weights,
                 CamClass cls);

/// Row-stochastic patch-to-patch matrix.
struct AttentionMatrix {
  std::size_t size = 0;  // number of patch tokens
  std::vector<double> values;  // row-major size x size
  double at(std::size_t r, std::size_t c) const { return values[r * size + c]; }
};

/// Per layer: q and k as [S, T, D/S] (one image). Averages
/// softmax(q k^T / sqrt(D/S)) over layers and heads, drops the class token
/// (index 0) row and column, and renormalises rows to sum to one.
AttentionMatrix attention_average(std::span<const std::vector<float>> queries,
                                  std::span<const std::vector<float>> keys, std::size_t tokens, std::size_t dim,
                                  std::size_t heads);

/// Layer- and head-averaged attention of the class token over the patch
/// tokens, renormalised to sum to one.
std::vector<double> class_attention(std::span<const std::vector<float>> queries,
                                    std::span<const std::vector<float>> keys, std::size_t tokens, std::size_t dim,
                                    std::size_t heads);

/// Attention-aggregated conv evidence merged with the transformer map:
///   refined = A * flatten(conv)  (conv pooled to the patch grid when finer)
///   normalized = max(norm(trans), norm(refined)), raw = refined.
CamMap fuse_cam(const CamMap& cam_trans, const CamMap& cam_conv, const AttentionMatrix& attention);

/// Element-wise form with the class-token attention a over the grid:
///   refined = P * a (.) conv  (P cells; uniform a leaves conv unchanged)
///   normalized = max(norm(a), norm(refined)), raw = refined.
CamMap fuse_cam_class_attention(const CamMap& cam_conv, std::span<const double> cls_attention, std::size_t grid_h,
                                std::size_t grid_w);

/// How fused_cam_from_outputs combines the branches.
///   class_attention  fuse_cam_class_attention
///   matrix           fuse_cam with trans_cam and attention_average
enum class CamFusion { class_attention, matrix };

std::string_view to_string(CamFusion f);
CamFusion parse_cam_fusion(std::string_view name);

/// Bilinear resize of both maps; `normalized` is re-stretched to [0,1].
CamMap resize_cam(const CamMap& cam, std::size_t width, std::size_t height);

/// Mean of equally sized maps: raw and normalized averaged separately, the
/// averaged normalized map re-stretched to [0,1].
CamMap average_cams(std::span<const CamMap> cams);

struct CamResult {
  CamMap cam;       // at image resolution
  double score = 0;  // manipulation score at the scale closest to input_size
  std::vector<std::size_t> scales;
};

/// Fused CAM of one forward pass (batch index `n`).
CamMap fused_cam_from_outputs(const Model<float>& model, const BranchOutputs<float>& out, std::size_t n,
                              CamClass cls = CamClass::manipulated, CamFusion fusion = CamFusion::class_attention);

/// Resizes the image to each square scale, fuses the CAMs, resizes them to
/// the image size and averages. `model` should be frozen for speed.
CamResult multi_scale_cam(const Model<float>& model, const Image& image, std::span<const std::size_t> scales,
                          CamClass cls = CamClass::manipulated, CamFusion fusion = CamFusion::class_attention);

/// "CAMF", u32 h, u32 w, h*w little-endian f32 raw values. The JSON sidecar
/// at `<path>.json` carries class, scales and the raw min/max.
void write_camf(const std::filesystem::path& path, const CamMap& cam, std::span<const std::size_t> scales);
CamMap read_camf(const std::filesystem::path& path);

}  // namespace floc
