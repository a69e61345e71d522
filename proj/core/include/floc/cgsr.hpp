// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "floc/cam.hpp"
#include "floc/image.hpp"

namespace floc {

enum class PromptMode { null, point, box, box_point };

std::string_view to_string(PromptMode m);
/// Accepts "null", "point", "box", "box+point".
PromptMode parse_prompt_mode(std::string_view name);
/// Table order: null, point, box, box+point.
std::vector<PromptMode> all_prompt_modes();

enum class RefinerKind { none, builtin_region_grow, remote };

std::string_view to_string(RefinerKind k);
/// Accepts "none", "region", "remote".
RefinerKind parse_refiner_kind(std::string_view name);

struct PromptPoint {
  int x = 0;
  int y = 0;
  bool positive = true;
  bool operator==(const PromptPoint&) const = default;
};

struct PromptSet {
  std::optional<BBox> box;
  std::vector<PromptPoint> points;
  bool empty_coarse = false;  // box requested but the coarse mask was empty

  bool empty() const { return !box && points.empty(); }
  const PromptPoint* positive() const;
  const PromptPoint* negative() const;
};

/// Resizes `cam` to width x height (bilinear) and keeps pixels whose
/// normalized value is >= rho. Requires 0 < rho < 1.
BinaryMask binarize_coarse_mask(const CamMap& cam, double rho, std::size_t width, std::size_t height);

/// Prompts from a CAM at mask resolution (resized if needed):
///   box       largest 8-connected component of `coarse`
///   positive  raw argmax (inside the box when one is used)
///   negative  raw argmin, moved to the lowest pixel outside the box if needed
PromptSet generate_prompts(const CamMap& cam, const BinaryMask& coarse, PromptMode mode);

struct RegionGrowOptions {
  double tolerance = 36.0;  // RGB distance on the smoothed image
  int smoothing = 5;        // Gaussian kernel applied before comparing colours
};

struct RemoteOptions {
  std::string url;  // e.g. http://127.0.0.1:8080
  double timeout_s = 30.0;
};

struct RefinerConfig {
  RefinerKind kind = RefinerKind::builtin_region_grow;
  RegionGrowOptions grow;
  RemoteOptions remote;
};

struct RefineResult {
  BinaryMask mask;
  bool fallback = false;  // coarse mask returned because refinement was not possible
  std::string error;      // non-empty when a remote call failed
};

/// Colour-similar 4-connected region around the positive point (or the
/// coarse pixel nearest the box centre), clipped to the box and excluding
/// the negative point's own colour basin.
RefineResult region_grow_refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                                const RegionGrowOptions& options);

/// Wire protocol: POST {url}/refine with
///   {"image_png_b64", "box": [x0,y0,x1,y1] | null, "points": [{"x","y","label"}]}
/// answered by {"mask_png_b64"} (0/255 grey PNG of the image size).
std::string encode_refine_request(const Image& image, const PromptSet& prompts);
BinaryMask decode_refine_response(std::string_view body, std::size_t width, std::size_t height);
RefineResult remote_refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                           const RemoteOptions& options);
/// GET {url}/health answered by 200 "ok".
bool remote_health(const RemoteOptions& options);

/// Dispatch on the refiner kind. An empty prompt set returns the coarse mask.
RefineResult refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                    const RefinerConfig& refiner);

struct PipelineOptions {
  std::vector<std::size_t> scales{64, 96, 128};
  CamFusion fusion = CamFusion::class_attention;
  double rho = 0.4;
  PromptMode mode = PromptMode::box_point;
  RefinerConfig refiner;
  /// Images scoring below this are declared authentic and get an empty mask.
  double detection_threshold = 0.5;
};

struct Localization {
  double score = 0.0;
  CamMap cam;  // image resolution
  BinaryMask coarse;
  PromptSet prompts;
  RefineResult refined;
  BinaryMask prediction;  // refined mask, or empty when detected authentic
};

/// CAM -> coarse mask -> prompts -> refinement for one image.
Localization localize(const Model<float>& model, const Image& image, const PipelineOptions& options);

/// Prompt and refinement stages on a precomputed CAM.
Localization localize_from_cam(const CamResult& cam, const Image& image, const PipelineOptions& options);

/// Ground-truth box plus the GT pixel nearest the box centre.
PromptSet oracle_prompts(const BinaryMask& gt);

}  // namespace floc
