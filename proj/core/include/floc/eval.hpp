// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "floc/cgsr.hpp"
#include "floc/data.hpp"
#include "floc/model.hpp"

namespace floc {

/// 2TP / (2TP + FP + FN); 1 when both masks are empty, 0 when only one is.
double pixel_f1(const BinaryMask& pred, const BinaryMask& gt);

/// Rank-statistic ROC AUC with mid-ranks for ties. Needs both classes.
double image_auc(std::span<const double> scores, std::span<const int> labels);

enum class Degradation { jpeg, blur };

std::string_view to_string(Degradation d);
Degradation parse_degradation(std::string_view name);
/// jpeg: 100,90,...,50 (quality); blur: 0,5,...,29 (Gaussian kernel size).
std::vector<int> default_levels(Degradation d);
Image degrade(const Image& image, Degradation d, int level);

struct CurvePoint {
  int level = 0;
  double p_f1 = 0.0;
  bool operator==(const CurvePoint&) const = default;
};

struct Curve {
  std::string name;  // "jpeg" or "blur"
  std::vector<CurvePoint> points;
  bool operator==(const Curve&) const = default;
};

struct DatasetScores {
  std::string name;
  std::optional<double> i_auc;  // absent when only one class is present
  double p_f1 = 0.0;            // mean over all images with a ground-truth mask
  double p_f1_manipulated = 0.0;
  double accuracy = 0.0;
  std::size_t images = 0;
  std::size_t manipulated = 0;
  bool operator==(const DatasetScores&) const = default;
};

struct AblationRow {
  std::string variant;
  std::optional<double> i_auc;
  double p_f1 = 0.0;
  double p_f1_manipulated = 0.0;
  bool operator==(const AblationRow&) const = default;
};

struct AblationTable {
  std::string name;
  std::vector<AblationRow> rows;
  bool operator==(const AblationTable&) const = default;
};

struct EvalReport {
  std::vector<DatasetScores> datasets;
  std::vector<Curve> curves;
  std::vector<AblationTable> ablations;

  /// Throws if any score lies outside [0,1].
  void validate() const;
  bool operator==(const EvalReport&) const = default;
};

struct ImageResult {
  std::string name;
  int label = 0;
  Localization loc;
  std::optional<double> p_f1;  // when a ground-truth mask is available
};

struct DatasetEval {
  DatasetScores scores;
  std::vector<ImageResult> images;
};

/// Full pipeline on every sample. `keep_images` retains per-image results.
DatasetEval evaluate_dataset(const Model<float>& model, std::span<const ManipSample> data,
                             const PipelineOptions& options, std::string name, bool keep_images = false);

/// Mean P-F1 over manipulated samples after degrading them at each level;
/// level order preserved.
std::vector<CurvePoint> robustness_sweep(const Model<float>& model, std::span<const ManipSample> data,
                                         Degradation degradation, std::span<const int> levels,
                                         const PipelineOptions& options);

/// One row per prompt mode (null, point, box, box+point); CAMs are computed
/// once per image. Requires a refiner other than none.
AblationTable ablate_prompt_modes(const Model<float>& model, std::span<const ManipSample> data,
                                  const PipelineOptions& options);

/// Stable key order, shortest round-trip doubles.
std::string report_to_json(const EvalReport& report);
EvalReport report_from_json(std::string_view text);
/// Curves when present ("level,p_f1", or "curve,level,p_f1" for several),
/// else ablation rows ("table,variant,i_auc,p_f1"), else dataset rows
/// ("name,i_auc,p_f1").
std::string report_to_csv(const EvalReport& report);
/// Self-contained line plot of the curves.
std::string report_to_svg(const EvalReport& report);

enum class ReportFormat { json, csv, svg };
void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path);

}  // namespace floc
