// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "floc/imgproc.hpp"
#include "floc/png_io.hpp"
#include "json.hpp"

namespace floc {

using ordered_json = nlohmann::ordered_json;

double pixel_f1(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height || pred.bits.size() != gt.bits.size())
    throw std::invalid_argument("pixel_f1: mask dimensions differ");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < gt.bits.size(); ++i) {
    const bool p = pred.bits[i] != 0, g = gt.bits[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double image_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("image_auc: size mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (labels[i] != 0) {
      pos += 1;
      rank_sum += rank[i];
    }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("image_auc: both classes are required");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

std::string_view to_string(Degradation d) { return d == Degradation::jpeg ? "jpeg" : "blur"; }

Degradation parse_degradation(std::string_view name) {
  if (name == "jpeg") return Degradation::jpeg;
  if (name == "blur") return Degradation::blur;
  throw std::invalid_argument("unknown degradation: " + std::string(name));
}

std::vector<int> default_levels(Degradation d) {
  if (d == Degradation::jpeg) return {100, 90, 80, 70, 60, 50};
  return {0, 5, 11, 17, 23, 29};
}

Image degrade(const Image& image, Degradation d, int level) {
  if (d == Degradation::jpeg) return jpeg_like_compress(image, level);
  return level == 0 ? image : gaussian_blur(image, level);
}

namespace {

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> auc_if_defined(const std::vector<double>& scores, const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == static_cast<std::ptrdiff_t>(labels.size())) return std::nullopt;
  return image_auc(scores, labels);
}

const BinaryMask* gt_mask(const ManipSample& s) { return s.mask ? &*s.mask : nullptr; }

}  // namespace

DatasetEval evaluate_dataset(const Model<float>& model, std::span<const ManipSample> data,
                             const PipelineOptions& options, std::string name, bool keep_images) {
  if (data.empty()) throw std::invalid_argument("evaluate_dataset: no samples");
  const Model<float> frozen = model.frozen();
  DatasetEval ev;
  std::vector<double> scores, f1_all, f1_manip;
  std::vector<int> labels;
  std::size_t correct = 0;
  for (const auto& s : data) {
    Localization loc = localize(frozen, s.image, options);
    std::optional<double> f1;
    if (const BinaryMask* gt = gt_mask(s)) {
      f1 = pixel_f1(loc.prediction, *gt);
      f1_all.push_back(*f1);
      if (s.label == 1) f1_manip.push_back(*f1);
    }
    scores.push_back(loc.score);
    labels.push_back(s.label);
    correct += (loc.score >= options.detection_threshold) == (s.label == 1);
    if (keep_images) ev.images.push_back({s.name, s.label, std::move(loc), f1});
  }
  auto& sc = ev.scores;
  sc.name = std::move(name);
  sc.i_auc = auc_if_defined(scores, labels);
  sc.p_f1 = mean(f1_all);
  sc.p_f1_manipulated = mean(f1_manip);
  sc.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  sc.images = data.size();
  sc.manipulated = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return ev;
}

std::vector<CurvePoint> robustness_sweep(const Model<float>& model, std::span<const ManipSample> data,
                                         Degradation degradation, std::span<const int> levels,
                                         const PipelineOptions& options) {
  if (levels.empty()) throw std::invalid_argument("robustness_sweep: no levels");
  std::vector<const ManipSample*> manip;
  for (const auto& s : data)
    if (s.label == 1 && s.mask) manip.push_back(&s);
  if (manip.empty()) throw std::invalid_argument("robustness_sweep: no manipulated samples with masks");
  const Model<float> frozen = model.frozen();
  std::vector<CurvePoint> curve;
  for (int level : levels) {
    std::vector<double> f1;
    for (const auto* s : manip) {
      const Localization loc = localize(frozen, degrade(s->image, degradation, level), options);
      f1.push_back(pixel_f1(loc.prediction, *s->mask));
    }
    curve.push_back({level, mean(f1)});
  }
  return curve;
}

AblationTable ablate_prompt_modes(const Model<float>& model, std::span<const ManipSample> data,
                                  const PipelineOptions& options) {
  if (options.refiner.kind == RefinerKind::none)
    throw std::invalid_argument("prompt ablation needs a refiner");
  if (data.empty()) throw std::invalid_argument("ablate_prompt_modes: no samples");
  const Model<float> frozen = model.frozen();
  std::vector<CamResult> cams;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& s : data) {
    cams.push_back(multi_scale_cam(frozen, s.image, options.scales, CamClass::manipulated, options.fusion));
    scores.push_back(cams.back().score);
    labels.push_back(s.label);
  }
  const auto auc = auc_if_defined(scores, labels);
  AblationTable table{"prompt", {}};
  for (PromptMode mode : all_prompt_modes()) {
    PipelineOptions opt = options;
    opt.mode = mode;
    std::vector<double> f1_all, f1_manip;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const BinaryMask* gt = gt_mask(data[i]);
      if (!gt) continue;
      const double f1 = pixel_f1(localize_from_cam(cams[i], data[i].image, opt).prediction, *gt);
      f1_all.push_back(f1);
      if (data[i].label == 1) f1_manip.push_back(f1);
    }
    table.rows.push_back({std::string(to_string(mode)), auc, mean(f1_all), mean(f1_manip)});
  }
  return table;
}

void EvalReport::validate() const {
  auto check = [](double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::domain_error(std::string("report value out of [0,1]: ") + what);
  };
  for (const auto& d : datasets) {
    if (d.i_auc) check(*d.i_auc, "i_auc");
    check(d.p_f1, "p_f1");
    check(d.p_f1_manipulated, "p_f1_manipulated");
    check(d.accuracy, "accuracy");
  }
  for (const auto& c : curves)
    for (const auto& p : c.points) check(p.p_f1, "curve p_f1");
  for (const auto& t : ablations)
    for (const auto& r : t.rows) {
      if (r.i_auc) check(*r.i_auc, "i_auc");
      check(r.p_f1, "p_f1");
      check(r.p_f1_manipulated, "p_f1_manipulated");
    }
}

namespace {

ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::optional<double> opt_from(const ordered_json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string report_to_json(const EvalReport& report) {
  ordered_json j;
  j["datasets"] = ordered_json::array();
  for (const auto& d : report.datasets)
    j["datasets"].push_back({{"name", d.name},
                             {"i_auc", opt_json(d.i_auc)},
                             {"p_f1", d.p_f1},
                             {"p_f1_manipulated", d.p_f1_manipulated},
                             {"accuracy", d.accuracy},
                             {"images", d.images},
                             {"manipulated", d.manipulated}});
  j["curves"] = ordered_json::array();
  for (const auto& c : report.curves) {
    ordered_json pts = ordered_json::array();
    for (const auto& p : c.points) pts.push_back({{"level", p.level}, {"p_f1", p.p_f1}});
    j["curves"].push_back({{"name", c.name}, {"points", pts}});
  }
  j["ablations"] = ordered_json::array();
  for (const auto& t : report.ablations) {
    ordered_json rows = ordered_json::array();
    for (const auto& r : t.rows)
      rows.push_back({{"variant", r.variant},
                      {"i_auc", opt_json(r.i_auc)},
                      {"p_f1", r.p_f1},
                      {"p_f1_manipulated", r.p_f1_manipulated}});
    j["ablations"].push_back({{"name", t.name}, {"rows", rows}});
  }
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  const auto j = ordered_json::parse(text);
  EvalReport r;
  for (const auto& d : j.at("datasets"))
    r.datasets.push_back({d.at("name").get<std::string>(), opt_from(d.at("i_auc")), d.at("p_f1").get<double>(),
                          d.at("p_f1_manipulated").get<double>(), d.at("accuracy").get<double>(),
                          d.at("images").get<std::size_t>(), d.at("manipulated").get<std::size_t>()});
  for (const auto& c : j.at("curves")) {
    Curve curve{c.at("name").get<std::string>(), {}};
    for (const auto& p : c.at("points")) curve.points.push_back({p.at("level").get<int>(), p.at("p_f1").get<double>()});
    r.curves.push_back(std::move(curve));
  }
  for (const auto& t : j.at("ablations")) {
    AblationTable table{t.at("name").get<std::string>(), {}};
    for (const auto& row : t.at("rows"))
      table.rows.push_back({row.at("variant").get<std::string>(), opt_from(row.at("i_auc")),
                            row.at("p_f1").get<double>(), row.at("p_f1_manipulated").get<double>()});
    r.ablations.push_back(std::move(table));
  }
  return r;
}

std::string report_to_csv(const EvalReport& report) {
  std::ostringstream os;
  if (!report.curves.empty()) {
    const bool several = report.curves.size() > 1;
    os << (several ? "curve,level,p_f1\n" : "level,p_f1\n");
    for (const auto& c : report.curves)
      for (const auto& p : c.points) os << (several ? c.name + "," : "") << p.level << ',' << fmt(p.p_f1) << '\n';
  } else if (!report.ablations.empty()) {
    os << "table,variant,i_auc,p_f1\n";
    for (const auto& t : report.ablations)
      for (const auto& r : t.rows) os << t.name << ',' << r.variant << ',' << fmt(r.i_auc) << ',' << fmt(r.p_f1) << '\n';
  } else {
    os << "name,i_auc,p_f1\n";
    for (const auto& d : report.datasets) os << d.name << ',' << fmt(d.i_auc) << ',' << fmt(d.p_f1) << '\n';
  }
  return os.str();
}

std::string report_to_svg(const EvalReport& report) {
  constexpr double W = 480, H = 320, L = 50, R = 20, T = 20, B = 40;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0, y = H - B - v * (H - T - B);
    os << "<text x=\"" << L - 6 << "\" y=\"" << fmt(y + 4) << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(v)
       << "</text>\n";
  }
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" font-size=\"12\" text-anchor=\"middle\">level</text>\n";
  for (std::size_t ci = 0; ci < report.curves.size(); ++ci) {
    const auto& c = report.curves[ci];
    if (c.points.empty()) continue;
    const auto [lo, hi] = std::minmax_element(c.points.begin(), c.points.end(),
                                              [](const auto& a, const auto& b) { return a.level < b.level; });
    const double span = std::max(1, hi->level - lo->level);
    const char* colour = colours[ci % 4];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < c.points.size(); ++i) {
      const double x = L + (c.points[i].level - lo->level) / span * (W - L - R);
      const double y = H - B - std::clamp(c.points[i].p_f1, 0.0, 1.0) * (H - T - B);
      os << (i ? " " : "") << fmt(x) << ',' << fmt(y);
    }
    os << "\"/>\n";
    for (const auto& p : c.points) {
      const double x = L + (p.level - lo->level) / span * (W - L - R);
      os << "<text x=\"" << fmt(x) << "\" y=\"" << H - B + 14 << "\" font-size=\"10\" text-anchor=\"middle\">"
         << p.level << "</text>\n";
    }
    os << "<text x=\"" << W - R << "\" y=\"" << T + 14 * (ci + 1) << "\" font-size=\"12\" text-anchor=\"end\" fill=\""
       << colour << "\">" << c.name << " p_f1</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void emit_report(const EvalReport& report, ReportFormat format, const std::filesystem::path& path) {
  report.validate();
  std::string text;
  switch (format) {
    case ReportFormat::json: text = report_to_json(report); break;
    case ReportFormat::csv: text = report_to_csv(report); break;
    case ReportFormat::svg: text = report_to_svg(report); break;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace floc
