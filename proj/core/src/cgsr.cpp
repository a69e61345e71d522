// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/cgsr.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <stdexcept>
#include <tuple>

#include "floc/base64.hpp"
#include "floc/imgproc.hpp"
#include "floc/png_io.hpp"
#include "httplib.h"
#include "json.hpp"

namespace floc {

std::string_view to_string(PromptMode m) {
  switch (m) {
    case PromptMode::null: return "null";
    case PromptMode::point: return "point";
    case PromptMode::box: return "box";
    case PromptMode::box_point: return "box+point";
  }
  return "?";
}

PromptMode parse_prompt_mode(std::string_view name) {
  for (auto m : all_prompt_modes())
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown prompt mode '" + std::string(name) + "' (expected null, point, box, box+point)");
}

std::vector<PromptMode> all_prompt_modes() {
  return {PromptMode::null, PromptMode::point, PromptMode::box, PromptMode::box_point};
}

std::string_view to_string(RefinerKind k) {
  switch (k) {
    case RefinerKind::none: return "none";
    case RefinerKind::builtin_region_grow: return "region";
    case RefinerKind::remote: return "remote";
  }
  return "?";
}

RefinerKind parse_refiner_kind(std::string_view name) {
  if (name == "none") return RefinerKind::none;
  if (name == "region") return RefinerKind::builtin_region_grow;
  if (name == "remote") return RefinerKind::remote;
  throw std::invalid_argument("unknown refiner '" + std::string(name) + "' (expected none, region, remote)");
}

const PromptPoint* PromptSet::positive() const {
  for (const auto& p : points)
    if (p.positive) return &p;
  return nullptr;
}

const PromptPoint* PromptSet::negative() const {
  for (const auto& p : points)
    if (!p.positive) return &p;
  return nullptr;
}

BinaryMask binarize_coarse_mask(const CamMap& cam, double rho, std::size_t width, std::size_t height) {
  if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("binarize: rho must lie in (0, 1)");
  // The normalized map is resized as is; re-stretching would turn a
  // constant map into an empty one.
  const auto norm = (cam.width == width && cam.height == height)
                        ? cam.normalized
                        : bilinear_resize(FloatMap{cam.width, cam.height, cam.normalized}, width, height).values;
  BinaryMask out = BinaryMask::empty(width, height);
  for (std::size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = norm[i] >= rho ? 1 : 0;
  return out;
}

PromptSet generate_prompts(const CamMap& cam_in, const BinaryMask& coarse, PromptMode mode) {
  PromptSet ps;
  if (mode == PromptMode::null) return ps;
  const std::size_t W = coarse.width, H = coarse.height;
  const CamMap cam = (cam_in.width == W && cam_in.height == H) ? cam_in : resize_cam(cam_in, W, H);
  if (coarse.none()) {
    ps.empty_coarse = true;
    return ps;
  }
  const bool want_box = mode == PromptMode::box || mode == PromptMode::box_point;
  const bool want_points = mode == PromptMode::point || mode == PromptMode::box_point;
  if (want_box) ps.box = largest_component_bbox(coarse);
  if (!want_points) return ps;

  const auto raw_at = [&](std::size_t x, std::size_t y) { return cam.raw[y * W + x]; };
  const auto in_box = [&](std::size_t x, std::size_t y) {
    return !ps.box || ps.box->contains(static_cast<int>(x), static_cast<int>(y));
  };

  // positive: highest raw value where the foreground is claimed
  std::size_t px = 0, py = 0;
  float best = -std::numeric_limits<float>::infinity();
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      if (in_box(x, y) && raw_at(x, y) > best) {
        best = raw_at(x, y);
        px = x;
        py = y;
      }
  ps.points.push_back({static_cast<int>(px), static_cast<int>(py), true});

  // negative: global minimum, moved to the lowest pixel outside the box
  const auto lowest = [&](bool outside_only) {
    std::optional<std::array<std::size_t, 2>> at;
    float v = std::numeric_limits<float>::infinity();
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x)
        if ((!outside_only || !in_box(x, y)) && raw_at(x, y) < v) {
          v = raw_at(x, y);
          at = {x, y};
        }
    return std::pair{at, v};
  };
  auto [neg, low] = lowest(false);
  if (ps.box && in_box((*neg)[0], (*neg)[1])) std::tie(neg, low) = lowest(true);
  if (neg && low <= best) ps.points.push_back({static_cast<int>((*neg)[0]), static_cast<int>((*neg)[1]), false});
  return ps;
}

namespace {

double colour_distance(const Image& img, std::size_t i, const std::array<double, 3>& ref) {
  double d = 0.0;
  for (std::size_t c = 0; c < img.channels; ++c) {
    const double v = img.pixels[i * img.channels + c] - ref[c];
    d += v * v;
  }
  return std::sqrt(d);
}

std::array<double, 3> colour_at(const Image& img, std::size_t i) {
  std::array<double, 3> out{};
  for (std::size_t c = 0; c < img.channels; ++c) out[c] = img.pixels[i * img.channels + c];
  return out;
}

template <typename Accept>
std::vector<std::uint8_t> flood(std::size_t W, std::size_t H, std::size_t seed, Accept accept) {
  std::vector<std::uint8_t> seen(W * H, 0);
  if (!accept(seed)) return seen;
  std::deque<std::size_t> queue{seed};
  seen[seed] = 1;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const std::size_t x = i % W, y = i / W;
    const std::array<std::pair<long, long>, 4> nb{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (auto [dx, dy] : nb) {
      const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
      if (nx < 0 || ny < 0 || nx >= static_cast<long>(W) || ny >= static_cast<long>(H)) continue;
      const std::size_t j = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
      if (seen[j] || !accept(j)) continue;
      seen[j] = 1;
      queue.push_back(j);
    }
  }
  return seen;
}

// Smoothing pulls the region edge inwards by up to `radius` pixels. Pixels
// in that band join the region when their smoothed colour is nearer the
// region mean than the mean of the ring just beyond the band.
template <typename Allowed>
void complete_boundary(const Image& smooth, std::vector<std::uint8_t>& region, std::size_t radius, Allowed allowed) {
  const std::size_t W = smooth.width, H = smooth.height;
  constexpr std::size_t kFar = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(W * H, kFar);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < region.size(); ++i)
    if (region[i]) {
      dist[i] = 0;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    if (dist[i] > 2 * radius) continue;
    const std::size_t x = i % W, y = i / W;
    const std::array<std::pair<long, long>, 4> nb{{{-1, 0}, {1, 0}, {0, -1}, {0, 1}}};
    for (auto [dx, dy] : nb) {
      const long nx = static_cast<long>(x) + dx, ny = static_cast<long>(y) + dy;
      if (nx < 0 || ny < 0 || nx >= static_cast<long>(W) || ny >= static_cast<long>(H)) continue;
      const std::size_t j = static_cast<std::size_t>(ny) * W + static_cast<std::size_t>(nx);
      if (dist[j] != kFar) continue;
      dist[j] = dist[i] + 1;
      queue.push_back(j);
    }
  }
  std::array<double, 3> in{}, out{};
  std::size_t n_in = 0, n_out = 0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    auto& acc = dist[i] == 0 ? in : out;
    if (dist[i] == 0) {
      ++n_in;
    } else if (dist[i] > radius && dist[i] != kFar) {
      ++n_out;
    } else {
      continue;
    }
    for (std::size_t c = 0; c < smooth.channels; ++c) acc[c] += smooth.pixels[i * smooth.channels + c];
  }
  if (n_in == 0 || n_out == 0) return;
  for (std::size_t c = 0; c < 3; ++c) {
    in[c] /= static_cast<double>(n_in);
    out[c] /= static_cast<double>(n_out);
  }
  for (std::size_t d = 1; d <= radius; ++d) {
    std::vector<std::size_t> add;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] != d || !allowed(i)) continue;
      const std::size_t x = i % W, y = i / W;
      const bool touches = (x > 0 && region[i - 1]) || (x + 1 < W && region[i + 1]) || (y > 0 && region[i - W]) ||
                           (y + 1 < H && region[i + W]);
      if (touches && colour_distance(smooth, i, in) < colour_distance(smooth, i, out)) add.push_back(i);
    }
    if (add.empty()) break;
    for (auto i : add) region[i] = 1;
  }
}

RefineResult keep_coarse(const BinaryMask& coarse, std::string error = {}) {
  return RefineResult{coarse, true, std::move(error)};
}

}  // namespace

RefineResult region_grow_refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                                const RegionGrowOptions& options) {
  image.validate();
  const std::size_t W = image.width, H = image.height;
  if (coarse.width != W || coarse.height != H) throw ShapeError("refine: coarse mask does not match image size");
  if (prompts.empty()) return keep_coarse(coarse);

  const Image smooth = options.smoothing > 0 ? gaussian_blur(image, options.smoothing) : image;
  const auto in_box = [&](std::size_t i) {
    return !prompts.box || prompts.box->contains(static_cast<int>(i % W), static_cast<int>(i / W));
  };

  std::size_t seed = 0;
  if (const auto* p = prompts.positive()) {
    seed = static_cast<std::size_t>(p->y) * W + static_cast<std::size_t>(p->x);
  } else {
    // box alone: coarse pixel nearest the box centre, else the centre itself
    const auto& b = *prompts.box;
    const double cx = 0.5 * (b.x0 + b.x1), cy = 0.5 * (b.y0 + b.y1);
    seed = static_cast<std::size_t>(std::lround(cy)) * W + static_cast<std::size_t>(std::lround(cx));
    double best = std::numeric_limits<double>::infinity();
    for (int y = b.y0; y <= b.y1; ++y)
      for (int x = b.x0; x <= b.x1; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x);
        const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        if (coarse.bits[i] && d < best) {
          best = d;
          seed = i;
        }
      }
  }
  const auto ref = colour_at(smooth, seed);

  std::vector<std::uint8_t> blocked(W * H, 0);
  if (const auto* n = prompts.negative()) {
    const std::size_t nseed = static_cast<std::size_t>(n->y) * W + static_cast<std::size_t>(n->x);
    const auto nref = colour_at(smooth, nseed);
    blocked = flood(W, H, nseed, [&](std::size_t i) {
      const double dn = colour_distance(smooth, i, nref);
      return dn <= options.tolerance && dn < colour_distance(smooth, i, ref);
    });
  }
  if (blocked[seed]) return keep_coarse(coarse);

  auto grown = flood(W, H, seed, [&](std::size_t i) {
    return in_box(i) && !blocked[i] && colour_distance(smooth, i, ref) <= options.tolerance;
  });
  if (options.smoothing > 1)
    complete_boundary(smooth, grown, static_cast<std::size_t>(options.smoothing / 2),
                      [&](std::size_t i) { return in_box(i) && !blocked[i]; });
  RefineResult out;
  out.mask = BinaryMask{W, H, grown};
  return out;
}

std::string encode_refine_request(const Image& image, const PromptSet& prompts) {
  nlohmann::ordered_json j;
  j["image_png_b64"] = base64_encode(encode_png(image));
  if (prompts.box)
    j["box"] = {prompts.box->x0, prompts.box->y0, prompts.box->x1, prompts.box->y1};
  else
    j["box"] = nullptr;
  j["points"] = nlohmann::ordered_json::array();
  for (const auto& p : prompts.points) j["points"].push_back({{"x", p.x}, {"y", p.y}, {"label", p.positive ? 1 : 0}});
  return j.dump();
}

BinaryMask decode_refine_response(std::string_view body, std::size_t width, std::size_t height) {
  const auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("mask_png_b64") || !j["mask_png_b64"].is_string())
    throw std::runtime_error("refine response: expected JSON object with string field mask_png_b64");
  const auto bytes = base64_decode(j["mask_png_b64"].get<std::string>());
  BinaryMask mask = mask_from_image(decode_png(bytes));
  if (mask.width != width || mask.height != height)
    throw std::runtime_error("refine response: mask is " + std::to_string(mask.width) + "x" +
                             std::to_string(mask.height) + ", image is " + std::to_string(width) + "x" +
                             std::to_string(height));
  return mask;
}

namespace {

httplib::Client make_client(const RemoteOptions& options) {
  if (options.url.empty()) throw std::invalid_argument("remote refiner: no endpoint URL configured");
  httplib::Client cli(options.url);
  const auto t = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(options.timeout_s));
  cli.set_connection_timeout(t);
  cli.set_read_timeout(t);
  cli.set_write_timeout(t);
  return cli;
}

}  // namespace

RefineResult remote_refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                           const RemoteOptions& options) {
  if (prompts.empty()) return keep_coarse(coarse);
  try {
    auto cli = make_client(options);
    const auto res = cli.Post("/refine", encode_refine_request(image, prompts), "application/json");
    if (!res) return keep_coarse(coarse, "remote refiner: " + httplib::to_string(res.error()));
    if (res->status != 200)
      return keep_coarse(coarse, "remote refiner: HTTP " + std::to_string(res->status) + " " + res->body);
    RefineResult out;
    out.mask = decode_refine_response(res->body, image.width, image.height);
    return out;
  } catch (const std::exception& e) {
    return keep_coarse(coarse, std::string("remote refiner: ") + e.what());
  }
}

bool remote_health(const RemoteOptions& options) {
  auto cli = make_client(options);
  const auto res = cli.Get("/health");
  return res && res->status == 200 && res->body.rfind("ok", 0) == 0;
}

RefineResult refine(const Image& image, const PromptSet& prompts, const BinaryMask& coarse,
                    const RefinerConfig& refiner) {
  if (coarse.width != image.width || coarse.height != image.height)
    throw ShapeError("refine: coarse mask does not match image size");
  if (refiner.kind == RefinerKind::none || prompts.empty()) return RefineResult{coarse, false, {}};
  if (refiner.kind == RefinerKind::remote) return remote_refine(image, prompts, coarse, refiner.remote);
  return region_grow_refine(image, prompts, coarse, refiner.grow);
}

Localization localize_from_cam(const CamResult& cam, const Image& image, const PipelineOptions& options) {
  Localization loc;
  loc.score = cam.score;
  loc.cam = (cam.cam.width == image.width && cam.cam.height == image.height)
                ? cam.cam
                : resize_cam(cam.cam, image.width, image.height);
  loc.coarse = binarize_coarse_mask(loc.cam, options.rho, image.width, image.height);
  loc.prompts = generate_prompts(loc.cam, loc.coarse, options.mode);
  loc.refined = refine(image, loc.prompts, loc.coarse, options.refiner);
  loc.prediction = loc.score >= options.detection_threshold ? loc.refined.mask
                                                            : BinaryMask::empty(image.width, image.height);
  return loc;
}

Localization localize(const Model<float>& model, const Image& image, const PipelineOptions& options) {
  return localize_from_cam(multi_scale_cam(model, image, options.scales, CamClass::manipulated, options.fusion), image, options);
}

PromptSet oracle_prompts(const BinaryMask& gt) {
  PromptSet ps;
  if (gt.none()) {
    ps.empty_coarse = true;
    return ps;
  }
  BBox b{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(), -1, -1};
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x)
      if (gt.at(x, y)) {
        b.x0 = std::min(b.x0, static_cast<int>(x));
        b.y0 = std::min(b.y0, static_cast<int>(y));
        b.x1 = std::max(b.x1, static_cast<int>(x));
        b.y1 = std::max(b.y1, static_cast<int>(y));
      }
  ps.box = b;
  const double cx = 0.5 * (b.x0 + b.x1), cy = 0.5 * (b.y0 + b.y1);
  double best = std::numeric_limits<double>::infinity();
  PromptPoint p;
  for (std::size_t y = 0; y < gt.height; ++y)
    for (std::size_t x = 0; x < gt.width; ++x) {
      const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (gt.at(x, y) && d < best) {
        best = d;
        p = {static_cast<int>(x), static_cast<int>(y), true};
      }
    }
  ps.points.push_back(p);
  return ps;
}

}  // namespace floc
