// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/cam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "floc/imgproc.hpp"
#include "floc/png_io.hpp"
#include "json.hpp"

namespace floc {

namespace {

std::string_view class_name(CamClass c) { return c == CamClass::manipulated ? "manipulated" : "authentic"; }

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("camf: truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

FloatMap as_map(std::size_t w, std::size_t h, const std::vector<float>& v) { return FloatMap{w, h, v}; }

}  // namespace

std::string_view to_string(CamFusion f) { return f == CamFusion::matrix ? "matrix" : "class_attention"; }

CamFusion parse_cam_fusion(std::string_view name) {
  if (name == "class_attention") return CamFusion::class_attention;
  if (name == "matrix") return CamFusion::matrix;
  throw std::invalid_argument("unknown cam fusion: " + std::string(name));
}

std::vector<float> minmax_normalize(std::span<const float> values) {
  std::vector<float> out(values.size(), 0.0f);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double mn = *lo, mx = *hi;
  if (!(mx > mn)) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = static_cast<float>(std::clamp((values[i] - mn) / (mx - mn), 0.0, 1.0));
  return out;
}

CamMap CamMap::from_raw(CamClass cls, std::size_t height, std::size_t width, std::vector<float> raw) {
  if (raw.size() != height * width) throw ShapeError("cam: raw size does not match grid");
  CamMap m;
  m.cls = cls;
  m.height = height;
  m.width = width;
  m.normalized = minmax_normalize(raw);
  m.raw = std::move(raw);
  return m;
}

float CamMap::raw_min() const { return raw.empty() ? 0.0f : *std::min_element(raw.begin(), raw.end()); }
float CamMap::raw_max() const { return raw.empty() ? 0.0f : *std::max_element(raw.begin(), raw.end()); }

CamMap conv_cam(std::span<const float> features, std::size_t channels, std::size_t height, std::size_t width,
                std::span<const float> head_weights, CamClass cls) {
  if (head_weights.size() != 2 * channels)
    throw ShapeError("conv_cam: head weights hold " + std::to_string(head_weights.size()) + " values, expected 2x" +
                     std::to_string(channels));
  const std::size_t plane = height * width;
  if (features.size() != channels * plane) throw ShapeError("conv_cam: feature size does not match [C,h,w]");
  const auto w = head_weights.subspan(static_cast<std::size_t>(cls) * channels, channels);
  std::vector<float> raw(plane, 0.0f);
  for (std::size_t c = 0; c < channels; ++c) {
    const float* f = features.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) raw[i] += w[c] * f[i];
  }
  return CamMap::from_raw(cls, height, width, std::move(raw));
}

CamMap trans_cam(std::span<const float> patch_tokens, std::size_t dim, std::span<const float> head_weights,
                 CamClass cls, std::size_t grid_h, std::size_t grid_w) {
  if (head_weights.size() != 2 * dim) throw ShapeError("trans_cam: head weights must be [2,D]");
  if (dim == 0 || patch_tokens.size() != grid_h * grid_w * dim)
    throw ShapeError("trans_cam: " + std::to_string(patch_tokens.size() / std::max<std::size_t>(dim, 1)) +
                     " tokens do not fill a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  const auto w = head_weights.subspan(static_cast<std::size_t>(cls) * dim, dim);
  std::vector<float> raw(grid_h * grid_w);
  for (std::size_t p = 0; p < raw.size(); ++p) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) acc += static_cast<double>(patch_tokens[p * dim + d]) * w[d];
    raw[p] = static_cast<float>(acc);
  }
  return CamMap::from_raw(cls, grid_h, grid_w, std::move(raw));
}

CamMap trans_cam(std::span<const float> patch_tokens, std::size_t dim, std::span<const float> head_weights,
                 CamClass cls) {
  if (dim == 0 || patch_tokens.size() % dim != 0) throw ShapeError("trans_cam: token buffer not a multiple of D");
  const std::size_t P = patch_tokens.size() / dim;
  const auto g = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(P))));
  if (g * g != P) throw ShapeError("trans_cam: " + std::to_string(P) + " patch tokens are not a perfect grid");
  return trans_cam(patch_tokens, dim, head_weights, cls, g, g);
}

namespace {

// Layer- and head-averaged softmax(q k^T / sqrt(D/S)) over all T tokens.
std::vector<double> mean_attention(std::span<const std::vector<float>> queries,
                                   std::span<const std::vector<float>> keys, std::size_t tokens, std::size_t dim,
                                   std::size_t heads) {
  if (queries.empty()) throw std::invalid_argument("attention_average: no layers");
  if (queries.size() != keys.size())
    throw std::invalid_argument("attention_average: " + std::to_string(queries.size()) + " query layers vs " +
                                std::to_string(keys.size()) + " key layers");
  if (heads == 0 || dim % heads != 0) throw ShapeError("attention_average: D not divisible by heads");
  if (tokens < 2) throw ShapeError("attention_average: need a class token and at least one patch");
  const std::size_t T = tokens, dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> acc(T * T, 0.0), row(T);
  for (std::size_t l = 0; l < queries.size(); ++l) {
    const auto& q = queries[l];
    const auto& k = keys[l];
    if (q.size() != heads * T * dh || k.size() != q.size())
      throw ShapeError("attention_average: layer " + std::to_string(l) + " is not [S,T,D/S]");
    for (std::size_t s = 0; s < heads; ++s) {
      const float* qs = q.data() + s * T * dh;
      const float* ks = k.data() + s * T * dh;
      for (std::size_t i = 0; i < T; ++i) {
        double mx = -INFINITY;
        for (std::size_t j = 0; j < T; ++j) {
          double d = 0.0;
          for (std::size_t c = 0; c < dh; ++c) d += static_cast<double>(qs[i * dh + c]) * ks[j * dh + c];
          row[j] = d * inv_sqrt;
          mx = std::max(mx, row[j]);
        }
        double z = 0.0;
        for (auto& r : row) z += (r = std::exp(r - mx));
        for (std::size_t j = 0; j < T; ++j) acc[i * T + j] += row[j] / z;
      }
    }
  }
  return acc;
}

// Conv evidence on the patch grid, average-pooled when the conv map is an
// integer multiple of it.
std::vector<double> conv_on_grid(const CamMap& cam_conv, std::size_t gh, std::size_t gw) {
  const std::size_t P = gh * gw;
  std::vector<double> conv(P, 0.0);
  if (cam_conv.height == gh && cam_conv.width == gw) {
    for (std::size_t i = 0; i < P; ++i) conv[i] = cam_conv.raw[i];
  } else if (gh > 0 && gw > 0 && cam_conv.height % gh == 0 && cam_conv.width % gw == 0 &&
             cam_conv.height / gh == cam_conv.width / gw) {
    const std::size_t r = cam_conv.height / gh;
    for (std::size_t y = 0; y < cam_conv.height; ++y)
      for (std::size_t x = 0; x < cam_conv.width; ++x) conv[(y / r) * gw + x / r] += cam_conv.raw[y * cam_conv.width + x];
    for (auto& v : conv) v /= static_cast<double>(r * r);
  } else {
    throw ShapeError("fuse_cam: grid mismatch between conv " + std::to_string(cam_conv.height) + "x" +
                     std::to_string(cam_conv.width) + " and patch grid " + std::to_string(gh) + "x" +
                     std::to_string(gw));
  }
  return conv;
}

}  // namespace

AttentionMatrix attention_average(std::span<const std::vector<float>> queries,
                                  std::span<const std::vector<float>> keys, std::size_t tokens, std::size_t dim,
                                  std::size_t heads) {
  const auto acc = mean_attention(queries, keys, tokens, dim, heads);
  const std::size_t T = tokens;
  AttentionMatrix a;
  a.size = T - 1;
  a.values.resize(a.size * a.size);
  for (std::size_t i = 1; i < T; ++i) {
    double z = 0.0;
    for (std::size_t j = 1; j < T; ++j) z += acc[i * T + j];
    for (std::size_t j = 1; j < T; ++j) a.values[(i - 1) * a.size + (j - 1)] = acc[i * T + j] / z;
  }
  return a;
}

std::vector<double> class_attention(std::span<const std::vector<float>> queries,
                                    std::span<const std::vector<float>> keys, std::size_t tokens, std::size_t dim,
                                    std::size_t heads) {
  const auto acc = mean_attention(queries, keys, tokens, dim, heads);
  std::vector<double> a(acc.begin() + 1, acc.begin() + static_cast<std::ptrdiff_t>(tokens));
  double z = 0.0;
  for (double v : a) z += v;
  for (double& v : a) v /= z;
  return a;
}

CamMap fuse_cam(const CamMap& cam_trans, const CamMap& cam_conv, const AttentionMatrix& attention) {
  const std::size_t gh = cam_trans.height, gw = cam_trans.width, P = gh * gw;
  if (P != attention.size)
    throw ShapeError("fuse_cam: grid mismatch, transformer map has " + std::to_string(P) + " cells, attention " +
                     std::to_string(attention.size));
  const auto conv = conv_on_grid(cam_conv, gh, gw);
  std::vector<float> refined(P);
  for (std::size_t i = 0; i < P; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < P; ++j) acc += attention.at(i, j) * conv[j];
    refined[i] = static_cast<float>(acc);
  }
  CamMap out = CamMap::from_raw(cam_trans.cls, gh, gw, std::move(refined));
  for (std::size_t i = 0; i < P; ++i) out.normalized[i] = std::max(out.normalized[i], cam_trans.normalized[i]);
  return out;
}

CamMap fuse_cam_class_attention(const CamMap& cam_conv, std::span<const double> cls_attention, std::size_t grid_h,
                                std::size_t grid_w) {
  const std::size_t P = grid_h * grid_w;
  if (cls_attention.size() != P)
    throw ShapeError("fuse_cam: grid mismatch, class attention has " + std::to_string(cls_attention.size()) +
                     " cells, grid " + std::to_string(P));
  const auto conv = conv_on_grid(cam_conv, grid_h, grid_w);
  std::vector<float> refined(P), attn(P);
  for (std::size_t i = 0; i < P; ++i) {
    refined[i] = static_cast<float>(static_cast<double>(P) * cls_attention[i] * conv[i]);
    attn[i] = static_cast<float>(cls_attention[i]);
  }
  CamMap out = CamMap::from_raw(cam_conv.cls, grid_h, grid_w, std::move(refined));
  const auto attn_norm = minmax_normalize(attn);
  for (std::size_t i = 0; i < P; ++i) out.normalized[i] = std::max(out.normalized[i], attn_norm[i]);
  return out;
}

CamMap resize_cam(const CamMap& cam, std::size_t width, std::size_t height) {
  CamMap out;
  out.cls = cam.cls;
  out.width = width;
  out.height = height;
  out.raw = bilinear_resize(as_map(cam.width, cam.height, cam.raw), width, height).values;
  const auto norm = bilinear_resize(as_map(cam.width, cam.height, cam.normalized), width, height).values;
  out.normalized = minmax_normalize(norm);
  return out;
}

CamMap average_cams(std::span<const CamMap> cams) {
  if (cams.empty()) throw std::invalid_argument("average_cams: no maps");
  const auto& first = cams.front();
  std::vector<double> raw(first.raw.size(), 0.0), norm(first.raw.size(), 0.0);
  for (const auto& c : cams) {
    if (c.width != first.width || c.height != first.height) throw ShapeError("average_cams: size mismatch");
    for (std::size_t i = 0; i < raw.size(); ++i) {
      raw[i] += c.raw[i];
      norm[i] += c.normalized[i];
    }
  }
  CamMap out;
  out.cls = first.cls;
  out.width = first.width;
  out.height = first.height;
  out.raw.resize(raw.size());
  std::vector<float> n(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.raw[i] = static_cast<float>(raw[i] / cams.size());
    n[i] = static_cast<float>(norm[i] / cams.size());
  }
  out.normalized = minmax_normalize(n);
  return out;
}

CamMap fused_cam_from_outputs(const Model<float>& model, const BranchOutputs<float>& out, std::size_t n,
                              CamClass cls, CamFusion fusion) {
  const auto& cfg = model.config();
  const auto& fc = out.final_conv;
  const std::size_t C = fc.dim(1), h = fc.dim(2), w = fc.dim(3);
  const auto feats = fc.data().subspan(n * C * h * w, C * h * w);
  const CamMap cconv = conv_cam(feats, C, h, w, model.conv_head_weight().data(), cls);

  const auto& ft = out.final_tokens;
  const std::size_t T = ft.dim(1), D = ft.dim(2);
  const std::size_t S = cfg.heads, block = S * T * (D / S);
  std::vector<std::vector<float>> qs, ks;
  for (std::size_t l = 0; l < out.queries.size(); ++l) {
    const auto q = out.queries[l].data().subspan(n * block, block);
    const auto k = out.keys[l].data().subspan(n * block, block);
    qs.emplace_back(q.begin(), q.end());
    ks.emplace_back(k.begin(), k.end());
  }
  if (fusion == CamFusion::class_attention)
    return fuse_cam_class_attention(cconv, class_attention(qs, ks, T, D, S), out.grid_h, out.grid_w);

  const auto patches = ft.data().subspan(n * T * D + D, (T - 1) * D);
  const CamMap ctrans = trans_cam(patches, D, model.trans_head_weight().data(), cls, out.grid_h, out.grid_w);
  return fuse_cam(ctrans, cconv, attention_average(qs, ks, T, D, S));
}

CamResult multi_scale_cam(const Model<float>& model, const Image& image, std::span<const std::size_t> scales,
                          CamClass cls, CamFusion fusion) {
  if (scales.empty()) throw std::invalid_argument("multi_scale_cam: empty scale list");
  image.validate();
  CamResult res;
  res.scales.assign(scales.begin(), scales.end());
  std::vector<CamMap> maps;
  std::size_t best = 0;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    const std::size_t s = scales[i];
    const auto out = model.forward(image_to_tensor(image, s));
    maps.push_back(resize_cam(fused_cam_from_outputs(model, out, 0, cls, fusion), image.width, image.height));
    const auto dist = [&](std::size_t v) { return v > model.config().input_size ? v - model.config().input_size
                                                                                 : model.config().input_size - v; };
    if (i == 0 || dist(s) < dist(scales[best])) {
      best = i;
      res.score = image_scores(out.conv_logits, out.trans_logits)[0];
    }
  }
  res.cam = average_cams(maps);
  return res;
}

void write_camf(const std::filesystem::path& path, const CamMap& cam, std::span<const std::size_t> scales) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("CAMF", 4);
  put_u32(os, static_cast<std::uint32_t>(cam.height));
  put_u32(os, static_cast<std::uint32_t>(cam.width));
  for (float v : cam.raw) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
  }
  if (!os) throw IoError("write failed: " + path.string());

  nlohmann::ordered_json side;
  side["class"] = std::string(class_name(cam.cls));
  side["scales"] = std::vector<std::size_t>(scales.begin(), scales.end());
  side["min"] = cam.raw_min();
  side["max"] = cam.raw_max();
  std::ofstream js(path.string() + ".json");
  if (!js) throw IoError("cannot write " + path.string() + ".json");
  js << side.dump(2) << "\n";
}

CamMap read_camf(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::string_view(magic, 4) != "CAMF") throw IoError("camf: bad magic in " + path.string());
  const std::uint32_t h = get_u32(is), w = get_u32(is);
  std::vector<float> raw(static_cast<std::size_t>(h) * w);
  for (auto& v : raw) {
    const std::uint32_t bits = get_u32(is);
    std::memcpy(&v, &bits, 4);
  }
  CamClass cls = CamClass::manipulated;
  std::ifstream js(path.string() + ".json");
  if (js) {
    const auto side = nlohmann::json::parse(js, nullptr, false);
    if (!side.is_discarded() && side.contains("class") && side["class"] == "authentic") cls = CamClass::authentic;
  }
  return CamMap::from_raw(cls, h, w, std::move(raw));
}

}  // namespace floc
