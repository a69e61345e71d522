// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#include "floc/model.hpp"

#include <cmath>
#include <stdexcept>

#include "floc/init.hpp"
#include "floc/ops.hpp"
#include "json.hpp"

namespace floc {

std::string_view to_string(CablStructure s) {
  switch (s) {
    case CablStructure::I: return "I";
    case CablStructure::II: return "II";
    case CablStructure::III: return "III";
  }
  return "?";
}

CablStructure parse_cabl_structure(std::string_view name) {
  if (name == "I") return CablStructure::I;
  if (name == "II") return CablStructure::II;
  if (name == "III") return CablStructure::III;
  throw std::invalid_argument("unknown cabl structure '" + std::string(name) + "' (expected I, II or III)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (patch == 0 || stem_stride == 0) fail("patch and stem_stride must be positive");
  if (patch % stem_stride != 0) fail("patch must be a multiple of stem_stride");
  if (input_size == 0 || input_size % patch != 0) fail("input_size must be a positive multiple of patch");
  if (input_size / stem_stride < 3) fail("conv grid smaller than the edge kernel");
  if (num_blocks == 0) fail("num_blocks must be positive");
  if (cabl_depth > num_blocks) fail("cabl_depth exceeds num_blocks");
  if (channels == 0 || norm_groups == 0 || channels % norm_groups != 0)
    fail("channels must be a positive multiple of norm_groups");
  if (token_dim == 0 || heads == 0 || token_dim % heads != 0) fail("token_dim must be divisible by heads");
  if (mlp_ratio == 0) fail("mlp_ratio must be positive");
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["input_size"] = input_size;
  j["patch"] = patch;
  j["stem_stride"] = stem_stride;
  j["num_blocks"] = num_blocks;
  j["channels"] = channels;
  j["token_dim"] = token_dim;
  j["heads"] = heads;
  j["mlp_ratio"] = mlp_ratio;
  j["norm_groups"] = norm_groups;
  j["cabl_depth"] = cabl_depth;
  j["cabl_structure"] = std::string(to_string(cabl_structure));
  j["edge_operator"] = std::string(to_string(edge_operator));
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig c;
  c.input_size = j.at("input_size").get<std::size_t>();
  c.patch = j.at("patch").get<std::size_t>();
  c.stem_stride = j.at("stem_stride").get<std::size_t>();
  c.num_blocks = j.at("num_blocks").get<std::size_t>();
  c.channels = j.at("channels").get<std::size_t>();
  c.token_dim = j.at("token_dim").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.mlp_ratio = j.at("mlp_ratio").get<std::size_t>();
  c.norm_groups = j.at("norm_groups").get<std::size_t>();
  c.cabl_depth = j.at("cabl_depth").get<std::size_t>();
  c.cabl_structure = parse_cabl_structure(j.at("cabl_structure").get<std::string>());
  c.edge_operator = parse_edge_operator(j.at("edge_operator").get<std::string>());
  c.validate();
  return c;
}

template <typename T>
BasicTensor<T> combine_cabl(const BasicTensor<T>& edge, const BasicTensor<T>& conv) {
  return ops::add(ops::mul(edge, conv), conv);
}

namespace {

template <typename T>
BasicTensor<T> ones(std::size_t n) {
  return BasicTensor<T>::full({n}, T(1), true);
}
template <typename T>
BasicTensor<T> zeros(Shape s) {
  return BasicTensor<T>::zeros(std::move(s), true);
}
template <typename T>
BasicTensor<T> lift(const Tensor& t) {
  if constexpr (std::is_same_v<T, float>) {
    return t;
  } else {
    return t.template cast<T>();
  }
}

}  // namespace

template <typename T>
Model<T>::Model(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t C = config_.channels, D = config_.token_dim, p = config_.patch;
  const std::size_t hidden = D * config_.mlp_ratio;

  {
    // Zero-mean kernels: the stem starts as a bank of high-pass filters, so
    // sensor-noise residue is visible to the first blocks from step one.
    Tensor w = he_uniform({C, 3, 7, 7}, 3 * 49, rng);
    auto d = w.mutable_data();
    for (std::size_t k = 0; k < C * 3; ++k) {
      float mean = 0.0f;
      for (std::size_t i = 0; i < 49; ++i) mean += d[k * 49 + i];
      mean /= 49.0f;
      for (std::size_t i = 0; i < 49; ++i) d[k * 49 + i] -= mean;
    }
    stem_.conv_w = lift<T>(w);
  }
  stem_.conv_b = zeros<T>({C});
  stem_.patch_w = lift<T>(scaled_normal({D, 3 * p * p}, 3 * p * p, rng));
  stem_.patch_b = zeros<T>({D});
  {
    std::normal_distribution<float> nd(0.0f, 0.02f);
    std::vector<float> cls(D);
    for (auto& v : cls) v = nd(rng);
    stem_.cls = lift<T>(Tensor::from({1, 1, D}, std::move(cls), true));
  }

  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    ConvBlock cb;
    cb.norm_g = ones<T>(C);
    cb.norm_b = zeros<T>({C});
    cb.w1 = lift<T>(he_uniform({C, C, 3, 3}, C * 9, rng));
    cb.b1 = zeros<T>({C});
    cb.mid_g = ones<T>(C);
    cb.mid_b = zeros<T>({C});
    cb.w2 = lift<T>(he_uniform({C, C, 3, 3}, C * 9, rng));
    cb.b2 = zeros<T>({C});
    conv_.push_back(std::move(cb));

    Fcu f;
    f.down = lift<T>(scaled_normal({D, C}, C, rng));
    f.up = lift<T>(scaled_normal({C, D}, D, rng));
    fcu_.push_back(std::move(f));

    TransBlock tb;
    tb.ln1_g = ones<T>(D);
    tb.ln1_b = zeros<T>({D});
    tb.attn.w_qkv = lift<T>(scaled_normal({3 * D, D}, D, rng));
    tb.attn.b_qkv = zeros<T>({3 * D});
    tb.attn.w_proj = lift<T>(scaled_normal({D, D}, D, rng));
    tb.attn.b_proj = zeros<T>({D});
    tb.ln2_g = ones<T>(D);
    tb.ln2_b = zeros<T>({D});
    tb.fc1_w = lift<T>(scaled_normal({hidden, D}, D, rng));
    tb.fc1_b = zeros<T>({hidden});
    tb.fc2_w = lift<T>(scaled_normal({D, hidden}, hidden, rng));
    tb.fc2_b = zeros<T>({D});
    trans_.push_back(std::move(tb));
  }

  head_.norm_g = ones<T>(C);
  head_.norm_b = zeros<T>({C});
  head_.conv_w = lift<T>(scaled_normal({2, C}, C, rng));
  head_.conv_b = zeros<T>({2});
  head_.ln_g = ones<T>(D);
  head_.ln_b = zeros<T>({D});
  head_.trans_w = lift<T>(scaled_normal({2, D}, D, rng));
  head_.trans_b = zeros<T>({2});
}

template <typename T>
template <typename U>
Model<T>::Model(const Model<U>& other) : config_(other.config_) {
  conv_.resize(config_.num_blocks);
  trans_.resize(config_.num_blocks);
  fcu_.resize(config_.num_blocks);
  auto dst = parameter_slots();
  auto src = const_cast<Model<U>&>(other).parameter_slots();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = src[i]->template cast<T>();
}

template <typename T>
std::vector<BasicTensor<T>*> Model<T>::parameter_slots() {
  std::vector<BasicTensor<T>*> out{&stem_.conv_w, &stem_.conv_b, &stem_.patch_w, &stem_.patch_b, &stem_.cls};
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    auto& c = conv_[i];
    for (auto* t : {&c.norm_g, &c.norm_b, &c.w1, &c.b1, &c.mid_g, &c.mid_b, &c.w2, &c.b2}) out.push_back(t);
    out.push_back(&fcu_[i].down);
    out.push_back(&fcu_[i].up);
    auto& t = trans_[i];
    for (auto* x : {&t.ln1_g, &t.ln1_b, &t.attn.w_qkv, &t.attn.b_qkv, &t.attn.w_proj, &t.attn.b_proj, &t.ln2_g,
                    &t.ln2_b, &t.fc1_w, &t.fc1_b, &t.fc2_w, &t.fc2_b})
      out.push_back(x);
  }
  for (auto* t : {&head_.norm_g, &head_.norm_b, &head_.conv_w, &head_.conv_b, &head_.ln_g, &head_.ln_b,
                  &head_.trans_w, &head_.trans_b})
    out.push_back(t);
  return out;
}

template <typename T>
std::vector<std::pair<std::string, const BasicTensor<T>*>> Model<T>::parameter_slots_named() const {
  std::vector<std::pair<std::string, const BasicTensor<T>*>> out{{"stem.conv.w", &stem_.conv_w},
                                                                  {"stem.conv.b", &stem_.conv_b},
                                                                  {"stem.patch.w", &stem_.patch_w},
                                                                  {"stem.patch.b", &stem_.patch_b},
                                                                  {"stem.cls", &stem_.cls}};
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    const std::string b = "block" + std::to_string(i) + ".";
    const auto& c = conv_[i];
    out.insert(out.end(), {{b + "conv.norm.g", &c.norm_g},
                           {b + "conv.norm.b", &c.norm_b},
                           {b + "conv.w1", &c.w1},
                           {b + "conv.b1", &c.b1},
                           {b + "conv.mid.g", &c.mid_g},
                           {b + "conv.mid.b", &c.mid_b},
                           {b + "conv.w2", &c.w2},
                           {b + "conv.b2", &c.b2},
                           {b + "fcu.down", &fcu_[i].down},
                           {b + "fcu.up", &fcu_[i].up}});
    const auto& t = trans_[i];
    out.insert(out.end(), {{b + "trans.ln1.g", &t.ln1_g},
                           {b + "trans.ln1.b", &t.ln1_b},
                           {b + "trans.attn.qkv.w", &t.attn.w_qkv},
                           {b + "trans.attn.qkv.b", &t.attn.b_qkv},
                           {b + "trans.attn.proj.w", &t.attn.w_proj},
                           {b + "trans.attn.proj.b", &t.attn.b_proj},
                           {b + "trans.ln2.g", &t.ln2_g},
                           {b + "trans.ln2.b", &t.ln2_b},
                           {b + "trans.fc1.w", &t.fc1_w},
                           {b + "trans.fc1.b", &t.fc1_b},
                           {b + "trans.fc2.w", &t.fc2_w},
                           {b + "trans.fc2.b", &t.fc2_b}});
  }
  out.insert(out.end(), {{"head.conv.norm.g", &head_.norm_g},
                         {"head.conv.norm.b", &head_.norm_b},
                         {"head.conv.w", &head_.conv_w},
                         {"head.conv.b", &head_.conv_b},
                         {"head.trans.ln.g", &head_.ln_g},
                         {"head.trans.ln.b", &head_.ln_b},
                         {"head.trans.w", &head_.trans_w},
                         {"head.trans.b", &head_.trans_b}});
  return out;
}

template <typename T>
std::vector<NamedParam<T>> Model<T>::named_parameters() const {
  std::vector<NamedParam<T>> out;
  for (auto& [name, t] : parameter_slots_named()) out.push_back({name, *t});
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> Model<T>::parameters() const {
  std::vector<BasicTensor<T>> out;
  for (auto& [name, t] : parameter_slots_named()) out.push_back(*t);
  return out;
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (auto& [name, t] : parameter_slots_named()) n += t->size();
  return n;
}

template <typename T>
void Model<T>::set_requires_grad(bool flag) {
  for (auto* t : parameter_slots()) t->set_requires_grad(flag);
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* t : parameter_slots()) t->zero_grad();
}

template <typename T>
Model<T> Model<T>::frozen() const {
  Model out;
  out.config_ = config_;
  out.conv_.resize(config_.num_blocks);
  out.trans_.resize(config_.num_blocks);
  out.fcu_.resize(config_.num_blocks);
  auto dst = out.parameter_slots();
  auto src = const_cast<Model&>(*this).parameter_slots();
  for (std::size_t i = 0; i < dst.size(); ++i) *dst[i] = src[i]->detach();
  return out;
}

template <typename T>
void Model<T>::load_parameter(const std::string& name, std::span<const T> values) {
  for (auto& [n, slot] : parameter_slots_named()) {
    if (n != name) continue;
    auto& t = const_cast<BasicTensor<T>&>(*slot);
    if (t.size() != values.size())
      throw ShapeError("parameter " + name + ": expected " + std::to_string(t.size()) + " values, got " +
                       std::to_string(values.size()));
    std::copy(values.begin(), values.end(), t.mutable_data().begin());
    return;
  }
  throw std::invalid_argument("unknown parameter '" + name + "'");
}

template <typename T>
StemOutput<T> Model<T>::stem_forward(const BasicTensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("stem: expected [N,3,H,W] images, got " + to_string(images.shape()));
  const std::size_t H = images.dim(2), W = images.dim(3), p = config_.patch;
  if (H % p != 0 || W % p != 0)
    throw ShapeError("stem: image " + std::to_string(W) + "x" + std::to_string(H) + " not divisible by patch " +
                     std::to_string(p));
  StemOutput<T> out;
  out.conv = ops::conv2d(images, stem_.conv_w, stem_.conv_b, config_.stem_stride, ops::PaddingMode::zero);
  auto patches = ops::linear(ops::patchify(images, p), stem_.patch_w, stem_.patch_b);
  out.tokens = ops::concat_tokens(ops::expand_batch(stem_.cls, images.dim(0)), patches);
  return out;
}

template <typename T>
BasicTensor<T> Model<T>::conv_unit(const ConvBlock& p, const BasicTensor<T>& x) const {
  auto h = ops::conv2d(x, p.w1, p.b1, 1, ops::PaddingMode::zero);
  h = ops::gelu(ops::group_norm(h, config_.norm_groups, p.mid_g, p.mid_b));
  h = ops::conv2d(h, p.w2, p.b2, 1, ops::PaddingMode::zero);
  return ops::add(x, h);
}

template <typename T>
BlockTrace<T> Model<T>::cabl_block_forward(std::size_t block, const BasicTensor<T>& f_prev) const {
  if (block >= config_.num_blocks) throw std::out_of_range("block index out of range");
  const auto& p = conv_[block];
  BlockTrace<T> tr;
  tr.cabl = config_.uses_cabl(block);
  tr.input = ops::group_norm(f_prev, config_.norm_groups, p.norm_g, p.norm_b);
  if (!tr.cabl) {
    tr.conv = conv_unit(p, tr.input);
    tr.out = tr.conv;
    return tr;
  }
  tr.edge = edge_filter(tr.input, config_.edge_operator);
  switch (config_.cabl_structure) {
    case CablStructure::III:
      tr.conv = conv_unit(p, tr.input);
      tr.out = combine_cabl(tr.edge, tr.conv);
      break;
    case CablStructure::I:
      tr.conv = conv_unit(p, tr.input);
      tr.out = ops::add(tr.conv, tr.edge);
      break;
    case CablStructure::II:
      tr.conv = conv_unit(p, ops::mul(tr.edge, tr.input));
      tr.out = tr.conv;
      break;
  }
  return tr;
}

template <typename T>
TransOutput<T> Model<T>::trans_block_forward(std::size_t block, const BasicTensor<T>& tokens) const {
  if (block >= config_.num_blocks) throw std::out_of_range("block index out of range");
  const auto& p = trans_[block];
  auto attn = multi_head_attention(ops::layer_norm(tokens, p.ln1_g, p.ln1_b), p.attn, config_.heads);
  auto x = ops::add(tokens, attn.out);
  auto h = ops::gelu(ops::linear(ops::layer_norm(x, p.ln2_g, p.ln2_b), p.fc1_w, p.fc1_b));
  x = ops::add(x, ops::linear(h, p.fc2_w, p.fc2_b));
  return {x, attn.attn, attn.q, attn.k};
}

template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> Model<T>::fcu_exchange(std::size_t block, const BasicTensor<T>& conv,
                                                                 const BasicTensor<T>& tokens) const {
  if (block >= config_.num_blocks) throw std::out_of_range("block index out of range");
  const std::size_t ratio = config_.patch / config_.stem_stride;
  const std::size_t N = conv.dim(0), h = conv.dim(2), w = conv.dim(3);
  if (h % ratio != 0 || w % ratio != 0 || tokens.dim(0) != N || tokens.dim(1) != 1 + (h / ratio) * (w / ratio))
    throw ShapeError("fcu: grid mismatch between conv " + to_string(conv.shape()) + " and tokens " +
                     to_string(tokens.shape()));
  const std::size_t gh = h / ratio, gw = w / ratio, P = gh * gw, D = tokens.dim(2);
  const auto& p = fcu_[block];
  const BasicTensor<T> none;

  auto down = ops::linear(ops::map_to_tokens(ratio > 1 ? ops::avg_pool2d(conv, ratio) : conv), p.down, none);
  auto cls_pad = BasicTensor<T>::zeros({N, 1, D});
  auto new_tokens = ops::add(tokens, ops::concat_tokens(cls_pad, down));

  auto up = ops::tokens_to_map(ops::linear(ops::slice_tokens(tokens, 1, P), p.up, none), gh, gw);
  if (ratio > 1) up = ops::upsample_nearest(up, ratio);
  auto new_conv = ops::add(conv, up);
  return {new_conv, new_tokens};
}

template <typename T>
HeadLogits<T> Model<T>::classify_heads(const BasicTensor<T>& final_conv, const BasicTensor<T>& final_tokens) const {
  const std::size_t N = final_tokens.dim(0), D = final_tokens.dim(2);
  HeadLogits<T> out;
  out.conv = ops::linear(ops::global_avg_pool(final_conv), head_.conv_w, head_.conv_b);
  auto cls = ops::reshape(ops::slice_tokens(final_tokens, 0, 1), {N, D});
  out.trans = ops::linear(cls, head_.trans_w, head_.trans_b);
  return out;
}

template <typename T>
BranchOutputs<T> Model<T>::forward(const BasicTensor<T>& images) const {
  auto stem = stem_forward(images);
  BranchOutputs<T> out;
  out.grid_h = images.dim(2) / config_.patch;
  out.grid_w = images.dim(3) / config_.patch;
  auto conv = stem.conv;
  auto tokens = stem.tokens;
  for (std::size_t i = 0; i < config_.num_blocks; ++i) {
    auto tr = cabl_block_forward(i, conv);
    out.conv_features.push_back(tr.out);
    auto [c, t] = fcu_exchange(i, tr.out, tokens);
    out.traces.push_back(std::move(tr));
    auto trans = trans_block_forward(i, t);
    conv = c;
    tokens = trans.tokens;
    out.tokens.push_back(tokens);
    out.queries.push_back(trans.q);
    out.keys.push_back(trans.k);
  }
  out.final_conv = ops::group_norm(conv, config_.norm_groups, head_.norm_g, head_.norm_b);
  out.final_tokens = ops::layer_norm(tokens, head_.ln_g, head_.ln_b);
  auto logits = classify_heads(out.final_conv, out.final_tokens);
  out.conv_logits = logits.conv;
  out.trans_logits = logits.trans;
  return out;
}

template <typename T>
BasicTensor<T> total_loss(const BasicTensor<T>& conv_logits, const BasicTensor<T>& trans_logits,
                          std::span<const int> labels) {
  return ops::add(ops::bce_with_logits(conv_logits, labels), ops::bce_with_logits(trans_logits, labels));
}

template <typename T>
std::vector<double> image_scores(const BasicTensor<T>& conv_logits, const BasicTensor<T>& trans_logits) {
  const std::size_t N = conv_logits.dim(0);
  auto p1 = [](std::span<const T> row) {
    // softmax over two logits, manipulated class
    return 1.0 / (1.0 + std::exp(static_cast<double>(row[0]) - static_cast<double>(row[1])));
  };
  std::vector<double> out(N);
  for (std::size_t n = 0; n < N; ++n)
    out[n] = 0.5 * (p1(conv_logits.data().subspan(2 * n, 2)) + p1(trans_logits.data().subspan(2 * n, 2)));
  return out;
}

Tensor images_to_batch(std::span<const Image* const> images, std::size_t size) {
  if (images.empty()) throw std::invalid_argument("images_to_batch: empty batch");
  const std::size_t plane = size * size;
  std::vector<float> data(images.size() * 3 * plane);
  for (std::size_t n = 0; n < images.size(); ++n) {
    const Image& src = *images[n];
    src.validate();
    const Image img = (src.width == size && src.height == size) ? src : nearest_resize(src, size, size);
    float* base = data.data() + n * 3 * plane;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t sc = img.channels == 3 ? c : 0;
          base[c * plane + y * size + x] = (img.at(x, y, sc) / 255.0f - 0.5f) / 0.25f;
        }
  }
  return Tensor::from({images.size(), 3, size, size}, std::move(data));
}

Tensor image_to_tensor(const Image& image, std::size_t size) {
  const Image* one[] = {&image};
  return images_to_batch(one, size);
}

template BasicTensor<float> combine_cabl(const BasicTensor<float>&, const BasicTensor<float>&);
template BasicTensor<double> combine_cabl(const BasicTensor<double>&, const BasicTensor<double>&);
template class Model<float>;
template class Model<double>;
template Model<double>::Model(const Model<float>&);
template Model<float>::Model(const Model<double>&);
template BasicTensor<float> total_loss(const BasicTensor<float>&, const BasicTensor<float>&, std::span<const int>);
template BasicTensor<double> total_loss(const BasicTensor<double>&, const BasicTensor<double>&, std::span<const int>);
template std::vector<double> image_scores(const BasicTensor<float>&, const BasicTensor<float>&);
template std::vector<double> image_scores(const BasicTensor<double>&, const BasicTensor<double>&);

}  // namespace floc
