// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "floc/attention.hpp"
#include "floc/image.hpp"
#include "floc/imgproc.hpp"
#include "floc/tensor.hpp"

namespace floc {

/// Fusion of edge response and convolutional features inside a block.
/// III is the reference design (edge * conv + conv); I and II are
/// reconstructions kept for ablation:
///   I:   conv + edge
///   II:  C(edge * x)
enum class CablStructure { I, II, III };

std::string_view to_string(CablStructure s);
CablStructure parse_cabl_structure(std::string_view name);

struct ModelConfig {
  std::size_t input_size = 64;
  std::size_t patch = 8;        // transformer patch size in input pixels
  std::size_t stem_stride = 4;  // conv branch runs at input / stem_stride
  std::size_t num_blocks = 6;
  std::size_t channels = 16;
  std::size_t token_dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 2;
  std::size_t norm_groups = 4;
  std::size_t cabl_depth = 6;  // blocks [0, cabl_depth) use the edge fusion
  CablStructure cabl_structure = CablStructure::III;
  EdgeOperator edge_operator = EdgeOperator::sobel;

  void validate() const;
  bool uses_cabl(std::size_t block) const { return block < cabl_depth; }
  /// Canonical JSON (sorted keys, no whitespace).
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  bool operator==(const ModelConfig&) const = default;
};

template <typename T>
struct NamedParam {
  std::string name;
  BasicTensor<T> tensor;
};

template <typename T>
struct StemOutput {
  BasicTensor<T> conv;    // [N,C,H/stride,W/stride]
  BasicTensor<T> tokens;  // [N, 1 + (H/p)(W/p), D], class token first
};

template <typename T>
struct BlockTrace {
  BasicTensor<T> input;  // normalised F_{i-1}
  BasicTensor<T> edge;   // undefined for plain blocks
  BasicTensor<T> conv;   // C(.)
  BasicTensor<T> out;    // F_i
  bool cabl = false;
};

template <typename T>
struct TransOutput {
  BasicTensor<T> tokens;
  BasicTensor<T> attn;  // [N,S,T,T]
  BasicTensor<T> q;     // [N*S,T,D/S]
  BasicTensor<T> k;
};

template <typename T>
struct HeadLogits {
  BasicTensor<T> conv;   // [N,2]
  BasicTensor<T> trans;  // [N,2]
};

template <typename T>
struct BranchOutputs {
  std::vector<BasicTensor<T>> conv_features;  // F_1..F_L
  std::vector<BasicTensor<T>> tokens;         // after each transformer block
  std::vector<BasicTensor<T>> queries;        // per layer, [N*S,T,D/S]
  std::vector<BasicTensor<T>> keys;
  std::vector<BlockTrace<T>> traces;
  BasicTensor<T> final_conv;    // head input of the conv branch
  BasicTensor<T> final_tokens;  // layer-normed tokens of the last block
  BasicTensor<T> conv_logits;
  BasicTensor<T> trans_logits;
  std::size_t grid_h = 0, grid_w = 0;  // patch grid
};

/// Element-wise out = edge * conv + conv.
template <typename T>
BasicTensor<T> combine_cabl(const BasicTensor<T>& edge, const BasicTensor<T>& conv);

/// Dual-branch classifier: a convolution branch whose blocks fuse fixed
/// edge responses with learned features, a transformer branch, feature
/// coupling between them after every block, and one linear head per branch.
template <typename T>
class Model {
 public:
  /// Seeded initialisation: He-uniform convolutions, scaled-normal linears.
  Model(ModelConfig config, std::uint64_t seed);
  template <typename U>
  explicit Model(const Model<U>& other);

  const ModelConfig& config() const { return config_; }

  std::vector<NamedParam<T>> named_parameters() const;
  std::vector<BasicTensor<T>> parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool flag);
  void zero_grad();
  /// Deep copy with gradients disabled, for inference.
  Model frozen() const;
  /// Overwrites the parameter named `name`; shapes must match.
  void load_parameter(const std::string& name, std::span<const T> values);

  StemOutput<T> stem_forward(const BasicTensor<T>& images) const;
  BlockTrace<T> cabl_block_forward(std::size_t block, const BasicTensor<T>& f_prev) const;
  TransOutput<T> trans_block_forward(std::size_t block, const BasicTensor<T>& tokens) const;
  /// conv -> tokens: pool to the patch grid, project, add to patch tokens.
  /// tokens -> conv: project patch tokens, upsample, add to features.
  std::pair<BasicTensor<T>, BasicTensor<T>> fcu_exchange(std::size_t block, const BasicTensor<T>& conv,
                                                         const BasicTensor<T>& tokens) const;
  HeadLogits<T> classify_heads(const BasicTensor<T>& final_conv, const BasicTensor<T>& final_tokens) const;
  BranchOutputs<T> forward(const BasicTensor<T>& images) const;

  /// Conv-head weights [2,C] and transformer-head weights [2,D].
  const BasicTensor<T>& conv_head_weight() const { return head_.conv_w; }
  const BasicTensor<T>& trans_head_weight() const { return head_.trans_w; }

 private:
  template <typename U>
  friend class Model;

  struct ConvBlock {
    BasicTensor<T> norm_g, norm_b, w1, b1, mid_g, mid_b, w2, b2;
  };
  struct TransBlock {
    BasicTensor<T> ln1_g, ln1_b;
    AttentionWeights<T> attn;
    BasicTensor<T> ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct Fcu {
    BasicTensor<T> down, up;  // [D,C], [C,D]
  };
  struct Stem {
    BasicTensor<T> conv_w, conv_b, patch_w, patch_b, cls;
  };
  struct Head {
    BasicTensor<T> norm_g, norm_b, conv_w, conv_b, ln_g, ln_b, trans_w, trans_b;
  };

  Model() = default;
  BasicTensor<T> conv_unit(const ConvBlock& p, const BasicTensor<T>& x) const;
  std::vector<BasicTensor<T>*> parameter_slots();
  std::vector<std::pair<std::string, const BasicTensor<T>*>> parameter_slots_named() const;

  ModelConfig config_;
  Stem stem_;
  std::vector<ConvBlock> conv_;
  std::vector<TransBlock> trans_;
  std::vector<Fcu> fcu_;
  Head head_;
};

/// Authentic / manipulated losses of both branches, summed without weights.
template <typename T>
BasicTensor<T> total_loss(const BasicTensor<T>& conv_logits, const BasicTensor<T>& trans_logits,
                          std::span<const int> labels);

/// Per-sample manipulation score: mean of the two branches' softmax
/// probability for the manipulated class.
template <typename T>
std::vector<double> image_scores(const BasicTensor<T>& conv_logits, const BasicTensor<T>& trans_logits);

/// Packs images into a normalised [N,3,size,size] batch (nearest-neighbour resize
/// when needed, grey replicated to three channels).
Tensor images_to_batch(std::span<const Image* const> images, std::size_t size);
Tensor image_to_tensor(const Image& image, std::size_t size);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace floc
