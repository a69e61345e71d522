// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "floc/attention.hpp"
#include "floc/imgproc.hpp"
#include "floc/model.hpp"
#include "floc/ops.hpp"
#include "gradcheck.hpp"

namespace floc::testing {

// A random chain of 3-5 differentiable ops over a small feature map or
// token set, ending in a weighted sum. Every weight is a gradcheck input.
struct MicroGraph {
  std::vector<Tensor64> inputs;
  std::vector<std::string> ops;
  std::function<Tensor64(const std::vector<Tensor64>&)> f;
};

inline MicroGraph make_micro_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  constexpr std::size_t N = 2, C = 4, H = 6, W = 6, D = 8, S = 2;
  MicroGraph g;
  g.inputs.push_back(random_tensor({N, C, H, W}, rng));
  std::uniform_int_distribution<int> len(3, 5);
  const int steps = len(rng);

  // Each step appends its parameters to `inputs` and records how to apply
  // them; `tokens` tracks whether the running value is [N,T,D] or a map.
  using Step = std::function<Tensor64(const Tensor64&, const std::vector<Tensor64>&)>;
  std::vector<Step> chain;
  bool tokens = false;
  auto add_param = [&](Shape s, double scale = 0.5) {
    g.inputs.push_back(random_tensor(std::move(s), rng, true, scale));
    return g.inputs.size() - 1;
  };

  for (int i = 0; i < steps; ++i) {
    std::uniform_int_distribution<int> pick(0, tokens ? 4 : 6);
    const int op = pick(rng);
    if (!tokens) {
      switch (op) {
        case 0: {
          const auto w = add_param({C, C, 3, 3}), b = add_param({C});
          const auto pad = rng() % 2 ? ops::PaddingMode::zero : ops::PaddingMode::replicate;
          g.ops.push_back("conv2d");
          chain.push_back([=](const Tensor64& x, const auto& in) { return ops::conv2d(x, in[w], in[b], 1, pad); });
          break;
        }
        case 1: {
          const auto ga = add_param({C}), be = add_param({C});
          g.ops.push_back("group_norm");
          chain.push_back([=](const Tensor64& x, const auto& in) { return ops::group_norm(x, 2, in[ga], in[be]); });
          break;
        }
        case 2:
          g.ops.push_back("gelu");
          chain.push_back([](const Tensor64& x, const auto&) { return ops::gelu(x); });
          break;
        case 3: {
          const auto w = add_param({C, C, 3, 3});
          const auto edge_op = rng() % 2 ? EdgeOperator::sobel : EdgeOperator::prewitt;
          g.ops.push_back("cabl");
          chain.push_back([=](const Tensor64& x, const auto& in) {
            return combine_cabl(edge_filter(x, edge_op), ops::conv2d(x, in[w], Tensor64(), 1, ops::PaddingMode::zero));
          });
          break;
        }
        case 4:
          g.ops.push_back("pool_upsample");
          chain.push_back([](const Tensor64& x, const auto&) { return ops::upsample_nearest(ops::avg_pool2d(x, 2), 2); });
          break;
        case 5: {
          const auto m = add_param({N, C, H, W});
          g.ops.push_back("mul_add");
          chain.push_back([=](const Tensor64& x, const auto& in) { return ops::add(ops::mul(x, in[m]), x); });
          break;
        }
        default: {
          const auto w = add_param({D, C});
          g.ops.push_back("to_tokens");
          chain.push_back([=](const Tensor64& x, const auto& in) {
            return ops::linear(ops::map_to_tokens(x), in[w], Tensor64());
          });
          tokens = true;
          break;
        }
      }
    } else {
      switch (op) {
        case 0: {
          const auto ga = add_param({D}), be = add_param({D});
          g.ops.push_back("layer_norm");
          chain.push_back([=](const Tensor64& x, const auto& in) { return ops::layer_norm(x, in[ga], in[be]); });
          break;
        }
        case 1: {
          const auto w = add_param({D, D}), b = add_param({D});
          g.ops.push_back("linear");
          chain.push_back([=](const Tensor64& x, const auto& in) { return ops::linear(x, in[w], in[b]); });
          break;
        }
        case 2: {
          const auto q = add_param({3 * D, D}, 0.3), qb = add_param({3 * D}), p = add_param({D, D}), pb = add_param({D});
          g.ops.push_back("attention");
          chain.push_back([=](const Tensor64& x, const auto& in) {
            return multi_head_attention(x, AttentionWeights<double>{in[q], in[qb], in[p], in[pb]}, S).out;
          });
          break;
        }
        case 3:
          g.ops.push_back("softmax");
          chain.push_back([](const Tensor64& x, const auto&) { return ops::softmax(x); });
          break;
        default: {
          const auto w = add_param({C, D});
          g.ops.push_back("to_map");
          chain.push_back([=](const Tensor64& x, const auto& in) {
            return ops::tokens_to_map(ops::linear(x, in[w], Tensor64()), H, W);
          });
          tokens = false;
          break;
        }
      }
    }
  }
  g.inputs.push_back(random_tensor(tokens ? Shape{N, H * W, D} : Shape{N, C, H, W}, rng, false));
  g.f = [chain](const std::vector<Tensor64>& in) {
    Tensor64 x = in[0];
    for (const auto& step : chain) x = step(x, in);
    return ops::sum(ops::mul(x, in.back()));
  };
  return g;
}

/// Two-block model with edge fusion in both blocks, small enough for a full
/// finite-difference sweep over every parameter.
inline ModelConfig tiny_model_config() {
  ModelConfig c;
  c.input_size = 16;
  c.patch = 8;
  c.stem_stride = 4;
  c.num_blocks = 2;
  c.channels = 4;
  c.token_dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.norm_groups = 2;
  c.cabl_depth = 2;
  return c;
}

inline GradReport model_gradcheck(std::uint64_t seed) {
  Model<double> model(Model<float>(tiny_model_config(), seed));
  std::mt19937_64 rng(seed + 1);
  const auto images = random_tensor({2, 3, 16, 16}, rng, false);
  const std::vector<int> labels{0, 1};
  return gradcheck(model.parameters(), [&](const std::vector<Tensor64>&) {
    const auto out = model.forward(images);
    return total_loss(out.conv_logits, out.trans_logits, labels);
  });
}

}  // namespace floc::testing
