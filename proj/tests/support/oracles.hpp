// Copyright 2026 The floc Authors
// Licensed under the Apache License, Version 2.0 (see LICENSE file)

#pragma once

#include <cmath>
#include <cstdlib>
#include <random>
#include <set>
#include <stack>
#include <utility>
#include <vector>

#include "floc/image.hpp"
#include "floc/imgproc.hpp"

// Brute-force reference implementations shared by the unit tests and the
// acceptance run.
namespace floc::testing {

inline BinaryMask random_mask(std::mt19937_64& rng, std::size_t w, std::size_t h, double density) {
  std::bernoulli_distribution on(density);
  auto m = BinaryMask::empty(w, h);
  for (auto& b : m.bits) b = on(rng) ? 1 : 0;
  return m;
}

// Stack flood fill: the partition as sets of pixel indices.
inline std::set<std::set<std::size_t>> flood_partition(const BinaryMask& m, Connectivity conn) {
  std::vector<bool> seen(m.bits.size(), false);
  std::set<std::set<std::size_t>> parts;
  const int w = static_cast<int>(m.width), h = static_cast<int>(m.height);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto start = static_cast<std::size_t>(y * w + x);
      if (!m.bits[start] || seen[start]) continue;
      std::set<std::size_t> part;
      std::stack<std::pair<int, int>> todo;
      todo.push({x, y});
      seen[start] = true;
      while (!todo.empty()) {
        const auto [cx, cy] = todo.top();
        todo.pop();
        part.insert(static_cast<std::size_t>(cy * w + cx));
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (conn == Connectivity::four && dx != 0 && dy != 0) continue;
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const auto j = static_cast<std::size_t>(ny * w + nx);
            if (m.bits[j] && !seen[j]) {
              seen[j] = true;
              todo.push({nx, ny});
            }
          }
        }
      }
      parts.insert(std::move(part));
    }
  }
  return parts;
}

// The partition produced by label_components, in the same form.
inline std::set<std::set<std::size_t>> labelled_partition(const ComponentLabels& got) {
  std::vector<std::set<std::size_t>> by_label(got.components.size());
  for (std::size_t i = 0; i < got.labels.size(); ++i)
    if (got.labels[i] >= 0) by_label.at(static_cast<std::size_t>(got.labels[i])).insert(i);
  return {by_label.begin(), by_label.end()};
}

inline double f1_oracle(const BinaryMask& p, const BinaryMask& g) {
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t y = 0; y < g.height; ++y)
    for (std::size_t x = 0; x < g.width; ++x) {
      tp += p.at(x, y) && g.at(x, y);
      fp += p.at(x, y) && !g.at(x, y);
      fn += !p.at(x, y) && g.at(x, y);
    }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * tp / (2.0 * tp + fp + fn);
}

// Probability that a random manipulated sample outscores a random authentic
// one, ties counting half.
inline double auc_oracle(const std::vector<double>& s, const std::vector<int>& l) {
  double wins = 0;
  long pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (l[i] == 1 && l[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

inline double mean_abs_error(const Image& a, const Image& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) s += std::abs(int(a.pixels[i]) - int(b.pixels[i]));
  return s / static_cast<double>(a.pixels.size());
}

}  // namespace floc::testing
