// Copyright 2026 The catchtd Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Slow, direct reference implementations used to check the library.

#include "catchtd/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <vector>

namespace catchtd::oracle {

// Best accuracy over every injective map from predicted clusters to gold
// classes (or classes to clusters, whichever side is smaller).
inline double brute_accuracy(const std::vector<int>& pred, const std::vector<int>& gold) {
  std::vector<int> p_ids(pred.begin(), pred.end()), g_ids(gold.begin(), gold.end());
  std::sort(p_ids.begin(), p_ids.end());
  p_ids.erase(std::unique(p_ids.begin(), p_ids.end()), p_ids.end());
  std::sort(g_ids.begin(), g_ids.end());
  g_ids.erase(std::unique(g_ids.begin(), g_ids.end()), g_ids.end());
  // Pad the smaller side with "unmatched" slots (-1 never matches).
  const std::size_t m = std::max(p_ids.size(), g_ids.size());
  while (g_ids.size() < m) g_ids.push_back(-1000 - static_cast<int>(g_ids.size()));
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::map<int, int> map;
    for (std::size_t i = 0; i < p_ids.size(); ++i) map[p_ids[i]] = g_ids[perm[i]];
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += map[pred[i]] == gold[i];
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

// NMI via I = H(P) + H(G) - H(P, G), arithmetic normalisation.
inline double entropy_nmi(const std::vector<int>& pred, const std::vector<int>& gold) {
  const double n = static_cast<double>(pred.size());
  std::map<int, double> cp, cg;
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    cp[pred[i]] += 1;
    cg[gold[i]] += 1;
    joint[{pred[i], gold[i]}] += 1;
  }
  auto h = [n](const auto& counts) {
    double out = 0.0;
    for (const auto& kv : counts) out -= kv.second / n * std::log(kv.second / n);
    return out;
  };
  const double hp = h(cp), hg = h(cg), hj = h(joint);
  if (hp == 0.0 && hg == 0.0) return 1.0;
  if (hp == 0.0 || hg == 0.0) return 0.0;
  return (hp + hg - hj) / (0.5 * (hp + hg));
}

// Depth-score boundaries written straight from the definition.
inline std::vector<int> tiling(const std::vector<double>& s) {
  const int n = static_cast<int>(s.size());
  std::vector<double> depth(static_cast<std::size_t>(n), 0.0);
  for (int i = 1; i < n - 1; ++i) {
    const bool valley = s[i] < s[i - 1] && s[i] <= s[i + 1];
    if (!valley) continue;
    double lpeak = s[i];
    for (int j = i - 1; j >= 0; --j) {
      if (s[j] < s[j + 1]) break;
      lpeak = s[j];
    }
    double rpeak = s[i];
    for (int j = i + 1; j < n; ++j) {
      if (s[j] < s[j - 1]) break;
      rpeak = s[j];
    }
    if (rpeak > s[i]) depth[static_cast<std::size_t>(i)] = lpeak + rpeak - 2.0 * s[i];
  }
  if (n == 0) return {};
  double mean = 0.0;
  for (double d : depth) mean += d;
  mean /= n;
  double sq = 0.0;
  for (double d : depth) sq += (d - mean) * (d - mean);
  const double cutoff = mean - 0.5 * std::sqrt(sq / n);
  std::vector<int> out;
  for (int i = 0; i < n; ++i) {
    if (depth[static_cast<std::size_t>(i)] > 0.0 && depth[static_cast<std::size_t>(i)] > cutoff) out.push_back(i);
  }
  return out;
}

// Average linkage recomputed from member distances at every step.
inline std::vector<std::vector<int>> average_linkage(const std::vector<int>& topics, const Matrix& d, double threshold) {
  std::vector<std::vector<int>> clusters;
  std::vector<int> sorted = topics;
  std::sort(sorted.begin(), sorted.end());
  for (int t : sorted) clusters.push_back({t});
  auto link = [&](const std::vector<int>& a, const std::vector<int>& b) {
    double s = 0.0;
    for (int x : a) {
      for (int y : b) s += d(x, y);
    }
    return s / static_cast<double>(a.size() * b.size());
  };
  for (;;) {
    std::sort(clusters.begin(), clusters.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    double best = std::numeric_limits<double>::infinity();
    std::size_t ba = 0, bb = 0;
    for (std::size_t a = 0; a < clusters.size(); ++a) {
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double v = link(clusters[a], clusters[b]);
        if (v < best) {
          best = v;
          ba = a;
          bb = b;
        }
      }
    }
    if (clusters.size() < 2 || best > threshold) break;
    clusters[ba].insert(clusters[ba].end(), clusters[bb].begin(), clusters[bb].end());
    std::sort(clusters[ba].begin(), clusters[ba].end());
    clusters.erase(clusters.begin() + static_cast<long>(bb));
  }
  return clusters;
}

// Central differences of f at every entry of x.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, Matrix x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = x(i, j);
      x(i, j) = orig + h;
      const double up = f(x);
      x(i, j) = orig - h;
      const double down = f(x);
      x(i, j) = orig;
      g(i, j) = (up - down) / (2.0 * h);
    }
  }
  return g;
}

// Largest entrywise error relative to the gradient's scale.
inline double relative_error(const Matrix& analytic, const Matrix& numeric) {
  const double scale = std::max({1e-8, analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff()});
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace catchtd::oracle
