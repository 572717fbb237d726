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

// Point-cloud fixtures for clustering and labeling checks.

#include "catchtd/clustering.hpp"
#include "catchtd/evaluation.hpp"
#include "catchtd/labeling.hpp"
#include "planted.hpp"

namespace catchtd::fixtures {

// Two groups of 30 sharing one anisotropic blob (sd 2, 1, 1 on dims 0-2)
// and separated only along dim 3 (+/-0.6, sd 0.1). Semantic clustering cuts
// the blob along dim 0; the preference pairs (10 cannot_link across groups,
// 10 should_link within) carry the group signal.
struct MergedBlobs {
  Matrix points;
  std::vector<int> gold;
  std::vector<ItemPair> pairs;
};

inline MergedBlobs merged_blobs(std::uint64_t seed) {
  constexpr int n = 60;
  Rng rng(1000 + seed);
  MergedBlobs f{Matrix(n, 4), std::vector<int>(n), {}};
  for (int i = 0; i < n; ++i) {
    f.gold[static_cast<std::size_t>(i)] = i % 2;
    f.points(i, 0) = 2.0 * rng.normal();
    f.points(i, 1) = rng.normal();
    f.points(i, 2) = rng.normal();
    f.points(i, 3) = (i % 2 ? 0.6 : -0.6) + 0.1 * rng.normal();
  }
  std::set<std::pair<int, int>> seen;
  auto draw = [&](bool same) {
    for (;;) {
      const int a = static_cast<int>(rng.index(n)), b = static_cast<int>(rng.index(n));
      if (a == b || (f.gold[static_cast<std::size_t>(a)] == f.gold[static_cast<std::size_t>(b)]) != same) continue;
      if (!seen.insert({std::min(a, b), std::max(a, b)}).second) continue;
      f.pairs.push_back({std::min(a, b), std::max(a, b), same ? 1.0 : 0.0});
      return;
    }
  };
  for (int i = 0; i < 10; ++i) draw(false);
  for (int i = 0; i < 10; ++i) draw(true);
  return f;
}

// Labels every cluster of an FCC-perturbed planted assignment and returns
// the fraction of clusters whose theme equals the planted label. Items come
// in shuffled theme order; the mock client reads at most 25 items per call.
inline double denoising_exact_match(double fcc, std::uint64_t seed, bool flat, std::size_t per_theme = 100,
                                    std::size_t themes = 3) {
  const std::vector<planted::Theme> catalog(planted::catalog().begin(),
                                            planted::catalog().begin() + static_cast<long>(themes));
  Rng rng(seed);
  std::vector<int> gold;
  for (std::size_t t = 0; t < themes; ++t) gold.insert(gold.end(), per_theme, static_cast<int>(t));
  rng.shuffle(gold);
  const std::vector<int> pred = fcc_perturb(gold, fcc, seed);
  std::vector<std::vector<std::string>> clusters(themes);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    clusters[static_cast<std::size_t>(pred[i])].push_back(catalog[static_cast<std::size_t>(gold[i])].lines[1]);
  }
  KeywordMockClient client = KeywordMockClient::from_json(planted::mock_table_for(catalog, 25));
  LabelConfig config;
  config.seed = seed;
  config.flat = flat;
  const auto labels = generate_themes(clusters, client, config);
  double hits = 0.0;
  for (std::size_t c = 0; c < themes; ++c) hits += labels[c].text == catalog[c].label;
  return hits / static_cast<double>(themes);
}

}  // namespace catchtd::fixtures
