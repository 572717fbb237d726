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

#include "catchtd/evaluation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

namespace catchtd {
namespace {

std::vector<int> random_labels(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<int> out(n);
  for (auto& v : out) v = static_cast<int>(rng.index(k));
  return out;
}

TEST(Hungarian, SolvesSmallAssignment) {
  // Rows pick columns 1, 0, 2 for a total of 1 + 2 + 2 = 5.
  const std::vector<double> cost = {4, 1, 3, 2, 0, 5, 3, 2, 2};
  const auto match = hungarian_min_cost(cost, 3);
  EXPECT_EQ(match, (std::vector<int>{1, 0, 2}));
}

TEST(Accuracy, IdentityAndRelabeling) {
  const std::vector<int> gold = {0, 0, 1, 1, 2, 2};
  EXPECT_DOUBLE_EQ(clustering_accuracy(gold, gold), 1.0);
  const std::vector<int> renamed = {7, 7, 3, 3, 5, 5};
  EXPECT_DOUBLE_EQ(clustering_accuracy(renamed, gold), 1.0);
}

TEST(Accuracy, SingleClusterGetsLargestClass) {
  const std::vector<int> gold = {0, 0, 0, 1, 1, 2};
  const std::vector<int> pred(6, 4);
  EXPECT_DOUBLE_EQ(clustering_accuracy(pred, gold), 0.5);
}

TEST(Accuracy, MoreClustersThanClasses) {
  const std::vector<int> gold = {0, 0, 0, 1, 1, 1};
  const std::vector<int> pred = {0, 0, 1, 2, 2, 3};
  EXPECT_DOUBLE_EQ(clustering_accuracy(pred, gold), 4.0 / 6.0);
}

TEST(Accuracy, MatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.index(8);
    const auto pred = random_labels(rng, n, 1 + rng.index(6));
    const auto gold = random_labels(rng, n, 1 + rng.index(6));
    ASSERT_DOUBLE_EQ(clustering_accuracy(pred, gold), oracle::brute_accuracy(pred, gold));
  }
}

TEST(Accuracy, RejectsLengthMismatch) {
  const std::vector<int> a = {0, 1}, b = {0};
  EXPECT_THROW(clustering_accuracy(a, b), DataError);
}

TEST(Nmi, EdgeCases) {
  const std::vector<int> one(5, 0);
  EXPECT_DOUBLE_EQ(nmi(one, one), 1.0);
  const std::vector<int> split = {0, 1, 0, 1, 0};
  EXPECT_DOUBLE_EQ(nmi(one, split), 0.0);
  EXPECT_DOUBLE_EQ(nmi(split, split), 1.0);
}

TEST(Nmi, IndependentPartitionsScoreZero) {
  const std::vector<int> a = {0, 0, 1, 1};
  const std::vector<int> b = {0, 1, 0, 1};
  EXPECT_NEAR(nmi(a, b), 0.0, 1e-15);
}

TEST(Nmi, MatchesEntropyOracleAndIsSymmetric) {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.index(40);
    const auto a = random_labels(rng, n, 1 + rng.index(6));
    const auto b = random_labels(rng, n, 1 + rng.index(6));
    const double v = nmi(a, b);
    ASSERT_NEAR(v, oracle::entropy_nmi(a, b), 1e-9);
    ASSERT_NEAR(v, nmi(b, a), 1e-12);
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
}

TEST(Nmi, NormalizationOrdering) {
  const std::vector<int> a = {0, 0, 1, 1, 2, 2, 2};
  const std::vector<int> b = {0, 0, 0, 1, 1, 1, 1};
  const double mn = nmi(a, b, NmiNormalization::min);
  const double geo = nmi(a, b, NmiNormalization::geometric);
  const double ari = nmi(a, b, NmiNormalization::arithmetic);
  const double mx = nmi(a, b, NmiNormalization::max);
  EXPECT_GE(mn, geo);
  EXPECT_GE(geo, ari);
  EXPECT_GE(ari, mx);
}

TEST(Rouge, IdenticalAndDisjoint) {
  const RougeScores same = rouge_scores("Book a flight", "book a flight!");
  EXPECT_EQ(same.rouge1, 1.0);
  EXPECT_EQ(same.rouge2, 1.0);
  EXPECT_EQ(same.rougeL, 1.0);
  const RougeScores none = rouge_scores("reset password", "book a flight");
  EXPECT_EQ(none.rouge1, 0.0);
  EXPECT_EQ(none.rouge2, 0.0);
  EXPECT_EQ(none.rougeL, 0.0);
}

TEST(Rouge, HandComputedTable) {
  struct Case {
    const char* cand;
    const char* ref;
    double r1, r2, rl;
  };
  // "the cat sat on the mat" vs "the cat on the mat":
  //   unigrams: cand 6, ref 5, clipped overlap 5 -> F1 = 10/11
  //   bigrams: cand 5, ref 4, overlap {the cat, on the, the mat} = 3 -> 6/9
  //   LCS = 5 -> 10/11
  // "book a flight" vs "book flight": 1-gram 2/3,2/2 -> 0.8; 2-gram 0 of 2/1 -> 0; LCS 2 -> 0.8
  // "update address" vs "update billing address": 1-gram p=1 r=2/3 -> 0.8;
  //   2-gram overlap 0 -> 0; LCS 2 -> 0.8
  const Case cases[] = {
      {"the cat sat on the mat", "the cat on the mat", 10.0 / 11.0, 6.0 / 9.0, 10.0 / 11.0},
      {"book a flight", "book flight", 0.8, 0.0, 0.8},
      {"update address", "update billing address", 0.8, 0.0, 0.8},
  };
  for (const auto& c : cases) {
    const RougeScores s = rouge_scores(c.cand, c.ref);
    EXPECT_EQ(s.rouge1, c.r1) << c.cand;
    EXPECT_EQ(s.rouge2, c.r2) << c.cand;
    EXPECT_EQ(s.rougeL, c.rl) << c.cand;
  }
}

TEST(Rouge, EmptyInputsScoreZero) {
  EXPECT_EQ(rouge_scores("", "book a flight").rouge1, 0.0);
  EXPECT_EQ(rouge_scores("...", "").rougeL, 0.0);
}

TEST(Rouge, TokenizerStripsPunctuationAndCase) {
  EXPECT_EQ(rouge_tokens("  Hello, World!  it's "), (std::vector<std::string>{"hello", "world", "its"}));
}

TEST(LabelCosSim, UsesStoreAndFailsOnMissing) {
  EmbeddingStore store({{"a", Vector::Unit(3, 0)}, {"b", Vector::Unit(3, 1)}});
  EXPECT_DOUBLE_EQ(label_cos_sim("a", "a", store), 1.0);
  EXPECT_DOUBLE_EQ(label_cos_sim("a", "b", store), 0.0);
  EXPECT_THROW(label_cos_sim("a", "zzz", store), DataError);
}

TEST(EvaluateRun, PerfectPrediction) {
  LabeledClustering gold{{{"d:1", 0}, {"e:1", 1}, {"f:1", 0}}, {{0, "book a flight"}, {1, "reset password"}}};
  LabeledClustering pred{{{"d:1", 5}, {"e:1", 2}, {"f:1", 5}}, {{5, "book a flight"}, {2, "reset password"}}};
  const MetricReport r = evaluate_run(pred, gold);
  EXPECT_EQ(r.acc, 1.0);
  EXPECT_EQ(r.nmi, 1.0);
  EXPECT_EQ(r.rouge1, 1.0);
  EXPECT_FALSE(r.cos_sim.has_value());
  EXPECT_EQ(r.n_utterances, 3u);
  EXPECT_EQ(r.n_clusters_pred, 2u);
}

TEST(EvaluateRun, MissingUtterancesAreListed) {
  LabeledClustering gold{{{"d:1", 0}, {"e:1", 1}}, {{0, "x"}, {1, "y"}}};
  LabeledClustering pred{{{"d:1", 0}}, {{0, "x"}}};
  try {
    evaluate_run(pred, gold);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("e:1"), std::string::npos);
  }
}

TEST(EvaluateRun, ReportKeyOrder) {
  LabeledClustering gold{{{"d:1", 0}}, {{0, "x"}}};
  const auto j = evaluate_run(gold, gold).to_json();
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"acc", "nmi", "rouge1", "rouge2", "rougeL", "cos_sim", "llm_score",
                                            "n_utterances", "n_clusters_pred", "n_clusters_gold"}));
}

TEST(FccPerturb, MovesExactCountToOtherClusters) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto gold = random_labels(rng, 50 + rng.index(50), 2 + rng.index(4));
    const double f = rng.uniform();
    const auto out = fcc_perturb(gold, f, static_cast<std::uint64_t>(trial));
    std::size_t moved = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) moved += out[i] != gold[i];
    EXPECT_EQ(moved, static_cast<std::size_t>(std::llround((1.0 - f) * static_cast<double>(gold.size()))));
  }
}

TEST(FccPerturb, EndpointsAndDeterminism) {
  const std::vector<int> gold = {0, 1, 2, 0, 1, 2};
  EXPECT_EQ(fcc_perturb(gold, 1.0, 1), gold);
  const auto all = fcc_perturb(gold, 0.0, 1);
  for (std::size_t i = 0; i < gold.size(); ++i) EXPECT_NE(all[i], gold[i]);
  EXPECT_EQ(fcc_perturb(gold, 0.5, 9), fcc_perturb(gold, 0.5, 9));
  EXPECT_THROW(fcc_perturb(gold, 1.5, 1), ConfigError);
}

}  // namespace
}  // namespace catchtd
