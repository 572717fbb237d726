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

#include "catchtd/clustering.hpp"
#include "checks.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

namespace catchtd {
namespace {

// k well-separated Gaussian blobs of `per` points each, blob-major order.
Matrix blobs(Rng& rng, int k, int per, int dim, double spread = 0.1) {
  Matrix centers = checks::random_matrix(rng, k, dim, 5.0);
  Matrix x(k * per, dim);
  for (int c = 0; c < k; ++c) {
    for (int i = 0; i < per; ++i) x.row(c * per + i) = centers.row(c) + checks::random_matrix(rng, 1, dim, spread);
  }
  return x;
}

std::vector<int> blob_labels(int k, int per) {
  std::vector<int> out;
  for (int c = 0; c < k; ++c) out.insert(out.end(), static_cast<std::size_t>(per), c);
  return out;
}

TEST(Canonicalize, FirstAppearanceOrder) {
  const auto a = canonicalize({5, 5, 2, 9, 2}, Stage::s1);
  EXPECT_EQ(a.labels, (std::vector<int>{0, 0, 1, 2, 1}));
  EXPECT_EQ(a.k, 3);
  EXPECT_EQ(a.members()[1], (std::vector<int>{2, 4}));
}

TEST(PairFeatures, SymmetricWithCosineLast) {
  Vector a(2), b(2);
  a << 1, 0;
  b << 1, 1;
  const Vector f = pair_features(a, b);
  EXPECT_EQ(f, pair_features(b, a));
  EXPECT_EQ(f.size(), 5);
  EXPECT_NEAR(f[4], std::sqrt(0.5), 1e-15);
}

TEST(Prm, UntrainedScoresHalf) {
  const PrmModel m = PrmModel::untrained(3);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(m.score(checks::random_vector(rng, 3), checks::random_vector(rng, 3)), 0.5);
  EXPECT_THROW(m.score(Vector::Ones(2), Vector::Ones(3)), DataError);
}

TEST(Prm, GradientMatchesFiniteDifferences) {
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) ASSERT_LT(checks::prm_gradient_trial(rng).rel_error, 1e-4);
}

TEST(Prm, LearnsSeparablePreferences) {
  Rng rng(2);
  std::vector<PrmExample> examples;
  for (int i = 0; i < 40; ++i) {
    Vector a = checks::random_vector(rng, 3), b = checks::random_vector(rng, 3);
    const bool same = i % 2 == 0;
    a[0] = 2.0;
    b[0] = same ? 2.0 : -2.0;
    examples.push_back({a, b, same ? 1.0 : 0.0});
  }
  const PrmTraining t = train_prm(examples, PrmConfig{});
  EXPECT_TRUE(t.model.trained);
  EXPECT_TRUE(t.warnings.empty());
  EXPECT_LT(t.loss_history.back(), t.loss_history.front());
  for (const auto& e : examples) EXPECT_NEAR(t.model.score(e.a, e.b), e.target, 0.15);
  for (double w : {t.model.score(examples[0].a, examples[1].b)}) {
    EXPECT_GE(w, 0.0);
    EXPECT_LE(w, 1.0);
  }
}

TEST(Prm, OneSidedPreferencesWarn) {
  std::vector<PrmExample> examples = {{Vector::Ones(2), Vector::Zero(2), 0.0}, {Vector::Zero(2), Vector::Ones(2), 0.0}};
  EXPECT_FALSE(train_prm(examples, PrmConfig{}).warnings.empty());
  EXPECT_THROW(train_prm(std::vector<PrmExample>{}, PrmConfig{}), DataError);
}

TEST(SpDistance, MultiplierIdentity) {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const double d = rng.uniform(0, 10), w = rng.uniform();
    ASSERT_EQ(sp_distance(d, w, SpMode::paper_literal), w * d);
    ASSERT_EQ(sp_distance(d, w, SpMode::inverted), (1.0 - w + kSpFloor) * d);
  }
  EXPECT_THROW(sp_multiplier(1.2, SpMode::inverted), DataError);
  EXPECT_THROW(sp_distance(-1.0, 0.5, SpMode::inverted), DataError);
}

TEST(SpMatrix, SymmetricWithZeroDiagonal) {
  Rng rng(4);
  const Matrix x = checks::random_matrix(rng, 8, 3);
  PrmModel m = PrmModel::untrained(3);
  m.weights = checks::random_vector(rng, 7);
  m.trained = true;
  const SpMatrix sp = compute_sp_matrix(x, m, SpMode::inverted, 3);
  EXPECT_TRUE(sp.distance.isApprox(sp.distance.transpose()));
  EXPECT_EQ(sp.distance.diagonal().norm(), 0.0);
  EXPECT_EQ(sp.preference.diagonal(), Vector::Ones(8));
  EXPECT_THROW(compute_sp_matrix(x, PrmModel::untrained(3), SpMode::inverted), DataError);
}

TEST(SpMatrix, LiteralModeWithUnitPreferenceIsEuclidean) {
  Rng rng(5);
  const Matrix x = checks::random_matrix(rng, 6, 2);
  PrmModel m = PrmModel::untrained(2);
  m.bias = 1e6;  // logistic saturates to exactly 1
  m.trained = true;
  const SpMatrix sp = compute_sp_matrix(x, m, SpMode::paper_literal);
  EXPECT_EQ(sp.distance, euclidean_distances(x));
}

TEST(ReduceDims, FullPcaPreservesDistances) {
  Rng rng(6);
  const Matrix x = checks::random_matrix(rng, 15, 4);
  const Matrix y = reduce_dims(x, Reduction::pca, 4);
  EXPECT_LT((euclidean_distances(x) - euclidean_distances(y)).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(reduce_dims(x, Reduction::identity, 0), x);
  EXPECT_THROW(reduce_dims(x, Reduction::pca, 5), ConfigError);
}

TEST(ReduceDims, PcaFindsDominantAxis) {
  Rng rng(7);
  Matrix x = checks::random_matrix(rng, 200, 3, 0.1);
  x.col(2) *= 50.0;
  const Matrix y = reduce_dims(x, Reduction::pca, 1);
  Vector centered = x.col(2).array() - x.col(2).mean();
  EXPECT_GT(std::abs(cosine(y.col(0), centered)), 0.999);
}

TEST(Spectral, RecoversPlantedBlobs) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const int k = 2 + static_cast<int>(rng.index(4));
    const Matrix x = blobs(rng, k, 12, 5);
    const ClusterAssignment a = spectral_cluster(x, {k, static_cast<std::uint64_t>(trial)});
    EXPECT_EQ(a.k, k);
    EXPECT_EQ(clustering_accuracy(a.labels, blob_labels(k, 12)), 1.0);
    EXPECT_EQ(a.labels.front(), 0);
  }
}

TEST(Spectral, SeededDeterminism) {
  Rng rng(9);
  const Matrix x = checks::random_matrix(rng, 30, 3);
  EXPECT_EQ(spectral_cluster(x, {4, 3}), spectral_cluster(x, {4, 3}));
}

TEST(Spectral, EdgeCases) {
  Rng rng(10);
  const Matrix x = checks::random_matrix(rng, 5, 2);
  EXPECT_THROW(spectral_cluster(x, {6, 0}), DataError);
  const auto single = spectral_cluster(x, {1, 0});
  EXPECT_EQ(single.k, 1);
  const auto each = spectral_cluster(x, {5, 0});
  EXPECT_EQ(each.k, 5);
  // Identical points must not break the bandwidth choice.
  const Matrix same = Matrix::Ones(6, 2);
  EXPECT_EQ(spectral_cluster(same, {2, 0}).size(), 6u);
}

TEST(Conflicts, DetectsBothKinds) {
  const ClusterAssignment a = canonicalize({0, 0, 1, 1}, Stage::s1);
  Matrix w = Matrix::Constant(4, 4, 0.5);
  w(0, 1) = w(1, 0) = 0.1;  // same cluster, split tendency
  w(1, 2) = w(2, 1) = 0.9;  // different clusters, link tendency
  const ConflictSet c = detect_conflicts(a, w, 0.85, 0.15);
  EXPECT_EQ(c.topics, (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(c.pairs.size(), 2u);
  EXPECT_THROW(detect_conflicts(a, w, 0.1, 0.2), ConfigError);
}

TEST(Conflicts, ThresholdsAreInclusive) {
  const ClusterAssignment a = canonicalize({0, 1}, Stage::s1);
  Matrix w = Matrix::Identity(2, 2);
  w(0, 1) = w(1, 0) = 0.85;
  EXPECT_FALSE(detect_conflicts(a, w, 0.85, 0.15).empty());
}

TEST(Recluster, MatchesAverageLinkageOracle) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(10));
    Matrix d = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) d(i, j) = d(j, i) = static_cast<double>(1 + rng.index(20));
    }
    std::vector<int> topics;
    for (int i = 0; i < n; ++i) {
      if (rng.uniform() < 0.8) topics.push_back(i);
    }
    if (topics.empty()) continue;
    const double threshold = median_pairwise(topics, d);
    ASSERT_EQ(recluster_conflicts(topics, d), oracle::average_linkage(topics, d, threshold)) << "trial " << trial;
  }
}

TEST(Recluster, ExplicitThresholdExtremes) {
  Matrix d(3, 3);
  d << 0, 1, 4, 1, 0, 2, 4, 2, 0;
  EXPECT_EQ(recluster_conflicts({0, 1, 2}, d, 0.5).size(), 3u);
  EXPECT_EQ(recluster_conflicts({0, 1, 2}, d, 100.0).size(), 1u);
  EXPECT_THROW(recluster_conflicts({}, d), DataError);
}

TEST(Reassign, MovesGroupsToNearestAnchor) {
  // Topics 0,1 anchor A; 2,3 anchor B; topic 4 sat in A but lies next to B.
  Matrix d = Matrix::Constant(5, 5, 10.0);
  d.diagonal().setZero();
  d(4, 2) = d(2, 4) = 1.0;
  d(4, 3) = d(3, 4) = 1.0;
  const ClusterAssignment anchors = canonicalize({0, 0, 1, 1, 0}, Stage::s1);
  const ClusterAssignment out = reassign_subclusters({{4}}, anchors, d);
  EXPECT_EQ(out.labels, (std::vector<int>{0, 0, 1, 1, 1}));
  EXPECT_EQ(out.stage, Stage::s4);
}

TEST(Reassign, DropsEmptiedAnchorsAndBreaksTiesLow) {
  Matrix d = Matrix::Constant(4, 4, 3.0);
  d.diagonal().setZero();
  const ClusterAssignment anchors = canonicalize({0, 1, 1, 2}, Stage::s1);
  const ClusterAssignment out = reassign_subclusters({{0}}, anchors, d);
  EXPECT_EQ(out.k, 2);
  EXPECT_EQ(out.labels, (std::vector<int>{0, 0, 0, 1}));
  EXPECT_THROW(reassign_subclusters({{0, 1, 2, 3}}, anchors, d), DataError);
}

TEST(Reassign, AggregationModes) {
  Matrix d = Matrix::Zero(4, 4);
  auto set = [&](int i, int j, double v) { d(i, j) = d(j, i) = v; };
  set(0, 1, 1.0);
  set(0, 2, 5.0);
  set(0, 3, 2.5);
  set(1, 2, 9.0);
  set(1, 3, 9.0);
  set(2, 3, 9.0);
  // Pending {0}; anchor 0 = {1, 2} (min 1, mean 3, max 5), anchor 1 = {3} (2.5).
  const ClusterAssignment anchors = canonicalize({0, 0, 0, 1}, Stage::s1);
  EXPECT_EQ(reassign_subclusters({{0}}, anchors, d, Aggregation::min).labels[0], 0);
  EXPECT_EQ(reassign_subclusters({{0}}, anchors, d, Aggregation::mean).labels[0], 1);
  EXPECT_EQ(reassign_subclusters({{0}}, anchors, d, Aggregation::max).labels[0], 1);
}

TEST(PreferenceCluster, NoPairsEqualsSpectral) {
  Rng rng(12);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x = checks::random_matrix(rng, 25, 4);
    ClusterConfig c;
    c.k = 3;
    c.seed = static_cast<std::uint64_t>(trial);
    const ClusteringResult r = preference_enhanced_cluster(x, {}, c);
    EXPECT_EQ(r.final, spectral_cluster(x, {3, c.seed}));
    EXPECT_EQ(r.final, r.s1);
    EXPECT_FALSE(r.prm.has_value());
  }
}

TEST(PreferenceCluster, DisabledPreferencesEqualsSpectral) {
  const auto fx = fixtures::merged_blobs(0);
  ClusterConfig c;
  c.k = 2;
  c.use_preferences = false;
  const ClusteringResult r = preference_enhanced_cluster(fx.points, fx.pairs, c);
  EXPECT_EQ(r.final, r.s1);
}

TEST(PreferenceCluster, RepairsMergedBlobs) {
  const auto fx = fixtures::merged_blobs(0);
  ClusterConfig c;
  c.k = 2;
  const ClusteringResult r = preference_enhanced_cluster(fx.points, fx.pairs, c);
  EXPECT_LE(clustering_accuracy(r.s1.labels, fx.gold), 0.8);
  EXPECT_EQ(clustering_accuracy(r.final.labels, fx.gold), 1.0);
  EXPECT_EQ(r.final.stage, Stage::final);
  EXPECT_TRUE(r.prm.has_value());
}

TEST(PreferenceCluster, GspModeClustersSpSpace) {
  const auto fx = fixtures::merged_blobs(1);
  ClusterConfig c;
  c.k = 2;
  c.gsp = true;
  const ClusteringResult r = preference_enhanced_cluster(fx.points, fx.pairs, c);
  EXPECT_TRUE(r.conflicts.empty());
  EXPECT_EQ(r.final, spectral_cluster_distances(r.sp->distance, {2, c.seed}));
}

TEST(PreferenceCluster, JobsDoNotChangeResult) {
  const auto fx = fixtures::merged_blobs(2);
  ClusterConfig c;
  c.k = 2;
  const ClusteringResult a = preference_enhanced_cluster(fx.points, fx.pairs, c);
  c.jobs = 4;
  const ClusteringResult b = preference_enhanced_cluster(fx.points, fx.pairs, c);
  EXPECT_EQ(a.final, b.final);
  EXPECT_EQ(a.sp->distance, b.sp->distance);
}

TEST(PreferenceCluster, RejectsBadThresholds) {
  ClusterConfig c;
  c.theta_link = 0.1;
  c.theta_split = 0.2;
  EXPECT_THROW(preference_enhanced_cluster(Matrix::Ones(4, 2), {}, c), ConfigError);
}

}  // namespace
}  // namespace catchtd
