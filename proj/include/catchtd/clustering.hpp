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

// Preference-enhanced topic clustering.
//
//   S1  spectral clustering on semantic (Euclidean) distance -> anchor clusters
//   S2  preference reward model scores every pair; SP distance = multiplier * d_sem
//   S3  topics whose preference contradicts their S1 placement are extracted
//       and re-clustered (average linkage) in SP space -> pending sub-clusters
//   S4  each pending sub-cluster joins the anchor cluster with the smallest
//       aggregated SP distance

#include "catchtd/common.hpp"
#include "catchtd/corpus.hpp"

#include <Eigen/Eigenvalues>

#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace catchtd {

// ---------------------------------------------------------------------------
// Assignments

enum class Stage { s1, s4, final };

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::s1: return "S1";
    case Stage::s4: return "S4";
    case Stage::final: return "final";
  }
  return "?";
}

struct ClusterAssignment {
  std::vector<int> labels;  // topic id -> cluster id in [0, k)
  int k = 0;
  Stage stage = Stage::s1;

  std::size_t size() const { return labels.size(); }

  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<int>(i));
    return out;
  }

  bool operator==(const ClusterAssignment& other) const { return labels == other.labels && k == other.k; }
};

// Relabels clusters densely in order of first appearance.
inline ClusterAssignment canonicalize(const std::vector<int>& raw, Stage stage) {
  ClusterAssignment out;
  out.stage = stage;
  std::map<int, int> remap;
  out.labels.reserve(raw.size());
  for (int c : raw) {
    auto [it, inserted] = remap.emplace(c, static_cast<int>(remap.size()));
    out.labels.push_back(it->second);
  }
  out.k = static_cast<int>(remap.size());
  return out;
}

// ---------------------------------------------------------------------------
// Preference reward model

// Symmetric pair features: |a - b|, a * b (elementwise), cosine(a, b).
inline Vector pair_features(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DataError("pair features: dimension mismatch");
  const Eigen::Index d = a.size();
  Vector f(2 * d + 1);
  f.head(d) = (a - b).cwiseAbs();
  f.segment(d, d) = a.cwiseProduct(b);
  const double denom = a.norm() * b.norm();
  f[2 * d] = denom == 0.0 ? 0.0 : a.dot(b) / denom;
  return f;
}

inline double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct PrmModel {
  std::size_t dim = 0;
  Vector weights;        // over standardized features
  double bias = 0.0;
  Vector feature_mean;   // standardization fitted on the training pairs
  Vector feature_scale;
  bool trained = false;

  static PrmModel untrained(std::size_t dim) {
    const auto n = static_cast<Eigen::Index>(2 * dim + 1);
    return {dim, Vector::Zero(n), 0.0, Vector::Zero(n), Vector::Ones(n), false};
  }

  Vector standardize(const Vector& features) const {
    return (features - feature_mean).cwiseQuotient(feature_scale);
  }

  double score_features(const Vector& standardized) const { return logistic(weights.dot(standardized) + bias); }

  double score(const Vector& x, const Vector& y) const {
    if (static_cast<std::size_t>(x.size()) != dim || static_cast<std::size_t>(y.size()) != dim) {
      throw DataError("prm_score: dimension mismatch (model " + std::to_string(dim) + ")");
    }
    return score_features(standardize(pair_features(x, y)));
  }
};

inline double prm_score(const PrmModel& model, const Vector& x, const Vector& y) { return model.score(x, y); }

struct PrmExample {
  Vector a;
  Vector b;
  double target = 0.0;  // 1 should_link, 0 cannot_link
};

struct PrmConfig {
  double learning_rate = 1.0;
  int epochs = 2000;
};

// Mean squared error of the model over standardized feature rows, and its
// gradient with respect to (weights, bias).
inline double prm_loss(const PrmModel& model, const Matrix& features, const Vector& targets, Vector* grad_weights,
                       double* grad_bias) {
  const Eigen::Index n = features.rows();
  double loss = 0.0;
  if (grad_weights != nullptr) *grad_weights = Vector::Zero(model.weights.size());
  if (grad_bias != nullptr) *grad_bias = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = model.score_features(features.row(i).transpose());
    const double err = w - targets[i];
    loss += err * err;
    const double dz = 2.0 * err * w * (1.0 - w) / static_cast<double>(n);
    if (grad_weights != nullptr) *grad_weights += dz * features.row(i).transpose();
    if (grad_bias != nullptr) *grad_bias += dz;
  }
  return loss / static_cast<double>(n);
}

struct PrmTraining {
  PrmModel model;
  std::vector<double> loss_history;
  std::vector<std::string> warnings;
};

inline PrmTraining train_prm(const std::vector<PrmExample>& examples, const PrmConfig& config) {
  if (examples.empty()) throw DataError("train_prm: empty preference set");
  const std::size_t dim = static_cast<std::size_t>(examples.front().a.size());
  PrmTraining out{PrmModel::untrained(dim), {}, {}};
  std::size_t positives = 0;
  Matrix features(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(2 * dim + 1));
  Vector targets(static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    features.row(row) = pair_features(examples[i].a, examples[i].b).transpose();
    targets[row] = examples[i].target;
    if (examples[i].target > 0.5) ++positives;
  }
  if (positives == 0 || positives == examples.size()) {
    out.warnings.push_back("train_prm: all preference pairs share one relation; the model is degenerate");
  }
  PrmModel& m = out.model;
  m.feature_mean = features.colwise().mean().transpose();
  m.feature_scale = ((features.rowwise() - m.feature_mean.transpose()).colwise().squaredNorm() /
                     static_cast<double>(features.rows()))
                        .cwiseSqrt()
                        .transpose();
  for (Eigen::Index j = 0; j < m.feature_scale.size(); ++j) {
    if (m.feature_scale[j] < 1e-12) m.feature_scale[j] = 1.0;
  }
  const Matrix standardized =
      (features.rowwise() - m.feature_mean.transpose()).array().rowwise() / m.feature_scale.transpose().array();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Vector gw;
    double gb = 0.0;
    out.loss_history.push_back(prm_loss(m, standardized, targets, &gw, &gb));
    m.weights -= config.learning_rate * gw;
    m.bias -= config.learning_rate * gb;
  }
  m.trained = true;
  return out;
}

// Trains on preference pairs whose endpoints are looked up in `store`.
inline PrmTraining train_prm(const std::vector<PreferencePair>& pairs, const EmbeddingStore& store,
                             const PrmConfig& config) {
  std::vector<PrmExample> examples;
  examples.reserve(pairs.size());
  for (const auto& p : pairs) examples.push_back({store.at(p.a.key()), store.at(p.b.key()), p.target()});
  return train_prm(examples, config);
}

// ---------------------------------------------------------------------------
// SP distance

enum class SpMode { paper_literal, inverted };

inline constexpr double kSpFloor = 0.05;

inline double sp_multiplier(double w, SpMode mode) {
  if (!(w >= 0.0 && w <= 1.0)) throw DataError("preference scalar out of [0, 1]: " + std::to_string(w));
  return mode == SpMode::paper_literal ? w : 1.0 - w + kSpFloor;
}

inline double sp_distance(double d_sem, double w, SpMode mode) {
  if (!(d_sem >= 0.0)) throw DataError("semantic distance must be non-negative");
  return sp_multiplier(w, mode) * d_sem;
}

struct SpMatrix {
  Matrix distance;    // d_SP, symmetric, zero diagonal
  Matrix preference;  // W_p, symmetric, unit diagonal
};

inline Matrix euclidean_distances(const Matrix& points) {
  const Eigen::Index n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
    }
  }
  return d;
}

inline SpMatrix compute_sp_matrix(const Matrix& points, const PrmModel& model, SpMode mode, std::size_t jobs = 1) {
  if (!model.trained) throw DataError("compute_sp_matrix: preference model is untrained");
  const Eigen::Index n = points.rows();
  SpMatrix sp{Matrix::Zero(n, n), Matrix::Identity(n, n)};
  parallel_for(static_cast<std::size_t>(n), jobs, [&](std::size_t row) {
    const auto i = static_cast<Eigen::Index>(row);
    const Vector x = points.row(i).transpose();
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Vector y = points.row(j).transpose();
      const double w = model.score(x, y);
      sp.preference(i, j) = w;
      sp.distance(i, j) = sp_distance((x - y).norm(), w, mode);
    }
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sp.preference(j, i) = sp.preference(i, j);
      sp.distance(j, i) = sp.distance(i, j);
    }
  }
  return sp;
}

// ---------------------------------------------------------------------------
// Dimensionality reduction

enum class Reduction { identity, pca };

// Rows are points. PCA components are ordered by explained variance, with the
// sign fixed so each component's largest-magnitude loading is positive.
inline Matrix reduce_dims(const Matrix& points, Reduction method, std::size_t target_dim) {
  const auto d = static_cast<std::size_t>(points.cols());
  if (method == Reduction::identity) return points;
  if (target_dim == 0 || target_dim > d) {
    throw ConfigError("reduce_dims: target dimension " + std::to_string(target_dim) + " not in [1, " +
                      std::to_string(d) + "]");
  }
  if (points.rows() == 0) return Matrix(0, static_cast<Eigen::Index>(target_dim));
  const Eigen::RowVectorXd mean = points.colwise().mean();
  const Matrix centered = points.rowwise() - mean;
  const Matrix cov = centered.transpose() * centered / static_cast<double>(std::max<Eigen::Index>(1, points.rows()));
  Eigen::SelfAdjointEigenSolver<Matrix> solver(cov);
  const auto k = static_cast<Eigen::Index>(target_dim);
  Matrix basis(points.cols(), k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Vector v = solver.eigenvectors().col(points.cols() - 1 - c);
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v[arg] < 0.0) v = -v;
    basis.col(c) = v;
  }
  return centered * basis;
}

// ---------------------------------------------------------------------------
// Spectral clustering (S1)

struct SpectralConfig {
  int k = 30;
  std::uint64_t seed = 0;
  int kmeans_restarts = 10;
  int kmeans_max_iter = 300;
};

namespace detail {

inline double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

struct KMeansRun {
  std::vector<int> labels;
  double inertia = 0.0;
};

inline KMeansRun kmeans_once(const Matrix& x, int k, Rng& rng, int max_iter) {
  const Eigen::Index n = x.rows();
  Matrix centers(k, x.cols());
  // k-means++ seeding.
  std::vector<double> closest(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
  centers.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      closest[static_cast<std::size_t>(i)] =
          std::min(closest[static_cast<std::size_t>(i)], squared_distance(x, i, centers, c - 1));
      total += closest[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform() * total;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= closest[static_cast<std::size_t>(i)];
        if (target < 0.0 && closest[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(n)));
    }
    centers.row(c) = x.row(pick);
  }

  KMeansRun run;
  run.labels.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(x, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double dist = squared_distance(x, i, centers, c);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      if (run.labels[static_cast<std::size_t>(i)] != best) {
        run.labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed && iter > 0) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(run.labels[static_cast<std::size_t>(i)]) += x.row(i);
      ++counts[static_cast<std::size_t>(run.labels[static_cast<std::size_t>(i)])];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        centers.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        continue;
      }
      // Empty cluster: move its center to the point farthest from its own.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double dist = squared_distance(x, i, centers, run.labels[static_cast<std::size_t>(i)]);
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      centers.row(c) = x.row(far);
      run.labels[static_cast<std::size_t>(far)] = c;
      changed = true;
    }
  }
  run.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) run.inertia += squared_distance(x, i, centers, run.labels[static_cast<std::size_t>(i)]);
  return run;
}

}  // namespace detail

inline std::vector<int> kmeans(const Matrix& x, int k, std::uint64_t seed, int restarts = 10, int max_iter = 300) {
  if (k <= 0 || x.rows() < k) throw DataError("kmeans: need at least k points");
  Rng rng(seed);
  detail::KMeansRun best;
  bool have = false;
  for (int r = 0; r < std::max(1, restarts); ++r) {
    detail::KMeansRun run = detail::kmeans_once(x, k, rng, max_iter);
    if (!have || run.inertia < best.inertia) {
      best = std::move(run);
      have = true;
    }
  }
  return best.labels;
}

// Normalized spectral clustering over a precomputed distance matrix: k-NN
// affinity graph (k = min(10, n - 1), Gaussian kernel whose bandwidth is the
// median k-NN edge length), symmetric normalization, top eigenvectors of
// D^-1/2 A D^-1/2 (bottom of the normalized Laplacian), row normalization,
// then seeded k-means++.
inline ClusterAssignment spectral_cluster_distances(const Matrix& dist, const SpectralConfig& config) {
  const Eigen::Index n = dist.rows();
  const int k = config.k;
  if (k < 1) throw ConfigError("spectral clustering needs K >= 1");
  if (n < k) {
    throw DataError("spectral clustering: " + std::to_string(n) + " topics for K = " + std::to_string(k));
  }
  if (k == 1) return canonicalize(std::vector<int>(static_cast<std::size_t>(n), 0), Stage::s1);

  const Eigen::Index knn = std::min<Eigen::Index>(10, n - 1);
  std::vector<std::vector<Eigen::Index>> neighbors(static_cast<std::size_t>(n));
  std::vector<double> edge_lengths;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<Eigen::Index> order;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j != i) order.push_back(j);
    }
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return dist(i, a) < dist(i, b); });
    order.resize(static_cast<std::size_t>(knn));
    for (Eigen::Index j : order) edge_lengths.push_back(dist(i, j));
    neighbors[static_cast<std::size_t>(i)] = std::move(order);
  }
  std::sort(edge_lengths.begin(), edge_lengths.end());
  double sigma = edge_lengths[edge_lengths.size() / 2];
  if (edge_lengths.size() % 2 == 0) sigma = 0.5 * (sigma + edge_lengths[edge_lengths.size() / 2 - 1]);
  if (sigma <= 0.0) sigma = edge_lengths.back();
  if (sigma <= 0.0) sigma = 1.0;

  Matrix affinity = Matrix::Identity(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j : neighbors[static_cast<std::size_t>(i)]) {
      const double a = std::exp(-dist(i, j) * dist(i, j) / (2.0 * sigma * sigma));
      affinity(i, j) = affinity(j, i) = a;
    }
  }
  Vector inv_sqrt_degree(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double deg = affinity.row(i).sum();
    inv_sqrt_degree[i] = deg > 0.0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  const Matrix normalized_affinity = inv_sqrt_degree.asDiagonal() * affinity * inv_sqrt_degree.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> solver(normalized_affinity);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::internal, "spectral clustering: eigensolver failed");
  Matrix embedding = solver.eigenvectors().rightCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = embedding.row(i).norm();
    if (norm > 0.0) embedding.row(i) /= norm;
  }
  return canonicalize(kmeans(embedding, k, config.seed, config.kmeans_restarts, config.kmeans_max_iter), Stage::s1);
}

inline ClusterAssignment spectral_cluster(const Matrix& points, const SpectralConfig& config) {
  return spectral_cluster_distances(euclidean_distances(points), config);
}

// ---------------------------------------------------------------------------
// Conflicts (S3)

struct ConflictSet {
  std::vector<int> topics;                     // sorted, unique
  std::vector<std::pair<int, int>> pairs;      // conflicting (i < j)
  std::vector<std::vector<int>> pending;       // sub-clusters partitioning `topics`

  bool empty() const { return topics.empty(); }
};

inline ConflictSet detect_conflicts(const ClusterAssignment& assignment, const Matrix& preference, double theta_link,
                                    double theta_split) {
  if (!(theta_split < theta_link)) throw ConfigError("conflict detection needs theta_split < theta_link");
  const auto n = static_cast<Eigen::Index>(assignment.size());
  if (preference.rows() != n || preference.cols() != n) throw DataError("detect_conflicts: matrix size mismatch");
  ConflictSet out;
  std::set<int> topics;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const bool same = assignment.labels[static_cast<std::size_t>(i)] == assignment.labels[static_cast<std::size_t>(j)];
      const double w = preference(i, j);
      if ((w >= theta_link && !same) || (w <= theta_split && same)) {
        out.pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
        topics.insert(static_cast<int>(i));
        topics.insert(static_cast<int>(j));
      }
    }
  }
  out.topics.assign(topics.begin(), topics.end());
  return out;
}

inline double median_pairwise(const std::vector<int>& topics, const Matrix& dist) {
  std::vector<double> values;
  for (std::size_t a = 0; a < topics.size(); ++a) {
    for (std::size_t b = a + 1; b < topics.size(); ++b) values.push_back(dist(topics[a], topics[b]));
  }
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

// Average-linkage agglomerative clustering of the conflict topics over d_SP.
// Clusters keep merging while the closest pair's linkage is <= threshold
// (default: median pairwise d_SP of the conflict set). Ties go to the pair
// that comes first when clusters are ordered by their smallest member.
inline std::vector<std::vector<int>> recluster_conflicts(const std::vector<int>& topics, const Matrix& sp_distance,
                                                         std::optional<double> linkage_threshold = std::nullopt) {
  if (topics.empty()) throw DataError("recluster_conflicts: empty conflict set");
  std::vector<int> sorted_topics = topics;
  std::sort(sorted_topics.begin(), sorted_topics.end());
  const double threshold = linkage_threshold.value_or(median_pairwise(sorted_topics, sp_distance));

  std::vector<std::vector<int>> clusters;
  for (int t : sorted_topics) clusters.push_back({t});
  const std::size_t m = clusters.size();
  Matrix link(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      link(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = sp_distance(sorted_topics[a], sorted_topics[b]);
    }
  }
  std::vector<bool> alive(m, true);
  for (;;) {
    // Alive clusters stay ordered by smallest member because merges keep the
    // lower slot, and slots were created in ascending member order.
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_a = m, best_b = m;
    for (std::size_t a = 0; a < m; ++a) {
      if (!alive[a]) continue;
      for (std::size_t b = a + 1; b < m; ++b) {
        if (!alive[b]) continue;
        const double v = link(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
    if (best_a == m || !(best <= threshold)) break;
    const double na = static_cast<double>(clusters[best_a].size());
    const double nb = static_cast<double>(clusters[best_b].size());
    for (std::size_t c = 0; c < m; ++c) {
      if (!alive[c] || c == best_a || c == best_b) continue;
      const auto ci = static_cast<Eigen::Index>(c);
      const double merged = (na * link(static_cast<Eigen::Index>(best_a), ci) + nb * link(static_cast<Eigen::Index>(best_b), ci)) / (na + nb);
      link(static_cast<Eigen::Index>(best_a), ci) = link(ci, static_cast<Eigen::Index>(best_a)) = merged;
    }
    clusters[best_a].insert(clusters[best_a].end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(clusters[best_a].begin(), clusters[best_a].end());
    clusters[best_b].clear();
    alive[best_b] = false;
  }
  std::vector<std::vector<int>> out;
  for (std::size_t a = 0; a < m; ++a) {
    if (alive[a]) out.push_back(std::move(clusters[a]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reassignment (S4)

enum class Aggregation { mean, min, max };

inline double aggregate_distance(const std::vector<int>& group, const std::vector<int>& anchor, const Matrix& dist,
                                 Aggregation agg) {
  double acc = agg == Aggregation::min ? std::numeric_limits<double>::infinity()
                                       : (agg == Aggregation::max ? -std::numeric_limits<double>::infinity() : 0.0);
  for (int g : group) {
    for (int a : anchor) {
      const double v = dist(g, a);
      switch (agg) {
        case Aggregation::mean: acc += v; break;
        case Aggregation::min: acc = std::min(acc, v); break;
        case Aggregation::max: acc = std::max(acc, v); break;
      }
    }
  }
  if (agg == Aggregation::mean) acc /= static_cast<double>(group.size() * anchor.size());
  return acc;
}

// Removes the extracted topics from the anchor clusters (dropping clusters
// left empty and re-densifying ids), then assigns every pending sub-cluster
// en bloc to the anchor with the smallest aggregated SP distance; ties go to
// the lower cluster id.
inline ClusterAssignment reassign_subclusters(const std::vector<std::vector<int>>& pending,
                                              const ClusterAssignment& anchors, const Matrix& sp_distance,
                                              Aggregation agg = Aggregation::mean) {
  std::set<int> extracted;
  for (const auto& group : pending) extracted.insert(group.begin(), group.end());
  std::vector<std::vector<int>> remaining(static_cast<std::size_t>(anchors.k));
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!extracted.count(static_cast<int>(i))) remaining[static_cast<std::size_t>(anchors.labels[i])].push_back(static_cast<int>(i));
  }
  std::vector<int> dense_id(static_cast<std::size_t>(anchors.k), -1);
  std::vector<std::vector<int>> kept;
  for (std::size_t c = 0; c < remaining.size(); ++c) {
    if (remaining[c].empty()) continue;
    dense_id[c] = static_cast<int>(kept.size());
    kept.push_back(remaining[c]);
  }
  if (kept.empty()) throw DataError("reassign_subclusters: every anchor cluster was emptied by extraction");

  ClusterAssignment out;
  out.stage = Stage::s4;
  out.k = static_cast<int>(kept.size());
  out.labels.assign(anchors.size(), -1);
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    if (!extracted.count(static_cast<int>(i))) out.labels[i] = dense_id[static_cast<std::size_t>(anchors.labels[i])];
  }
  for (const auto& group : pending) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < kept.size(); ++c) {
      const double v = aggregate_distance(group, kept[c], sp_distance, agg);
      if (v < best_d) {
        best_d = v;
        best = static_cast<int>(c);
      }
    }
    for (int t : group) out.labels[static_cast<std::size_t>(t)] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Full four-step algorithm

// A preference pair between two topic items, by item index.
struct ItemPair {
  int a = 0;
  int b = 0;
  double target = 0.0;
};

struct ClusterConfig {
  int k = 30;
  double theta_link = 0.85;
  double theta_split = 0.15;
  SpMode sp_mode = SpMode::inverted;
  Reduction reduction = Reduction::identity;
  std::size_t reduced_dim = 0;
  Aggregation aggregation = Aggregation::mean;
  std::uint64_t seed = 0;
  PrmConfig prm;
  bool use_preferences = true;
  bool gsp = false;  // cluster directly in SP space (skips S1 anchors, S3, S4)
  int kmeans_restarts = 10;
  std::size_t jobs = 1;
};

struct ClusteringResult {
  Matrix reduced;
  ClusterAssignment s1;
  ClusterAssignment final;
  std::optional<PrmModel> prm;
  std::optional<SpMatrix> sp;
  ConflictSet conflicts;
  std::vector<std::string> warnings;
};

inline ClusteringResult preference_enhanced_cluster(const Matrix& vectors, const std::vector<ItemPair>& pairs,
                                                    const ClusterConfig& config) {
  if (!(config.theta_split < config.theta_link)) throw ConfigError("theta_split must be below theta_link");
  ClusteringResult result;
  const std::size_t target_dim = config.reduced_dim == 0 ? static_cast<std::size_t>(vectors.cols()) : config.reduced_dim;
  result.reduced = reduce_dims(vectors, config.reduction, target_dim);

  const SpectralConfig spectral{config.k, config.seed, config.kmeans_restarts};
  result.s1 = spectral_cluster(result.reduced, spectral);
  result.final = result.s1;
  result.final.stage = Stage::final;
  if (!config.use_preferences || pairs.empty()) return result;

  std::vector<PrmExample> examples;
  examples.reserve(pairs.size());
  for (const auto& p : pairs) {
    examples.push_back({result.reduced.row(p.a).transpose(), result.reduced.row(p.b).transpose(), p.target});
  }
  PrmTraining training = train_prm(examples, config.prm);
  result.warnings.insert(result.warnings.end(), training.warnings.begin(), training.warnings.end());
  result.prm = std::move(training.model);
  result.sp = compute_sp_matrix(result.reduced, *result.prm, config.sp_mode, config.jobs);

  if (config.gsp) {
    result.final = spectral_cluster_distances(result.sp->distance, spectral);
    result.final.stage = Stage::final;
    return result;
  }

  result.conflicts = detect_conflicts(result.s1, result.sp->preference, config.theta_link, config.theta_split);
  if (result.conflicts.empty()) return result;
  result.conflicts.pending = recluster_conflicts(result.conflicts.topics, result.sp->distance);
  try {
    result.final = reassign_subclusters(result.conflicts.pending, result.s1, result.sp->distance, config.aggregation);
  } catch (const DataError&) {
    // Every anchor conflicted: the pending sub-clusters are all that is left.
    result.warnings.push_back("all anchor clusters were extracted; using pending sub-clusters as final clusters");
    std::vector<int> labels(result.s1.size(), -1);
    for (std::size_t g = 0; g < result.conflicts.pending.size(); ++g) {
      for (int t : result.conflicts.pending[g]) labels[static_cast<std::size_t>(t)] = static_cast<int>(g);
    }
    result.final = canonicalize(labels, Stage::final);
  }
  result.final.stage = Stage::final;
  return result;
}

}  // namespace catchtd
