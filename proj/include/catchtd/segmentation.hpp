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

// Dialogue topic segmentation.
//
// Adjacent turns are compared under two linear projection heads: a topic head
// (cosine of projected turn embeddings) and a coherence head (same, with an
// independently trained matrix). Their sum is the boundary score. Both heads
// are adapted with margin losses, then TextTiling places boundaries at deep
// valleys of the score sequence.

#include "catchtd/common.hpp"
#include "catchtd/corpus.hpp"

#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace catchtd {

enum class HeadRole { topic, coherence };

// Linear map from d_in to d_out (stored as a d_out x d_in matrix).
struct ProjectionHead {
  HeadRole role = HeadRole::topic;
  Matrix weight;

  // Leading d_out rows of the identity: an untrained head is plain cosine.
  static ProjectionHead identity(std::size_t d_in, std::size_t d_out, HeadRole role) {
    if (d_out == 0 || d_out > d_in) throw ConfigError("projection head needs 0 < d_out <= d_in");
    ProjectionHead head;
    head.role = role;
    head.weight = Matrix::Identity(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
    return head;
  }

  std::size_t input_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t output_dim() const { return static_cast<std::size_t>(weight.rows()); }

  Vector project(const Vector& e) const {
    if (static_cast<std::size_t>(e.size()) != input_dim()) {
      throw DataError("projection head expects dimension " + std::to_string(input_dim()) + ", got " +
                      std::to_string(e.size()));
    }
    return weight * e;
  }

  // Unit-length projection h = W e / |W e|.
  Vector represent(const Vector& e) const {
    Vector u = project(e);
    if (u.norm() == 0.0) throw DataError("zero-norm projected vector");
    return u / u.norm();
  }
};

struct BoundaryScore {
  int index = 0;          // gap between turn `index` and turn `index + 1`
  double topic = 0.0;     // t_i
  double coherence = 0.0; // c_i
  double total = 0.0;     // r_i = t_i + c_i
};

inline std::vector<BoundaryScore> boundary_scores(const Dialogue& dialogue, const EmbeddingStore& store,
                                                  const ProjectionHead& topic_head,
                                                  const ProjectionHead& coherence_head) {
  std::vector<Vector> topic_reps;
  std::vector<Vector> coherence_reps;
  topic_reps.reserve(dialogue.turns.size());
  coherence_reps.reserve(dialogue.turns.size());
  for (const auto& u : dialogue.turns) {
    const Vector& e = store.at(u.key());
    topic_reps.push_back(topic_head.represent(e));
    coherence_reps.push_back(coherence_head.represent(e));
  }
  std::vector<BoundaryScore> scores;
  for (std::size_t i = 0; i + 1 < dialogue.turns.size(); ++i) {
    BoundaryScore s;
    s.index = static_cast<int>(i);
    s.topic = topic_reps[i].dot(topic_reps[i + 1]);
    s.coherence = coherence_reps[i].dot(coherence_reps[i + 1]);
    s.total = s.topic + s.coherence;
    scores.push_back(s);
  }
  return scores;
}

// ---------------------------------------------------------------------------
// TextTiling

enum class TilingMode {
  depth_cutoff,       // valleys deeper than mean - stddev/2 of all depth scores
  absolute_threshold  // every gap whose score falls below `threshold`
};

struct TilingPolicy {
  TilingMode mode = TilingMode::depth_cutoff;
  double threshold = 0.5;
};

// Depth score of every gap; zero where the gap is not a valley. A valley is an
// interior gap entered by a strict drop from the left whose right side rises
// above it again (flat bottoms count once, at their leftmost gap).
inline std::vector<double> depth_scores(std::span<const double> scores) {
  const std::size_t n = scores.size();
  std::vector<double> depth(n, 0.0);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(scores[i] < scores[i - 1] && scores[i] <= scores[i + 1])) continue;
    std::size_t left = i;
    while (left > 0 && scores[left - 1] >= scores[left]) --left;
    std::size_t right = i;
    while (right + 1 < n && scores[right + 1] >= scores[right]) ++right;
    if (scores[right] <= scores[i]) continue;
    depth[i] = (scores[left] - scores[i]) + (scores[right] - scores[i]);
  }
  return depth;
}

inline std::vector<int> text_tiling(std::span<const double> scores, const TilingPolicy& policy = {}) {
  std::vector<int> boundaries;
  if (policy.mode == TilingMode::absolute_threshold) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < policy.threshold) boundaries.push_back(static_cast<int>(i));
    }
    return boundaries;
  }
  if (scores.empty()) return boundaries;
  const std::vector<double> depth = depth_scores(scores);
  const double n = static_cast<double>(depth.size());
  const double mean = std::accumulate(depth.begin(), depth.end(), 0.0) / n;
  double var = 0.0;
  for (double d : depth) var += (d - mean) * (d - mean);
  const double cutoff = mean - std::sqrt(var / n) / 2.0;
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (depth[i] > 0.0 && depth[i] > cutoff) boundaries.push_back(static_cast<int>(i));
  }
  return boundaries;
}

inline std::vector<int> text_tiling(const std::vector<BoundaryScore>& scores, const TilingPolicy& policy = {}) {
  std::vector<double> totals;
  totals.reserve(scores.size());
  for (const auto& s : scores) totals.push_back(s.total);
  return text_tiling(std::span<const double>(totals), policy);
}

// ---------------------------------------------------------------------------
// Segments

struct Segment {
  std::string dialogue_id;
  int start = 0;
  int end = 0;  // inclusive
  Vector representation;

  std::string key() const { return dialogue_id + ":" + std::to_string(start) + "-" + std::to_string(end); }
  bool contains(int turn) const { return start <= turn && turn <= end; }
};

inline std::vector<Segment> segment_dialogue(const Dialogue& dialogue, std::span<const int> boundaries,
                                             const EmbeddingStore& store, const ProjectionHead& topic_head) {
  const int n = static_cast<int>(dialogue.turns.size());
  int prev = -1;
  for (int b : boundaries) {
    if (b <= prev || b < 0 || b >= n - 1) {
      throw DataError("dialogue '" + dialogue.dialogue_id + "': invalid boundary " + std::to_string(b));
    }
    prev = b;
  }
  std::vector<Segment> segments;
  int start = 0;
  auto emit = [&](int end) {
    Segment seg{dialogue.dialogue_id, start, end, Vector::Zero(static_cast<Eigen::Index>(topic_head.output_dim()))};
    for (int t = start; t <= end; ++t) {
      seg.representation += topic_head.represent(store.at(dialogue.turns[static_cast<std::size_t>(t)].key()));
    }
    seg.representation = normalized(seg.representation);
    segments.push_back(std::move(seg));
    start = end + 1;
  };
  for (int b : boundaries) emit(b);
  emit(n - 1);
  return segments;
}

// ---------------------------------------------------------------------------
// Margin losses

inline double hinge(double margin, double negative, double positive) {
  return std::max(0.0, margin + negative - positive);
}

namespace detail {

// Cosine of (W a, W b) and its gradient with respect to W.
inline double cosine_with_gradient(const Matrix& w, const Vector& a, const Vector& b, Matrix* grad) {
  const Vector u = w * a;
  const Vector v = w * b;
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw DataError("zero-norm projected vector");
  const double c = u.dot(v) / (nu * nv);
  if (grad != nullptr) {
    const Vector du = v / (nu * nv) - c * u / (nu * nu);
    const Vector dv = u / (nu * nv) - c * v / (nv * nv);
    *grad = du * a.transpose() + dv * b.transpose();
  }
  return c;
}

}  // namespace detail

struct ContrastiveBatch {
  std::string anchor;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  double margin = 0.1;
};

struct TopicLoss {
  double loss = 0.0;
  Matrix grad;  // d loss / d topic weight
};

inline void check_batch(const ContrastiveBatch& batch) {
  if (batch.positives.empty() || batch.negatives.empty()) {
    throw DataError("contrastive batch for '" + batch.anchor + "' needs positives and negatives");
  }
  for (const auto& p : batch.positives) {
    if (std::find(batch.negatives.begin(), batch.negatives.end(), p) != batch.negatives.end()) {
      throw DataError("contrastive batch for '" + batch.anchor + "': '" + p + "' is both positive and negative");
    }
  }
}

// Topic-head loss: sum over (positive, negative) pairs of
// max(0, margin + e- - e+), with e = cosine of projected anchor and sample.
inline TopicLoss topic_contrastive_loss(const ContrastiveBatch& batch, const ProjectionHead& topic_head,
                                        const EmbeddingStore& store) {
  check_batch(batch);
  const Matrix& w = topic_head.weight;
  const Vector& anchor = store.at(batch.anchor);
  std::vector<double> pos_sim, neg_sim;
  std::vector<Matrix> pos_grad, neg_grad;
  for (const auto& key : batch.positives) {
    Matrix g;
    pos_sim.push_back(detail::cosine_with_gradient(w, anchor, store.at(key), &g));
    pos_grad.push_back(std::move(g));
  }
  for (const auto& key : batch.negatives) {
    Matrix g;
    neg_sim.push_back(detail::cosine_with_gradient(w, anchor, store.at(key), &g));
    neg_grad.push_back(std::move(g));
  }
  TopicLoss out{0.0, Matrix::Zero(w.rows(), w.cols())};
  std::vector<int> pos_active(pos_sim.size(), 0), neg_active(neg_sim.size(), 0);
  for (std::size_t p = 0; p < pos_sim.size(); ++p) {
    for (std::size_t q = 0; q < neg_sim.size(); ++q) {
      const double h = hinge(batch.margin, neg_sim[q], pos_sim[p]);
      if (h > 0.0) {
        out.loss += h;
        ++pos_active[p];
        ++neg_active[q];
      }
    }
  }
  for (std::size_t p = 0; p < pos_sim.size(); ++p) out.grad -= pos_active[p] * pos_grad[p];
  for (std::size_t q = 0; q < neg_sim.size(); ++q) out.grad += neg_active[q] * neg_grad[q];
  return out;
}

// An adjacent utterance pair, by embedding key.
struct UtterancePair {
  std::string first;
  std::string second;
};

struct PairBatch {
  UtterancePair anchor;
  std::vector<UtterancePair> positives;
  std::vector<UtterancePair> negatives;
  double margin = 0.1;
};

struct PairLoss {
  double loss = 0.0;
  Matrix grad_topic;
  Matrix grad_coherence;
};

namespace detail {

// Mean of the unit topic representations of a pair, with the Jacobian pieces
// needed to push a gradient on the mean back onto the topic weight.
struct PairMean {
  Vector mean;
  Vector e1, e2;  // raw embeddings
  Vector h1, h2;  // unit projections
  double n1 = 0.0, n2 = 0.0;  // projection norms

  PairMean(const Matrix& w, const Vector& a, const Vector& b) : e1(a), e2(b) {
    const Vector u1 = w * a;
    const Vector u2 = w * b;
    n1 = u1.norm();
    n2 = u2.norm();
    if (n1 == 0.0 || n2 == 0.0) throw DataError("zero-norm projected vector");
    h1 = u1 / n1;
    h2 = u2 / n2;
    mean = (h1 + h2) / 2.0;
  }

  // Adds (d s / d mean) pulled back to d s / d W into `grad`, scaled.
  void backprop(const Vector& d_mean, double scale, Matrix& grad) const {
    const Vector dh = d_mean / 2.0;
    const Vector du1 = (dh - h1 * h1.dot(dh)) / n1;
    const Vector du2 = (dh - h2 * h2.dot(dh)) / n2;
    grad += scale * (du1 * e1.transpose() + du2 * e2.transpose());
  }
};

struct RelevanceTerm {
  double value = 0.0;  // r = sim(mean_anchor, mean_pair) + coherence(pair)
  Matrix grad_topic;
  Matrix grad_coherence;
};

inline RelevanceTerm relevance(const PairMean& anchor, const Matrix& wt, const Matrix& wc,
                               const Vector& a, const Vector& b) {
  const PairMean other(wt, a, b);
  const double na = anchor.mean.norm();
  const double no = other.mean.norm();
  if (na == 0.0 || no == 0.0) throw DataError("zero-norm pair representation");
  const double s = anchor.mean.dot(other.mean) / (na * no);
  RelevanceTerm term;
  term.grad_topic = Matrix::Zero(wt.rows(), wt.cols());
  const Vector d_anchor = other.mean / (na * no) - s * anchor.mean / (na * na);
  const Vector d_other = anchor.mean / (na * no) - s * other.mean / (no * no);
  anchor.backprop(d_anchor, 1.0, term.grad_topic);
  other.backprop(d_other, 1.0, term.grad_topic);
  const double c = cosine_with_gradient(wc, a, b, &term.grad_coherence);
  term.value = s + c;
  return term;
}

}  // namespace detail

// Pair loss: sum over (positive pair, negative pair) of max(0, margin + r- - r+)
// where r = cosine of mean topic representations plus the compared pair's
// coherence score.
inline PairLoss pair_contrastive_loss(const PairBatch& batch, const ProjectionHead& topic_head,
                                      const ProjectionHead& coherence_head, const EmbeddingStore& store) {
  if (batch.positives.empty() || batch.negatives.empty()) {
    throw DataError("pair batch for '" + batch.anchor.first + "' needs positive and negative pairs");
  }
  const Matrix& wt = topic_head.weight;
  const Matrix& wc = coherence_head.weight;
  const detail::PairMean anchor(wt, store.at(batch.anchor.first), store.at(batch.anchor.second));
  std::vector<detail::RelevanceTerm> pos, neg;
  for (const auto& p : batch.positives) pos.push_back(detail::relevance(anchor, wt, wc, store.at(p.first), store.at(p.second)));
  for (const auto& p : batch.negatives) neg.push_back(detail::relevance(anchor, wt, wc, store.at(p.first), store.at(p.second)));

  PairLoss out{0.0, Matrix::Zero(wt.rows(), wt.cols()), Matrix::Zero(wc.rows(), wc.cols())};
  std::vector<int> pos_active(pos.size(), 0), neg_active(neg.size(), 0);
  for (std::size_t p = 0; p < pos.size(); ++p) {
    for (std::size_t q = 0; q < neg.size(); ++q) {
      const double h = hinge(batch.margin, neg[q].value, pos[p].value);
      if (h > 0.0) {
        out.loss += h;
        ++pos_active[p];
        ++neg_active[q];
      }
    }
  }
  for (std::size_t p = 0; p < pos.size(); ++p) {
    out.grad_topic -= pos_active[p] * pos[p].grad_topic;
    out.grad_coherence -= pos_active[p] * pos[p].grad_coherence;
  }
  for (std::size_t q = 0; q < neg.size(); ++q) {
    out.grad_topic += neg_active[q] * neg[q].grad_topic;
    out.grad_coherence += neg_active[q] * neg[q].grad_coherence;
  }
  return out;
}

// mean(L1) + mean(L2).
inline double combined_loss(std::span<const double> topic_losses, std::span<const double> pair_losses) {
  if (topic_losses.empty() || pair_losses.empty()) throw DataError("combined loss needs N > 0 and M > 0");
  double l1 = 0.0, l2 = 0.0;
  for (double v : topic_losses) l1 += v;
  for (double v : pair_losses) l2 += v;
  return l1 / static_cast<double>(topic_losses.size()) + l2 / static_cast<double>(pair_losses.size());
}

struct CombinedLoss {
  double loss = 0.0;
  std::vector<double> topic_losses;
  std::vector<double> pair_losses;
  Matrix grad_topic;
  Matrix grad_coherence;
};

inline CombinedLoss combined_loss(const std::vector<ContrastiveBatch>& topic_batches,
                                  const std::vector<PairBatch>& pair_batches, const ProjectionHead& topic_head,
                                  const ProjectionHead& coherence_head, const EmbeddingStore& store,
                                  std::size_t jobs = 1) {
  if (topic_batches.empty() || pair_batches.empty()) throw DataError("combined loss needs N > 0 and M > 0");
  // Fixed chunking keeps the floating-point reduction order independent of `jobs`.
  constexpr std::size_t kChunks = 16;
  const Matrix& wt = topic_head.weight;
  const Matrix& wc = coherence_head.weight;
  CombinedLoss out;
  out.topic_losses.resize(topic_batches.size());
  out.pair_losses.resize(pair_batches.size());
  std::vector<Matrix> gt(2 * kChunks, Matrix::Zero(wt.rows(), wt.cols()));
  std::vector<Matrix> gc(kChunks, Matrix::Zero(wc.rows(), wc.cols()));
  const double inv_n = 1.0 / static_cast<double>(topic_batches.size());
  const double inv_m = 1.0 / static_cast<double>(pair_batches.size());
  parallel_for(2 * kChunks, jobs, [&](std::size_t chunk) {
    if (chunk < kChunks) {
      const std::size_t n = topic_batches.size();
      for (std::size_t i = chunk * n / kChunks; i < (chunk + 1) * n / kChunks; ++i) {
        TopicLoss l = topic_contrastive_loss(topic_batches[i], topic_head, store);
        out.topic_losses[i] = l.loss;
        gt[chunk] += inv_n * l.grad;
      }
    } else {
      const std::size_t c = chunk - kChunks;
      const std::size_t m = pair_batches.size();
      for (std::size_t i = c * m / kChunks; i < (c + 1) * m / kChunks; ++i) {
        PairLoss l = pair_contrastive_loss(pair_batches[i], topic_head, coherence_head, store);
        out.pair_losses[i] = l.loss;
        gt[chunk] += inv_m * l.grad_topic;
        gc[c] += inv_m * l.grad_coherence;
      }
    }
  });
  out.loss = combined_loss(out.topic_losses, out.pair_losses);
  out.grad_topic = Matrix::Zero(wt.rows(), wt.cols());
  out.grad_coherence = Matrix::Zero(wc.rows(), wc.cols());
  for (const auto& g : gt) out.grad_topic += g;
  for (const auto& g : gc) out.grad_coherence += g;
  return out;
}

// ---------------------------------------------------------------------------
// Two-stage adaptation

struct AdaptConfig {
  double margin = 0.1;
  int window = 2;
  int negatives_per_positive = 3;
  double learning_rate = 5e-6;
  int epochs = 3;
  std::size_t output_dim = 0;  // 0: same as the embedding dimension
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
};

struct EpochRecord {
  int stage = 1;
  int epoch = 0;
  double loss = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::vector<std::string> warnings;

  // Whether the per-stage epoch losses never went up. Reported, not enforced.
  bool monotone() const {
    for (std::size_t i = 1; i < epochs.size(); ++i) {
      if (epochs[i].stage == epochs[i - 1].stage && epochs[i].loss > epochs[i - 1].loss) return false;
    }
    return true;
  }
};

struct AdaptResult {
  ProjectionHead topic;
  ProjectionHead coherence;
  TrainingLog log;
};

struct AdaptBatches {
  std::vector<ContrastiveBatch> topic;
  std::vector<PairBatch> pairs;
};

// Builds contrastive batches. Positives come from a +/-window around each
// anchor, negatives from outside it (same dialogue) for the topic loss and
// from other dialogues for the pair loss. With `targets_only`, anchors are
// restricted to theme-annotated turns (pairs: either member annotated).
inline AdaptBatches build_batches(const Corpus& corpus, const AdaptConfig& config, bool targets_only, Rng& rng) {
  AdaptBatches out;
  const int w = config.window;
  const auto per_pos = static_cast<std::size_t>(std::max(1, config.negatives_per_positive));

  struct PairSlot {
    std::size_t dialogue;
    UtterancePair pair;
  };
  std::vector<PairSlot> all_pairs;
  for (std::size_t di = 0; di < corpus.size(); ++di) {
    const auto& turns = corpus.dialogues()[di].turns;
    for (std::size_t i = 0; i + 1 < turns.size(); ++i) {
      all_pairs.push_back({di, {turns[i].key(), turns[i + 1].key()}});
    }
  }

  for (std::size_t di = 0; di < corpus.size(); ++di) {
    const auto& turns = corpus.dialogues()[di].turns;
    const int n = static_cast<int>(turns.size());
    for (int i = 0; i < n; ++i) {
      if (targets_only && !turns[static_cast<std::size_t>(i)].is_target) continue;
      ContrastiveBatch batch{turns[static_cast<std::size_t>(i)].key(), {}, {}, config.margin};
      std::vector<std::string> outside;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const std::string key = turns[static_cast<std::size_t>(j)].key();
        (std::abs(j - i) <= w ? batch.positives : outside).push_back(key);
      }
      if (batch.positives.empty() || outside.empty()) continue;
      rng.shuffle(outside);
      outside.resize(std::min(outside.size(), per_pos * batch.positives.size()));
      std::sort(outside.begin(), outside.end());
      batch.negatives = std::move(outside);
      out.topic.push_back(std::move(batch));
    }

    for (int i = 0; i + 1 < n; ++i) {
      if (targets_only && !turns[static_cast<std::size_t>(i)].is_target &&
          !turns[static_cast<std::size_t>(i + 1)].is_target) {
        continue;
      }
      PairBatch batch{{turns[static_cast<std::size_t>(i)].key(), turns[static_cast<std::size_t>(i + 1)].key()},
                      {}, {}, config.margin};
      for (int j = std::max(0, i - w); j <= std::min(n - 2, i + w); ++j) {
        if (j == i) continue;
        batch.positives.push_back({turns[static_cast<std::size_t>(j)].key(), turns[static_cast<std::size_t>(j + 1)].key()});
      }
      std::vector<std::size_t> foreign;
      for (std::size_t k = 0; k < all_pairs.size(); ++k) {
        if (all_pairs[k].dialogue != di) foreign.push_back(k);
      }
      if (batch.positives.empty() || foreign.empty()) continue;
      const std::size_t want = per_pos * batch.positives.size();
      for (std::size_t k = 0; k < want; ++k) batch.negatives.push_back(all_pairs[foreign[rng.index(foreign.size())]].pair);
      out.pairs.push_back(std::move(batch));
    }
  }
  return out;
}

// Conversation-level then utterance-level adaptation of both heads by plain
// gradient descent on mean(L1) + mean(L2).
inline AdaptResult adapt(const Corpus& corpus, const EmbeddingStore& store, const AdaptConfig& config) {
  if (store.dim() == 0) throw DataError("adapt: empty embedding store");
  const std::size_t d_out = config.output_dim == 0 ? store.dim() : config.output_dim;
  AdaptResult result{ProjectionHead::identity(store.dim(), d_out, HeadRole::topic),
                     ProjectionHead::identity(store.dim(), d_out, HeadRole::coherence),
                     {}};
  if (config.epochs <= 0) return result;

  Rng rng(config.seed);
  for (int stage = 1; stage <= 2; ++stage) {
    const AdaptBatches batches = build_batches(corpus, config, stage == 2, rng);
    if (batches.topic.empty() || batches.pairs.empty()) {
      result.log.warnings.push_back(
          stage == 1 ? "stage 1 skipped: corpus yields no complete contrastive batches"
                     : "stage 2 skipped: no target utterances with usable batches");
      continue;
    }
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      const CombinedLoss l =
          combined_loss(batches.topic, batches.pairs, result.topic, result.coherence, store, config.jobs);
      result.log.epochs.push_back({stage, epoch, l.loss});
      result.topic.weight -= config.learning_rate * l.grad_topic;
      result.coherence.weight -= config.learning_rate * l.grad_coherence;
    }
  }
  return result;
}

}  // namespace catchtd
