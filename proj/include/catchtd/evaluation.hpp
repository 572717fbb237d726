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

// Offline metrics: Hungarian clustering accuracy, NMI, ROUGE-1/2/L, label
// cosine similarity, plus the FCC perturbation used for robustness analysis.
// Every function here is pure.

#include "catchtd/common.hpp"
#include "catchtd/corpus.hpp"

#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace catchtd {

// Minimum-cost perfect assignment on a square cost matrix (row-major, n x n).
// Returns the column assigned to each row. O(n^3) shortest augmenting path
// with dual potentials.
inline std::vector<int> hungarian_min_cost(const std::vector<double>& cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("hungarian: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col0] = true;
      const std::size_t r = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double cur = cost[(r - 1) * n + (c - 1)] - u[r] - v[c];
        if (cur < minv[c]) {
          minv[c] = cur;
          way[c] = col0;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[match[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<int> assignment(n, -1);
  for (std::size_t c = 1; c <= n; ++c) {
    if (match[c] != 0) assignment[match[c] - 1] = static_cast<int>(c - 1);
  }
  return assignment;
}

namespace detail {

inline std::vector<int> dense_labels(std::span<const int> labels, int* count) {
  std::map<int, int> remap;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(remap.emplace(l, static_cast<int>(remap.size())).first->second);
  *count = static_cast<int>(remap.size());
  return out;
}

struct Contingency {
  std::vector<std::vector<double>> table;  // [pred][gold]
  std::vector<double> pred_totals;
  std::vector<double> gold_totals;
  double n = 0.0;
};

inline Contingency contingency(std::span<const int> pred, std::span<const int> gold) {
  if (pred.size() != gold.size()) throw DataError("partitions cover different item sets");
  if (pred.empty()) throw DataError("partitions are empty");
  int kp = 0, kg = 0;
  const std::vector<int> p = dense_labels(pred, &kp);
  const std::vector<int> g = dense_labels(gold, &kg);
  Contingency c;
  c.table.assign(static_cast<std::size_t>(kp), std::vector<double>(static_cast<std::size_t>(kg), 0.0));
  c.pred_totals.assign(static_cast<std::size_t>(kp), 0.0);
  c.gold_totals.assign(static_cast<std::size_t>(kg), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    c.table[static_cast<std::size_t>(p[i])][static_cast<std::size_t>(g[i])] += 1.0;
    c.pred_totals[static_cast<std::size_t>(p[i])] += 1.0;
    c.gold_totals[static_cast<std::size_t>(g[i])] += 1.0;
  }
  c.n = static_cast<double>(p.size());
  return c;
}

}  // namespace detail

// Fraction of items matched under the best one-to-one cluster-to-class map.
inline double clustering_accuracy(std::span<const int> pred, std::span<const int> gold) {
  const detail::Contingency c = detail::contingency(pred, gold);
  const std::size_t m = std::max(c.pred_totals.size(), c.gold_totals.size());
  double max_count = 0.0;
  for (const auto& row : c.table) {
    for (double v : row) max_count = std::max(max_count, v);
  }
  std::vector<double> cost(m * m, max_count);  // padding rows/cols match nothing
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    for (std::size_t j = 0; j < c.table[i].size(); ++j) cost[i * m + j] = max_count - c.table[i][j];
  }
  const std::vector<int> match = hungarian_min_cost(cost, m);
  double matched = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    const auto j = static_cast<std::size_t>(match[i]);
    if (j < c.gold_totals.size()) matched += c.table[i][j];
  }
  return matched / c.n;
}

enum class NmiNormalization { arithmetic, geometric, min, max };

inline double nmi(std::span<const int> pred, std::span<const int> gold,
                  NmiNormalization norm = NmiNormalization::arithmetic) {
  const detail::Contingency c = detail::contingency(pred, gold);
  auto entropy = [&](const std::vector<double>& totals) {
    double h = 0.0;
    for (double t : totals) {
      if (t > 0.0) h -= (t / c.n) * std::log(t / c.n);
    }
    return h;
  };
  const double hp = entropy(c.pred_totals);
  const double hg = entropy(c.gold_totals);
  if (hp == 0.0 && hg == 0.0) return 1.0;
  if (hp == 0.0 || hg == 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < c.table.size(); ++i) {
    for (std::size_t j = 0; j < c.table[i].size(); ++j) {
      const double nij = c.table[i][j];
      if (nij > 0.0) mi += (nij / c.n) * std::log(nij * c.n / (c.pred_totals[i] * c.gold_totals[j]));
    }
  }
  double denom = 0.0;
  switch (norm) {
    case NmiNormalization::arithmetic: denom = 0.5 * (hp + hg); break;
    case NmiNormalization::geometric: denom = std::sqrt(hp * hg); break;
    case NmiNormalization::min: denom = std::min(hp, hg); break;
    case NmiNormalization::max: denom = std::max(hp, hg); break;
  }
  return std::clamp(mi / denom, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// ROUGE

// Lowercased whitespace tokens with ASCII punctuation removed; tokens that
// end up empty are dropped.
inline std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (!std::ispunct(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
};

namespace detail {

inline double f1(double overlap, double cand_total, double ref_total) {
  if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
  // 2pr / (p + r), reduced to one rounding.
  return 2.0 * overlap / (cand_total + ref_total);
}

inline double rouge_n(const std::vector<std::string>& cand, const std::vector<std::string>& ref, std::size_t n) {
  auto grams = [n](const std::vector<std::string>& t) {
    std::map<std::vector<std::string>, int> counts;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++counts[std::vector<std::string>(t.begin() + static_cast<long>(i), t.begin() + static_cast<long>(i + n))];
    return counts;
  };
  const auto c = grams(cand);
  const auto r = grams(ref);
  double overlap = 0.0, ct = 0.0, rt = 0.0;
  for (const auto& [g, k] : c) {
    ct += k;
    if (auto it = r.find(g); it != r.end()) overlap += std::min(k, it->second);
  }
  for (const auto& [g, k] : r) rt += k;
  return f1(overlap, ct, rt);
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace detail

// F1 variants of ROUGE-1, ROUGE-2 and ROUGE-L (LCS).
inline RougeScores rouge_scores(std::string_view candidate, std::string_view reference) {
  const auto c = rouge_tokens(candidate);
  const auto r = rouge_tokens(reference);
  RougeScores s;
  s.rouge1 = detail::rouge_n(c, r, 1);
  s.rouge2 = detail::rouge_n(c, r, 2);
  s.rougeL = detail::f1(static_cast<double>(detail::lcs_length(c, r)), static_cast<double>(c.size()),
                        static_cast<double>(r.size()));
  return s;
}

inline double label_cos_sim(const std::string& candidate, const std::string& reference, const EmbeddingStore& labels) {
  const Vector* a = labels.find(candidate);
  const Vector* b = labels.find(reference);
  if (a == nullptr) throw DataError("missing label embedding for '" + candidate + "'");
  if (b == nullptr) throw DataError("missing label embedding for '" + reference + "'");
  return cosine(*a, *b);
}

// ---------------------------------------------------------------------------
// Run-level report

// Utterance-keyed clustering with a label per cluster.
struct LabeledClustering {
  std::map<std::string, int> assignment;
  std::map<int, std::string> themes;
};

// Gold partition of the annotated target utterances; cluster ids follow the
// sorted theme strings.
inline LabeledClustering gold_clustering(const Corpus& corpus) {
  std::set<std::string> names;
  for (const Utterance* u : corpus.targets()) {
    if (u->gold_theme) names.insert(*u->gold_theme);
  }
  LabeledClustering gold;
  std::map<std::string, int> id;
  for (const auto& name : names) {
    id.emplace(name, static_cast<int>(id.size()));
    gold.themes.emplace(id[name], name);
  }
  for (const Utterance* u : corpus.targets()) {
    if (u->gold_theme) gold.assignment.emplace(u->key(), id[*u->gold_theme]);
  }
  return gold;
}

struct MetricReport {
  double acc = 0.0;
  double nmi = 0.0;
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  std::optional<double> cos_sim;
  std::optional<double> llm_score;  // reserved for an external judge
  std::size_t n_utterances = 0;
  std::size_t n_clusters_pred = 0;
  std::size_t n_clusters_gold = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["acc"] = acc;
    j["nmi"] = nmi;
    j["rouge1"] = rouge1;
    j["rouge2"] = rouge2;
    j["rougeL"] = rougeL;
    j["cos_sim"] = cos_sim ? nlohmann::ordered_json(*cos_sim) : nlohmann::ordered_json(nullptr);
    j["llm_score"] = llm_score ? nlohmann::ordered_json(*llm_score) : nlohmann::ordered_json(nullptr);
    j["n_utterances"] = n_utterances;
    j["n_clusters_pred"] = n_clusters_pred;
    j["n_clusters_gold"] = n_clusters_gold;
    return j;
  }
};

// Scores a prediction over the gold-annotated utterances: clustering metrics
// on the partition, ROUGE and cosine on each utterance's cluster theme versus
// its gold theme (averaged).
inline MetricReport evaluate_run(const LabeledClustering& pred, const LabeledClustering& gold,
                                 const EmbeddingStore* label_store = nullptr,
                                 NmiNormalization norm = NmiNormalization::arithmetic) {
  std::vector<std::string> missing;
  for (const auto& [key, cluster] : gold.assignment) {
    if (!pred.assignment.count(key)) missing.push_back(key);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& k : missing) list += (list.empty() ? "" : ", ") + k;
    throw DataError("predictions miss " + std::to_string(missing.size()) + " gold utterance(s): " + list);
  }
  if (gold.assignment.empty()) throw DataError("no gold-annotated target utterances to evaluate");

  std::vector<int> p, g;
  MetricReport report;
  double cos_total = 0.0;
  std::set<int> pred_clusters, gold_clusters;
  for (const auto& [key, gold_cluster] : gold.assignment) {
    const int pred_cluster = pred.assignment.at(key);
    p.push_back(pred_cluster);
    g.push_back(gold_cluster);
    pred_clusters.insert(pred_cluster);
    gold_clusters.insert(gold_cluster);
    const auto pt = pred.themes.find(pred_cluster);
    if (pt == pred.themes.end()) throw DataError("no theme for predicted cluster " + std::to_string(pred_cluster));
    const std::string& gold_theme = gold.themes.at(gold_cluster);
    const RougeScores r = rouge_scores(pt->second, gold_theme);
    report.rouge1 += r.rouge1;
    report.rouge2 += r.rouge2;
    report.rougeL += r.rougeL;
    if (label_store != nullptr) cos_total += label_cos_sim(pt->second, gold_theme, *label_store);
  }
  const double n = static_cast<double>(p.size());
  report.acc = clustering_accuracy(p, g);
  report.nmi = nmi(p, g, norm);
  report.rouge1 /= n;
  report.rouge2 /= n;
  report.rougeL /= n;
  if (label_store != nullptr) report.cos_sim = cos_total / n;
  report.n_utterances = p.size();
  report.n_clusters_pred = pred_clusters.size();
  report.n_clusters_gold = gold_clusters.size();
  return report;
}

// ---------------------------------------------------------------------------
// FCC perturbation

// Keeps a fraction `correct` of the gold assignment: exactly
// round((1 - correct) * n) items, chosen uniformly, move to a uniformly chosen
// different cluster.
inline std::vector<int> fcc_perturb(std::span<const int> gold, double correct, std::uint64_t seed) {
  if (!(correct >= 0.0 && correct <= 1.0)) throw ConfigError("fcc fraction must lie in [0, 1]");
  std::vector<int> out(gold.begin(), gold.end());
  if (correct == 1.0) return out;
  std::vector<int> clusters(gold.begin(), gold.end());
  std::sort(clusters.begin(), clusters.end());
  clusters.erase(std::unique(clusters.begin(), clusters.end()), clusters.end());
  if (clusters.size() < 2) throw DataError("fcc_perturb: a single gold cluster leaves nowhere to move items");
  const auto moves = static_cast<std::size_t>(std::llround((1.0 - correct) * static_cast<double>(gold.size())));
  Rng rng(seed);
  std::vector<std::size_t> order(gold.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  for (std::size_t m = 0; m < moves; ++m) {
    const std::size_t item = order[m];
    std::size_t pick = rng.index(clusters.size() - 1);
    // Skip over the item's own cluster.
    const auto own = static_cast<std::size_t>(std::lower_bound(clusters.begin(), clusters.end(), gold[item]) - clusters.begin());
    if (pick >= own) ++pick;
    out[item] = clusters[pick];
  }
  return out;
}

}  // namespace catchtd
