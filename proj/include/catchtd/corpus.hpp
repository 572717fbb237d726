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

// Dialogue corpora, preference annotations and precomputed embeddings.
// Everything here is loaded once and then treated as immutable.

#include "catchtd/common.hpp"

#include <json.hpp>

#include <fstream>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace catchtd {

using json = nlohmann::json;

// Canonical join key shared by every module.
inline std::string utterance_key(std::string_view dialogue_id, int turn_index) {
  return std::string(dialogue_id) + ":" + std::to_string(turn_index);
}

struct UtteranceRef {
  std::string dialogue_id;
  int turn_index = 0;

  std::string key() const { return utterance_key(dialogue_id, turn_index); }
  auto operator<=>(const UtteranceRef&) const = default;
};

struct Utterance {
  std::string dialogue_id;
  int turn_index = 0;
  std::string speaker;
  std::string text;
  bool is_target = false;
  std::optional<std::string> gold_theme;

  std::string key() const { return utterance_key(dialogue_id, turn_index); }
  UtteranceRef ref() const { return {dialogue_id, turn_index}; }
};

struct Dialogue {
  std::string dialogue_id;
  std::vector<Utterance> turns;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return std::string(s.substr(first, last - first + 1));
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return in;
}

// Calls fn(json, line_number) for every non-blank line of a JSONL stream.
template <typename Fn>
void for_each_jsonl(std::istream& in, const std::string& source, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": parse error: " + e.what());
    }
    try {
      fn(record, line_no);
    } catch (const json::exception& e) {
      throw DataError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

}  // namespace detail

class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Dialogue> dialogues) : dialogues_(std::move(dialogues)) {
    for (std::size_t i = 0; i < dialogues_.size(); ++i) {
      validate(dialogues_[i]);
      if (!index_.emplace(dialogues_[i].dialogue_id, i).second) {
        throw DataError("duplicate dialogue '" + dialogues_[i].dialogue_id + "'");
      }
    }
  }

  const std::vector<Dialogue>& dialogues() const { return dialogues_; }
  std::size_t size() const { return dialogues_.size(); }
  bool empty() const { return dialogues_.empty(); }

  const Dialogue* find(std::string_view dialogue_id) const {
    auto it = index_.find(std::string(dialogue_id));
    return it == index_.end() ? nullptr : &dialogues_[it->second];
  }

  const Utterance* find(const UtteranceRef& ref) const {
    const Dialogue* d = find(ref.dialogue_id);
    if (d == nullptr || ref.turn_index < 0 ||
        ref.turn_index >= static_cast<int>(d->turns.size())) {
      return nullptr;
    }
    return &d->turns[static_cast<std::size_t>(ref.turn_index)];
  }

  // Target utterances in corpus order.
  std::vector<const Utterance*> targets() const {
    std::vector<const Utterance*> out;
    for (const auto& d : dialogues_) {
      for (const auto& u : d.turns) {
        if (u.is_target) out.push_back(&u);
      }
    }
    return out;
  }

 private:
  static void validate(Dialogue& d) {
    if (d.turns.empty()) throw DataError("dialogue '" + d.dialogue_id + "' has no turns");
    std::sort(d.turns.begin(), d.turns.end(),
              [](const Utterance& a, const Utterance& b) { return a.turn_index < b.turn_index; });
    for (std::size_t i = 0; i < d.turns.size(); ++i) {
      const Utterance& u = d.turns[i];
      const std::string where = "dialogue '" + d.dialogue_id + "' turn " + std::to_string(u.turn_index);
      if (u.dialogue_id != d.dialogue_id) throw DataError(where + ": dialogue id mismatch");
      if (i > 0 && d.turns[i - 1].turn_index == u.turn_index) {
        throw DataError(where + ": duplicate turn_index");
      }
      if (u.turn_index != static_cast<int>(i)) {
        throw DataError(where + ": turn indices must be contiguous from 0");
      }
      if (u.text.empty()) throw DataError(where + ": empty text");
      if (u.gold_theme && !u.is_target) throw DataError(where + ": theme on a non-target turn");
    }
  }

  std::vector<Dialogue> dialogues_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline Corpus parse_corpus(std::istream& in, const std::string& source = "corpus") {
  std::vector<Dialogue> dialogues;
  detail::for_each_jsonl(in, source, [&](const json& record, std::size_t line_no) {
    Dialogue d;
    d.dialogue_id = record.at("dialogue_id").get<std::string>();
    for (const auto& t : record.at("turns")) {
      Utterance u;
      u.dialogue_id = d.dialogue_id;
      u.turn_index = t.at("turn_index").get<int>();
      if (u.turn_index < 0) {
        throw DataError(source + ":" + std::to_string(line_no) + ": negative turn_index in dialogue '" +
                        d.dialogue_id + "'");
      }
      u.speaker = t.value("speaker", std::string{});
      u.text = detail::trim(t.at("text").get<std::string>());
      u.is_target = t.value("is_target", false);
      if (auto it = t.find("theme"); it != t.end() && !it->is_null()) {
        u.gold_theme = it->get<std::string>();
      }
      d.turns.push_back(std::move(u));
    }
    dialogues.push_back(std::move(d));
  });
  return Corpus(std::move(dialogues));
}

inline Corpus load_corpus(const std::string& path) {
  auto in = detail::open_input(path);
  return parse_corpus(in, path);
}

// One canonical JSON line per dialogue; object keys come out sorted.
inline json to_json(const Dialogue& d) {
  json turns = json::array();
  for (const auto& u : d.turns) {
    turns.push_back({{"turn_index", u.turn_index},
                     {"speaker", u.speaker},
                     {"text", u.text},
                     {"is_target", u.is_target},
                     {"theme", u.gold_theme ? json(*u.gold_theme) : json(nullptr)}});
  }
  return {{"dialogue_id", d.dialogue_id}, {"turns", std::move(turns)}};
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& d : corpus.dialogues()) out << to_json(d).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Preferences

enum class Relation { should_link, cannot_link };

inline std::string to_string(Relation r) {
  return r == Relation::should_link ? "should_link" : "cannot_link";
}

struct PreferencePair {
  UtteranceRef a;  // a < b after loading
  UtteranceRef b;
  Relation relation = Relation::should_link;

  // Regression target for the preference model.
  double target() const { return relation == Relation::should_link ? 1.0 : 0.0; }
};

struct PreferenceSet {
  std::vector<PreferencePair> pairs;
  std::size_t should_link = 0;
  std::size_t cannot_link = 0;
};

inline PreferenceSet parse_preferences(std::istream& in, const Corpus& corpus,
                                       const std::string& source = "preferences") {
  std::map<std::pair<UtteranceRef, UtteranceRef>, Relation> seen;
  PreferenceSet result;
  detail::for_each_jsonl(in, source, [&](const json& record, std::size_t line_no) {
    const std::string where = source + ":" + std::to_string(line_no);
    auto read_ref = [&](const char* field) {
      const json& r = record.at(field);
      UtteranceRef ref{r.at("dialogue_id").get<std::string>(), r.at("turn_index").get<int>()};
      const Utterance* u = corpus.find(ref);
      if (u == nullptr) throw DataError(where + ": dangling reference " + ref.key());
      if (!u->is_target) throw DataError(where + ": " + ref.key() + " is not a target utterance");
      return ref;
    };
    UtteranceRef a = read_ref("a");
    UtteranceRef b = read_ref("b");
    if (a == b) throw DataError(where + ": self-pair " + a.key());
    if (b < a) std::swap(a, b);

    const std::string rel = record.at("relation").get<std::string>();
    Relation relation;
    if (rel == "should_link") {
      relation = Relation::should_link;
    } else if (rel == "cannot_link") {
      relation = Relation::cannot_link;
    } else {
      throw DataError(where + ": unknown relation '" + rel + "'");
    }

    auto [it, inserted] = seen.emplace(std::make_pair(a, b), relation);
    if (!inserted) {
      if (it->second != relation) {
        throw DataError(where + ": contradictory preferences for " + a.key() + " / " + b.key());
      }
      return;
    }
    result.pairs.push_back({a, b, relation});
    (relation == Relation::should_link ? result.should_link : result.cannot_link) += 1;
  });
  return result;
}

inline PreferenceSet load_preferences(const std::string& path, const Corpus& corpus) {
  auto in = detail::open_input(path);
  return parse_preferences(in, corpus, path);
}

// ---------------------------------------------------------------------------
// Embeddings

class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  // Builds a store from (key, vector) records, validating every invariant.
  explicit EmbeddingStore(std::vector<std::pair<std::string, Vector>> records,
                          std::optional<std::size_t> expected_dim = std::nullopt) {
    if (expected_dim) dim_ = *expected_dim;
    for (auto& [key, vec] : records) {
      if (dim_ == 0 && !expected_dim) dim_ = static_cast<std::size_t>(vec.size());
      if (static_cast<std::size_t>(vec.size()) != dim_) {
        throw DataError("embedding '" + key + "': dimension " + std::to_string(vec.size()) +
                        " does not match " + std::to_string(dim_));
      }
      if (!all_finite(vec)) throw DataError("embedding '" + key + "': non-finite value");
      if (!index_.emplace(key, keys_.size()).second) {
        throw DataError("embedding '" + key + "': duplicate key");
      }
      keys_.push_back(key);
      vectors_.push_back(std::move(vec));
    }
  }

  std::size_t size() const { return keys_.size(); }
  std::size_t dim() const { return dim_; }
  bool contains(const std::string& key) const { return index_.count(key) != 0; }
  const std::vector<std::string>& keys() const { return keys_; }

  const Vector* find(const std::string& key) const {
    auto it = index_.find(key);
    return it == index_.end() ? nullptr : &vectors_[it->second];
  }

  const Vector& at(const std::string& key) const {
    const Vector* v = find(key);
    if (v == nullptr) throw DataError("missing embedding for '" + key + "'");
    return *v;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> keys_;
  std::vector<Vector> vectors_;
  std::unordered_map<std::string, std::size_t> index_;
};

inline EmbeddingStore parse_embeddings(std::istream& in, std::optional<std::size_t> expected_dim = std::nullopt,
                                       const std::string& source = "embeddings") {
  std::vector<std::pair<std::string, Vector>> records;
  std::size_t dim = expected_dim.value_or(0);
  std::set<std::string> keys;
  detail::for_each_jsonl(in, source, [&](const json& record, std::size_t line_no) {
    const std::string where = source + ":" + std::to_string(line_no);
    std::string key = record.at("key").get<std::string>();
    const json& values = record.at("vector");
    Vector v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      // JSON has no NaN literal; writers commonly emit null for it.
      if (!values[i].is_number()) throw DataError(where + ": non-finite value in '" + key + "'");
      v[static_cast<Eigen::Index>(i)] = values[i].get<double>();
    }
    if (dim == 0) dim = values.size();
    if (values.size() != dim) {
      throw DataError(where + ": dimension mismatch for '" + key + "' (" + std::to_string(values.size()) +
                      " vs " + std::to_string(dim) + ")");
    }
    if (!all_finite(v)) throw DataError(where + ": non-finite value in '" + key + "'");
    if (!keys.insert(key).second) throw DataError(where + ": duplicate key '" + key + "'");
    records.emplace_back(std::move(key), std::move(v));
  });
  return EmbeddingStore(std::move(records), dim == 0 ? expected_dim : std::optional<std::size_t>(dim));
}

inline EmbeddingStore load_embeddings(const std::string& path,
                                      std::optional<std::size_t> expected_dim = std::nullopt) {
  auto in = detail::open_input(path);
  return parse_embeddings(in, expected_dim, path);
}

inline void write_embedding(std::ostream& out, const std::string& key, const Vector& v) {
  json values = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) values.push_back(v[i]);
  out << json{{"key", key}, {"vector", std::move(values)}}.dump() << '\n';
}

inline void write_embeddings(std::ostream& out, const EmbeddingStore& store) {
  for (const auto& key : store.keys()) write_embedding(out, key, store.at(key));
}

// ---------------------------------------------------------------------------

struct CoverageReport {
  std::vector<std::string> missing;         // every utterance key without a vector
  std::vector<std::string> missing_targets; // subset of `missing` that are targets

  bool complete() const { return missing.empty(); }
};

inline CoverageReport coverage_check(const Corpus& corpus, const EmbeddingStore& store) {
  CoverageReport report;
  for (const auto& d : corpus.dialogues()) {
    for (const auto& u : d.turns) {
      const std::string key = u.key();
      if (store.contains(key)) continue;
      report.missing.push_back(key);
      if (u.is_target) report.missing_targets.push_back(key);
    }
  }
  return report;
}

}  // namespace catchtd
