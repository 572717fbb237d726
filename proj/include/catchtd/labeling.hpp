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

// Hierarchical theme generation.
//
// A cluster is split into random groups, each group is labeled, a core label
// is voted, labels irrelevant to the core are dropped, and the survivors are
// consolidated into one theme. Any PromptClient can drive it; a
// deterministic keyword client is provided for offline runs.

#include "catchtd/common.hpp"
#include "catchtd/corpus.hpp"
#include "catchtd/prompts.hpp"

#include <atomic>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace catchtd {

// Implementations must be safe to call from several threads at once.
class PromptClient {
 public:
  virtual ~PromptClient() = default;
  virtual std::string generate(const PromptRequest& request) = 0;
};

// Trims and collapses internal whitespace.
inline std::string normalize_label(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

// Comparison key for voting: case-folded, punctuation stripped, normalized.
inline std::string vote_key(std::string_view label) {
  std::string folded;
  for (char ch : label) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::ispunct(c)) continue;
    folded.push_back(static_cast<char>(std::tolower(c)));
  }
  return normalize_label(folded);
}

// Asks until `parse` accepts a response, at most 1 + max_retries times.
template <typename T>
T ask(PromptClient& client, const PromptRequest& request, int max_retries,
      const std::function<std::optional<T>(const std::string&)>& parse) {
  std::string last;
  for (int attempt = 0; attempt <= std::max(0, max_retries); ++attempt) {
    last = client.generate(request);
    if (auto parsed = parse(last)) return *parsed;
  }
  throw ClientError(to_string(request.kind) + ": unusable response after " + std::to_string(max_retries + 1) +
                    " attempt(s): '" + last + "'");
}

inline std::optional<bool> parse_yes_no(const std::string& response) {
  const std::string key = vote_key(response);
  const std::string first = key.substr(0, key.find(' '));
  if (first == "yes" || first == "true") return true;
  if (first == "no" || first == "false") return false;
  return std::nullopt;
}

inline std::optional<std::string> parse_nonempty_label(const std::string& response) {
  std::string label = normalize_label(response);
  if (label.empty()) return std::nullopt;
  return label;
}

// ---------------------------------------------------------------------------

struct LabelCandidate {
  int group = 0;
  int cluster = 0;
  std::string text;      // normalized
  std::string response;  // verbatim client output
};

struct ThemeLabel {
  int cluster = 0;
  std::string text;
  std::string core;
  std::vector<std::string> candidates;
  std::vector<std::string> cleaned;
};

// Random permutation under `seed`, chunked into groups of `group_size` (the
// last group may be smaller).
template <typename T>
std::vector<std::vector<T>> split_groups(std::vector<T> members, std::size_t group_size, std::uint64_t seed) {
  if (group_size == 0) throw ConfigError("group size must be >= 1");
  if (members.empty()) throw DataError("cannot split an empty cluster");
  Rng rng(seed);
  rng.shuffle(members);
  std::vector<std::vector<T>> groups;
  for (std::size_t i = 0; i < members.size(); i += group_size) {
    const std::size_t end = std::min(members.size(), i + group_size);
    groups.emplace_back(members.begin() + static_cast<long>(i), members.begin() + static_cast<long>(end));
  }
  return groups;
}

inline LabelCandidate label_group(const std::vector<std::string>& texts, PromptClient& client, int max_retries = 3,
                                  int group = 0, int cluster = 0) {
  if (texts.empty()) throw DataError("cannot label an empty group");
  LabelCandidate out{group, cluster, {}, {}};
  out.text = ask<std::string>(client, {PromptKind::label, texts}, max_retries, [&](const std::string& r) {
    out.response = r;
    return parse_nonempty_label(r);
  });
  return out;
}

// Most frequent label by vote key. Ties go to the client when one is given,
// otherwise to the lexicographically smallest key. Returns the first-seen
// spelling of the winner.
inline std::string vote_core(const std::vector<std::string>& candidates, PromptClient* client = nullptr,
                             int max_retries = 3) {
  if (candidates.empty()) throw DataError("vote_core needs at least one candidate");
  std::map<std::string, int> counts;
  std::map<std::string, std::string> spelling;
  std::vector<std::string> order;
  for (const auto& c : candidates) {
    const std::string key = vote_key(c);
    if (counts[key]++ == 0) {
      spelling[key] = normalize_label(c);
      order.push_back(key);
    }
  }
  int best = 0;
  for (const auto& [key, n] : counts) best = std::max(best, n);
  std::vector<std::string> tied;
  for (const auto& key : order) {
    if (counts[key] == best) tied.push_back(key);
  }
  if (tied.size() == 1) return spelling[tied.front()];
  if (client == nullptr) return spelling[*std::min_element(tied.begin(), tied.end())];

  std::vector<std::string> options;
  for (const auto& key : tied) options.push_back(spelling[key]);
  return ask<std::string>(*client, {PromptKind::vote_core, options}, max_retries,
                          [&](const std::string& r) -> std::optional<std::string> {
                            const std::string key = vote_key(r);
                            for (const auto& t : tied) {
                              if (t == key) return spelling[t];
                            }
                            return std::nullopt;
                          });
}

// Keeps candidates the client judges relevant to `core`; copies of the core
// are kept without asking. Order is preserved.
inline std::vector<std::string> filter_relevant(const std::vector<std::string>& candidates, const std::string& core,
                                                PromptClient& client, int max_retries = 3) {
  const std::string core_key = vote_key(core);
  std::vector<std::string> kept;
  for (const auto& c : candidates) {
    if (vote_key(c) == core_key ||
        ask<bool>(client, {PromptKind::is_relevant, {c, core}}, max_retries, parse_yes_no)) {
      kept.push_back(c);
    }
  }
  return kept;
}

inline std::string conclude(const std::vector<std::string>& cleaned, PromptClient& client, int max_retries = 3) {
  if (cleaned.empty()) throw DataError("conclude needs a non-empty label set");
  return ask<std::string>(client, {PromptKind::conclude, cleaned}, max_retries, parse_nonempty_label);
}

struct LabelConfig {
  std::size_t group_size = 25;
  bool flat = false;  // one Label call over the whole cluster, no hierarchy
  int max_retries = 3;
  std::size_t parallelism = 4;
  std::uint64_t seed = 0;
};

inline ThemeLabel generate_theme(int cluster, const std::vector<std::string>& member_texts, PromptClient& client,
                                 const LabelConfig& config) {
  if (member_texts.empty()) throw DataError("cluster " + std::to_string(cluster) + " is empty");
  ThemeLabel theme;
  theme.cluster = cluster;
  if (config.flat) {
    const LabelCandidate c = label_group(member_texts, client, config.max_retries, 0, cluster);
    theme.text = theme.core = c.text;
    theme.candidates = theme.cleaned = {c.text};
    return theme;
  }
  const auto groups = split_groups(member_texts, config.group_size, config.seed + static_cast<std::uint64_t>(cluster));
  std::vector<LabelCandidate> candidates(groups.size());
  parallel_for(groups.size(), config.parallelism, [&](std::size_t g) {
    candidates[g] = label_group(groups[g], client, config.max_retries, static_cast<int>(g), cluster);
  });
  for (const auto& c : candidates) theme.candidates.push_back(c.text);
  theme.core = vote_core(theme.candidates, &client, config.max_retries);
  theme.cleaned = filter_relevant(theme.candidates, theme.core, client, config.max_retries);
  theme.text = conclude(theme.cleaned, client, config.max_retries);
  return theme;
}

// Labels every cluster, `jobs` clusters at a time. Output order follows input.
inline std::vector<ThemeLabel> generate_themes(const std::vector<std::vector<std::string>>& clusters,
                                               PromptClient& client, const LabelConfig& config, std::size_t jobs = 1) {
  std::vector<ThemeLabel> out(clusters.size());
  parallel_for(clusters.size(), jobs, [&](std::size_t c) {
    out[c] = generate_theme(static_cast<int>(c), clusters[c], client, config);
  });
  return out;
}

inline json to_json(const ThemeLabel& t) {
  return {{"cluster", t.cluster}, {"theme", t.text}, {"core", t.core}, {"candidates", t.candidates}, {"cleaned", t.cleaned}};
}

// ---------------------------------------------------------------------------
// Deterministic offline client.

// Label: the most frequent keyword label among the first `context_limit`
// inputs (inputs matching no keyword count as `fallback`). VoteCore and
// Conclude: the most frequent input. IsRelevant: vote-key equality. All ties
// go to the lexicographically smallest label.
class KeywordMockClient : public PromptClient {
 public:
  struct Entry {
    std::string keyword;
    std::string label;
  };

  KeywordMockClient(std::vector<Entry> table, std::string fallback = "discuss other topic", std::size_t context_limit = 0)
      : table_(std::move(table)), fallback_(std::move(fallback)), context_limit_(context_limit) {
    for (auto& e : table_) e.keyword = lower(e.keyword);
  }

  // Copies the table; the call counter starts over.
  KeywordMockClient(const KeywordMockClient& other)
      : table_(other.table_), fallback_(other.fallback_), context_limit_(other.context_limit_) {}

  static KeywordMockClient from_json(const json& spec) {
    std::vector<Entry> table;
    for (const auto& e : spec.at("keywords")) table.push_back({e.at("keyword").get<std::string>(), e.at("label").get<std::string>()});
    return KeywordMockClient(std::move(table), spec.value("fallback", std::string("discuss other topic")),
                             spec.value("context_limit", std::size_t{0}));
  }

  static KeywordMockClient load(const std::string& path) {
    auto in = detail::open_input(path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ConfigError("mock table '" + path + "': " + e.what());
    }
  }

  std::string generate(const PromptRequest& request) override {
    calls_.fetch_add(1);
    switch (request.kind) {
      case PromptKind::label: {
        std::vector<std::string> labels;
        const std::size_t n = context_limit_ == 0 ? request.items.size() : std::min(context_limit_, request.items.size());
        for (std::size_t i = 0; i < n; ++i) labels.push_back(lookup(request.items[i]));
        return majority(labels);
      }
      case PromptKind::vote_core:
      case PromptKind::conclude:
        return majority(request.items);
      case PromptKind::is_relevant:
        return request.items.size() == 2 && vote_key(request.items[0]) == vote_key(request.items[1]) ? "yes" : "no";
    }
    return {};
  }

  std::string lookup(const std::string& text) const {
    const std::string t = lower(text);
    for (const auto& e : table_) {
      if (t.find(e.keyword) != std::string::npos) return e.label;
    }
    return fallback_;
  }

  std::size_t calls() const { return calls_.load(); }

 private:
  static std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  }

  static std::string majority(const std::vector<std::string>& labels) {
    if (labels.empty()) return {};
    std::map<std::string, int> counts;
    for (const auto& l : labels) ++counts[normalize_label(l)];
    auto best = counts.begin();
    for (auto it = counts.begin(); it != counts.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    return best->first;
  }

  std::vector<Entry> table_;
  std::string fallback_;
  std::size_t context_limit_ = 0;
  std::atomic<std::size_t> calls_{0};
};

}  // namespace catchtd
