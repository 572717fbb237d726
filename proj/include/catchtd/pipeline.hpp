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

// Pipeline configuration and the segment -> cluster -> label -> evaluate
// stages. Each stage reads its inputs from disk and writes its artifacts to
// the output directory, so any stage can be rerun on its own.

#include "catchtd/clustering.hpp"
#include "catchtd/corpus.hpp"
#include "catchtd/evaluation.hpp"
#include "catchtd/http_client.hpp"
#include "catchtd/labeling.hpp"
#include "catchtd/segmentation.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace catchtd {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

// Artifact file names inside the output directory.
namespace artifacts {
inline constexpr const char* kSegments = "segments.jsonl";
inline constexpr const char* kSegmentEmbeddings = "segment_embeddings.jsonl";
inline constexpr const char* kAssignments = "assignments.jsonl";
inline constexpr const char* kSpMatrix = "sp_matrix.csv";
inline constexpr const char* kThemes = "themes.jsonl";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifacts

// Fixed offsets derive every stage seed from the single config seed.
namespace seed_offset {
inline constexpr std::uint64_t kSegmentation = 1;
inline constexpr std::uint64_t kClustering = 2;
inline constexpr std::uint64_t kLabeling = 3;
}  // namespace seed_offset

struct PipelineConfig {
  std::uint64_t seed = 13;
  std::size_t jobs = 1;

  struct Paths {
    std::string corpus;
    std::string preferences;
    std::string embeddings;
    std::string label_embeddings;
    std::string mock_table;
    std::string output_dir = "out";
  } paths;

  struct Segmentation {
    bool enabled = true;
    double margin = 0.1;
    int window = 2;
    int negatives_per_positive = 3;
    double learning_rate = 5e-6;
    int epochs = 3;
    std::size_t output_dim = 0;
    TilingPolicy tiling;
  } segmentation;

  struct Clustering {
    int k = 30;
    double theta_link = 0.85;
    double theta_split = 0.15;
    SpMode sp_mode = SpMode::inverted;
    Reduction reduction = Reduction::identity;
    std::size_t reduced_dim = 0;
    Aggregation aggregation = Aggregation::mean;
    bool use_preferences = true;
    bool gsp = false;
    double prm_learning_rate = PrmConfig{}.learning_rate;
    int prm_epochs = PrmConfig{}.epochs;
    int kmeans_restarts = 10;
    bool dump_sp_matrix = false;
  } clustering;

  struct Labeling {
    std::string client = "mock";  // mock | http
    std::size_t group_size = 25;
    bool flat = false;
    std::string endpoint = HttpClientConfig{}.url;
    std::string model = HttpClientConfig{}.model;
    double temperature = 0.0;
    int max_retries = 3;
    std::size_t parallelism = 4;
    int backoff_ms = 500;
  } labeling;

  struct Evaluation {
    NmiNormalization nmi_normalization = NmiNormalization::arithmetic;
  } evaluation;

  void validate() const {
    if (!(clustering.theta_split < clustering.theta_link)) throw ConfigError("theta_split must be below theta_link");
    if (clustering.theta_split < 0.0 || clustering.theta_link > 1.0) throw ConfigError("thresholds must lie in [0, 1]");
    if (clustering.k < 2) throw ConfigError("k must be >= 2");
    if (labeling.group_size < 1) throw ConfigError("group_size must be >= 1");
    if (labeling.client != "mock" && labeling.client != "http") {
      throw ConfigError("labeling.client must be 'mock' or 'http'");
    }
    if (segmentation.window < 1) throw ConfigError("window must be >= 1");
    if (segmentation.negatives_per_positive < 1) throw ConfigError("negatives_per_positive must be >= 1");
    if (segmentation.margin <= 0.0) throw ConfigError("margin must be positive");
    if (segmentation.epochs < 0 || clustering.prm_epochs < 0) throw ConfigError("epochs must be >= 0");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }

  fs::path output(const char* name) const { return fs::path(paths.output_dir) / name; }
};

// ---------------------------------------------------------------------------
// Config <-> JSON

namespace detail {

template <typename E>
struct EnumNames;

template <>
struct EnumNames<SpMode> {
  static constexpr std::pair<SpMode, const char*> values[] = {{SpMode::paper_literal, "paper_literal"},
                                                              {SpMode::inverted, "inverted"}};
};
template <>
struct EnumNames<Reduction> {
  static constexpr std::pair<Reduction, const char*> values[] = {{Reduction::identity, "identity"},
                                                                 {Reduction::pca, "pca"}};
};
template <>
struct EnumNames<Aggregation> {
  static constexpr std::pair<Aggregation, const char*> values[] = {
      {Aggregation::mean, "mean"}, {Aggregation::min, "min"}, {Aggregation::max, "max"}};
};
template <>
struct EnumNames<NmiNormalization> {
  static constexpr std::pair<NmiNormalization, const char*> values[] = {{NmiNormalization::arithmetic, "arithmetic"},
                                                                        {NmiNormalization::geometric, "geometric"},
                                                                        {NmiNormalization::min, "min"},
                                                                        {NmiNormalization::max, "max"}};
};
template <>
struct EnumNames<TilingMode> {
  static constexpr std::pair<TilingMode, const char*> values[] = {{TilingMode::depth_cutoff, "depth"},
                                                                  {TilingMode::absolute_threshold, "threshold"}};
};

template <typename E>
std::string enum_name(E value) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (v == value) return name;
  }
  return "?";
}

template <typename E>
E enum_value(const std::string& name, const std::string& field) {
  std::string options;
  for (const auto& [v, n] : EnumNames<E>::values) {
    if (name == n) return v;
    options += (options.empty() ? "" : "|") + std::string(n);
  }
  throw ConfigError(field + ": '" + name + "' is not one of " + options);
}

// Reads known keys from a section and rejects anything else.
class SectionReader {
 public:
  SectionReader(const json& root, std::string name) : name_(std::move(name)) {
    if (root.contains(name_)) {
      section_ = root.at(name_);
      if (!section_.is_object()) throw ConfigError(name_ + " must be an object");
    }
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!section_.contains(key)) return;
    try {
      out = section_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  template <typename E>
  void read_enum(const char* key, E& out) {
    std::string name = enum_name(out);
    read(key, name);
    out = enum_value<E>(name, name_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : section_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  json section_ = json::object();
  std::set<std::string> seen_;
};

}  // namespace detail

inline PipelineConfig config_from_json(const json& root) {
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  PipelineConfig c;
  static const std::set<std::string> sections = {"seed", "jobs", "paths", "segmentation", "clustering", "labeling", "evaluation"};
  for (const auto& [key, value] : root.items()) {
    if (!sections.count(key)) throw ConfigError("unknown config key " + key);
  }
  try {
    if (root.contains("seed")) c.seed = root.at("seed").get<std::uint64_t>();
    if (root.contains("jobs")) c.jobs = root.at("jobs").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("seed/jobs: ") + e.what());
  }

  detail::SectionReader paths(root, "paths");
  paths.read("corpus", c.paths.corpus);
  paths.read("preferences", c.paths.preferences);
  paths.read("embeddings", c.paths.embeddings);
  paths.read("label_embeddings", c.paths.label_embeddings);
  paths.read("mock_table", c.paths.mock_table);
  paths.read("output_dir", c.paths.output_dir);
  paths.finish();

  detail::SectionReader seg(root, "segmentation");
  seg.read("enabled", c.segmentation.enabled);
  seg.read("margin", c.segmentation.margin);
  seg.read("window", c.segmentation.window);
  seg.read("negatives_per_positive", c.segmentation.negatives_per_positive);
  seg.read("learning_rate", c.segmentation.learning_rate);
  seg.read("epochs", c.segmentation.epochs);
  seg.read("output_dim", c.segmentation.output_dim);
  seg.read_enum("tiling_mode", c.segmentation.tiling.mode);
  seg.read("threshold", c.segmentation.tiling.threshold);
  seg.finish();

  detail::SectionReader cl(root, "clustering");
  cl.read("k", c.clustering.k);
  cl.read("theta_link", c.clustering.theta_link);
  cl.read("theta_split", c.clustering.theta_split);
  cl.read_enum("sp_mode", c.clustering.sp_mode);
  cl.read_enum("reduction", c.clustering.reduction);
  cl.read("reduced_dim", c.clustering.reduced_dim);
  cl.read_enum("aggregation", c.clustering.aggregation);
  cl.read("use_preferences", c.clustering.use_preferences);
  cl.read("gsp", c.clustering.gsp);
  cl.read("prm_learning_rate", c.clustering.prm_learning_rate);
  cl.read("prm_epochs", c.clustering.prm_epochs);
  cl.read("kmeans_restarts", c.clustering.kmeans_restarts);
  cl.read("dump_sp_matrix", c.clustering.dump_sp_matrix);
  cl.finish();

  detail::SectionReader lab(root, "labeling");
  lab.read("client", c.labeling.client);
  lab.read("group_size", c.labeling.group_size);
  lab.read("flat", c.labeling.flat);
  lab.read("endpoint", c.labeling.endpoint);
  lab.read("model", c.labeling.model);
  lab.read("temperature", c.labeling.temperature);
  lab.read("max_retries", c.labeling.max_retries);
  lab.read("parallelism", c.labeling.parallelism);
  lab.read("backoff_ms", c.labeling.backoff_ms);
  lab.finish();

  detail::SectionReader ev(root, "evaluation");
  ev.read_enum("nmi_normalization", c.evaluation.nmi_normalization);
  ev.finish();
  return c;
}

inline json config_to_json(const PipelineConfig& c) {
  using detail::enum_name;
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"paths",
       {{"corpus", c.paths.corpus},
        {"preferences", c.paths.preferences},
        {"embeddings", c.paths.embeddings},
        {"label_embeddings", c.paths.label_embeddings},
        {"mock_table", c.paths.mock_table},
        {"output_dir", c.paths.output_dir}}},
      {"segmentation",
       {{"enabled", c.segmentation.enabled},
        {"margin", c.segmentation.margin},
        {"window", c.segmentation.window},
        {"negatives_per_positive", c.segmentation.negatives_per_positive},
        {"learning_rate", c.segmentation.learning_rate},
        {"epochs", c.segmentation.epochs},
        {"output_dim", c.segmentation.output_dim},
        {"tiling_mode", enum_name(c.segmentation.tiling.mode)},
        {"threshold", c.segmentation.tiling.threshold}}},
      {"clustering",
       {{"k", c.clustering.k},
        {"theta_link", c.clustering.theta_link},
        {"theta_split", c.clustering.theta_split},
        {"sp_mode", enum_name(c.clustering.sp_mode)},
        {"reduction", enum_name(c.clustering.reduction)},
        {"reduced_dim", c.clustering.reduced_dim},
        {"aggregation", enum_name(c.clustering.aggregation)},
        {"use_preferences", c.clustering.use_preferences},
        {"gsp", c.clustering.gsp},
        {"prm_learning_rate", c.clustering.prm_learning_rate},
        {"prm_epochs", c.clustering.prm_epochs},
        {"kmeans_restarts", c.clustering.kmeans_restarts},
        {"dump_sp_matrix", c.clustering.dump_sp_matrix}}},
      {"labeling",
       {{"client", c.labeling.client},
        {"group_size", c.labeling.group_size},
        {"flat", c.labeling.flat},
        {"endpoint", c.labeling.endpoint},
        {"model", c.labeling.model},
        {"temperature", c.labeling.temperature},
        {"max_retries", c.labeling.max_retries},
        {"parallelism", c.labeling.parallelism},
        {"backoff_ms", c.labeling.backoff_ms}}},
      {"evaluation", {{"nmi_normalization", enum_name(c.evaluation.nmi_normalization)}}},
  };
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return config_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Helpers

namespace detail {

inline void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is not configured");
  if (!fs::is_regular_file(path)) throw ConfigError(std::string(what) + " file '" + path + "' is not readable");
}

inline void require_artifact(const fs::path& path, const char* producer) {
  if (!fs::is_regular_file(path)) {
    throw DataError("missing artifact '" + path.string() + "' (run '" + producer + "' first)");
  }
}

inline std::ofstream open_output(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

// Runs a stage, prefixing any error with the stage name.
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string what = std::string(name) + ": " + e.what();
    switch (e.kind()) {
      case ErrorKind::config: throw ConfigError(what);
      case ErrorKind::data: throw DataError(what);
      case ErrorKind::client: throw ClientError(what);
      default: throw Error(e.kind(), what);
    }
  } catch (const std::exception& e) {
    throw Error(ErrorKind::internal, std::string(name) + ": " + e.what());
  }
}

}  // namespace detail

struct SegmentRecord {
  std::string dialogue_id;
  int start = 0;
  int end = 0;
  std::string key;
};

inline std::vector<SegmentRecord> load_segments(const fs::path& path) {
  auto in = detail::open_input(path.string());
  std::vector<SegmentRecord> out;
  detail::for_each_jsonl(in, path.string(), [&](const json& r, std::size_t) {
    out.push_back({r.at("dialogue_id").get<std::string>(), r.at("start").get<int>(), r.at("end").get<int>(),
                   r.at("key").get<std::string>()});
  });
  return out;
}

struct AssignmentRow {
  std::string key;
  int cluster = 0;
  std::string stage;
};

inline std::vector<AssignmentRow> load_assignments(const fs::path& path) {
  auto in = detail::open_input(path.string());
  std::vector<AssignmentRow> out;
  detail::for_each_jsonl(in, path.string(), [&](const json& r, std::size_t) {
    out.push_back({r.at("key").get<std::string>(), r.at("cluster").get<int>(), r.at("stage").get<std::string>()});
  });
  return out;
}

inline std::map<std::string, int> stage_assignment(const std::vector<AssignmentRow>& rows, const std::string& stage) {
  std::map<std::string, int> out;
  for (const auto& r : rows) {
    if (r.stage == stage) out[r.key] = r.cluster;
  }
  return out;
}

inline std::map<int, std::string> load_themes(const fs::path& path) {
  auto in = detail::open_input(path.string());
  std::map<int, std::string> out;
  detail::for_each_jsonl(in, path.string(),
                         [&](const json& r, std::size_t) { out[r.at("cluster").get<int>()] = r.at("theme").get<std::string>(); });
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

// Records what produced the artifacts in an output directory. Timings make
// the manifest itself run-specific; the artifacts it lists are not.
inline void update_manifest(const PipelineConfig& config, const std::string& stage, double seconds,
                            const std::vector<std::string>& written) {
  const fs::path path = config.output(artifacts::kManifest);
  json manifest = json::object();
  if (fs::is_regular_file(path)) {
    std::ifstream in(path);
    try {
      manifest = json::parse(in);
    } catch (const json::exception&) {
      manifest = json::object();
    }
  }
  manifest["version"] = kVersion;
  manifest["prompt_version"] = std::string(kPromptVersion);
  manifest["config"] = config_to_json(config);
  manifest["seeds"] = {{"root", config.seed},
                       {"segmentation", config.seed + seed_offset::kSegmentation},
                       {"clustering", config.seed + seed_offset::kClustering},
                       {"labeling", config.seed + seed_offset::kLabeling}};
  manifest["stages"][stage] = {{"seconds", seconds}, {"artifacts", written}};
  auto out = detail::open_output(path);
  out << manifest.dump(2) << '\n';
}

template <typename Fn>
void timed_stage(const PipelineConfig& config, const char* name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::string> written = detail::run_stage(name, fn);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  update_manifest(config, name, seconds, written);
}

// ---------------------------------------------------------------------------
// Stages

struct ValidationSummary {
  std::size_t dialogues = 0;
  std::size_t utterances = 0;
  std::size_t targets = 0;
  std::size_t should_link = 0;
  std::size_t cannot_link = 0;
  std::size_t embedding_dim = 0;
  CoverageReport coverage;
};

inline ValidationSummary cmd_validate(const PipelineConfig& config) {
  return detail::run_stage("validate", [&] {
    config.validate();
    detail::require_file(config.paths.corpus, "corpus");
    detail::require_file(config.paths.embeddings, "embeddings");
    ValidationSummary s;
    const Corpus corpus = load_corpus(config.paths.corpus);
    const EmbeddingStore store = load_embeddings(config.paths.embeddings);
    s.dialogues = corpus.size();
    for (const auto& d : corpus.dialogues()) s.utterances += d.turns.size();
    s.targets = corpus.targets().size();
    s.embedding_dim = store.dim();
    if (!config.paths.preferences.empty()) {
      detail::require_file(config.paths.preferences, "preferences");
      const PreferenceSet prefs = load_preferences(config.paths.preferences, corpus);
      s.should_link = prefs.should_link;
      s.cannot_link = prefs.cannot_link;
    }
    if (!config.paths.label_embeddings.empty()) {
      detail::require_file(config.paths.label_embeddings, "label embeddings");
      load_embeddings(config.paths.label_embeddings);
    }
    s.coverage = coverage_check(corpus, store);
    return s;
  });
}

struct SegmentStageResult {
  std::vector<Segment> segments;
  TrainingLog log;
};

inline SegmentStageResult cmd_segment(const PipelineConfig& config) {
  SegmentStageResult result;
  timed_stage(config, "segment", [&] {
    config.validate();
    detail::require_file(config.paths.corpus, "corpus");
    detail::require_file(config.paths.embeddings, "embeddings");
    const Corpus corpus = load_corpus(config.paths.corpus);
    const EmbeddingStore store = load_embeddings(config.paths.embeddings);
    const CoverageReport coverage = coverage_check(corpus, store);
    if (!coverage.complete()) {
      std::string list;
      for (const auto& k : coverage.missing) list += (list.empty() ? "" : ", ") + k;
      throw DataError("utterances without embeddings: " + list);
    }

    AdaptConfig adapt_config;
    adapt_config.margin = config.segmentation.margin;
    adapt_config.window = config.segmentation.window;
    adapt_config.negatives_per_positive = config.segmentation.negatives_per_positive;
    adapt_config.learning_rate = config.segmentation.learning_rate;
    adapt_config.epochs = config.segmentation.epochs;
    adapt_config.output_dim = config.segmentation.output_dim;
    adapt_config.seed = config.seed + seed_offset::kSegmentation;
    adapt_config.jobs = config.jobs;
    AdaptResult heads = adapt(corpus, store, adapt_config);
    result.log = heads.log;

    for (const auto& d : corpus.dialogues()) {
      const auto scores = boundary_scores(d, store, heads.topic, heads.coherence);
      const auto boundaries = text_tiling(scores, config.segmentation.tiling);
      auto segs = segment_dialogue(d, boundaries, store, heads.topic);
      result.segments.insert(result.segments.end(), std::make_move_iterator(segs.begin()),
                             std::make_move_iterator(segs.end()));
    }
    auto seg_out = detail::open_output(config.output(artifacts::kSegments));
    auto emb_out = detail::open_output(config.output(artifacts::kSegmentEmbeddings));
    for (const auto& s : result.segments) {
      seg_out << json{{"dialogue_id", s.dialogue_id}, {"start", s.start}, {"end", s.end}, {"key", s.key()}}.dump() << '\n';
      write_embedding(emb_out, s.key(), s.representation);
    }
    return std::vector<std::string>{artifacts::kSegments, artifacts::kSegmentEmbeddings};
  });
  return result;
}

struct ClusterStageResult {
  std::vector<std::string> keys;  // target utterance keys, item order
  ClusteringResult clustering;
};

inline ClusterStageResult cmd_cluster(const PipelineConfig& config) {
  ClusterStageResult result;
  timed_stage(config, "cluster", [&] {
    config.validate();
    detail::require_file(config.paths.corpus, "corpus");
    const Corpus corpus = load_corpus(config.paths.corpus);
    const auto targets = corpus.targets();

    Matrix vectors;
    if (config.segmentation.enabled) {
      detail::require_artifact(config.output(artifacts::kSegments), "segment");
      detail::require_artifact(config.output(artifacts::kSegmentEmbeddings), "segment");
      const auto segments = load_segments(config.output(artifacts::kSegments));
      const EmbeddingStore seg_store = load_embeddings(config.output(artifacts::kSegmentEmbeddings).string());
      std::map<std::string, std::vector<const SegmentRecord*>> by_dialogue;
      for (const auto& s : segments) by_dialogue[s.dialogue_id].push_back(&s);
      vectors.resize(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(seg_store.dim()));
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const SegmentRecord* home = nullptr;
        for (const SegmentRecord* s : by_dialogue[targets[i]->dialogue_id]) {
          if (s->start <= targets[i]->turn_index && targets[i]->turn_index <= s->end) home = s;
        }
        if (home == nullptr) throw DataError("no segment covers " + targets[i]->key());
        vectors.row(static_cast<Eigen::Index>(i)) = seg_store.at(home->key).transpose();
      }
    } else {
      detail::require_file(config.paths.embeddings, "embeddings");
      const EmbeddingStore store = load_embeddings(config.paths.embeddings);
      vectors.resize(static_cast<Eigen::Index>(targets.size()), static_cast<Eigen::Index>(store.dim()));
      for (std::size_t i = 0; i < targets.size(); ++i) {
        vectors.row(static_cast<Eigen::Index>(i)) = store.at(targets[i]->key()).transpose();
      }
    }
    if (static_cast<int>(targets.size()) < config.clustering.k) {
      throw DataError("only " + std::to_string(targets.size()) + " target utterances for k = " +
                      std::to_string(config.clustering.k));
    }

    std::map<std::string, int> index;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      result.keys.push_back(targets[i]->key());
      index[targets[i]->key()] = static_cast<int>(i);
    }
    std::vector<ItemPair> pairs;
    if (config.clustering.use_preferences && !config.paths.preferences.empty()) {
      detail::require_file(config.paths.preferences, "preferences");
      for (const auto& p : load_preferences(config.paths.preferences, corpus).pairs) {
        pairs.push_back({index.at(p.a.key()), index.at(p.b.key()), p.target()});
      }
    }

    ClusterConfig cc;
    cc.k = config.clustering.k;
    cc.theta_link = config.clustering.theta_link;
    cc.theta_split = config.clustering.theta_split;
    cc.sp_mode = config.clustering.sp_mode;
    cc.reduction = config.clustering.reduction;
    cc.reduced_dim = config.clustering.reduced_dim;
    cc.aggregation = config.clustering.aggregation;
    cc.seed = config.seed + seed_offset::kClustering;
    cc.prm = {config.clustering.prm_learning_rate, config.clustering.prm_epochs};
    cc.use_preferences = config.clustering.use_preferences;
    cc.gsp = config.clustering.gsp;
    cc.kmeans_restarts = config.clustering.kmeans_restarts;
    cc.jobs = config.jobs;
    result.clustering = preference_enhanced_cluster(vectors, pairs, cc);

    auto out = detail::open_output(config.output(artifacts::kAssignments));
    for (const ClusterAssignment* a : {&result.clustering.s1, &result.clustering.final}) {
      for (std::size_t i = 0; i < result.keys.size(); ++i) {
        out << json{{"key", result.keys[i]}, {"cluster", a->labels[i]}, {"stage", to_string(a->stage)}}.dump() << '\n';
      }
    }
    std::vector<std::string> written{artifacts::kAssignments};
    if (config.clustering.dump_sp_matrix && result.clustering.sp) {
      auto csv = detail::open_output(config.output(artifacts::kSpMatrix));
      const Matrix& d = result.clustering.sp->distance;
      for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.cols(); ++j) csv << (j ? "," : "") << json(d(i, j)).dump();
        csv << '\n';
      }
      written.push_back(artifacts::kSpMatrix);
    }
    return written;
  });
  return result;
}

// Builds the prompt client named by the config.
inline std::unique_ptr<PromptClient> make_client(const PipelineConfig& config) {
  if (config.labeling.client == "http") {
    HttpClientConfig hc;
    hc.url = config.labeling.endpoint;
    hc.model = config.labeling.model;
    hc.temperature = config.labeling.temperature;
    hc.backoff_base = std::chrono::milliseconds(config.labeling.backoff_ms);
    return std::make_unique<ChatCompletionClient>(hc);
  }
  detail::require_file(config.paths.mock_table, "mock table");
  auto in = detail::open_input(config.paths.mock_table);
  try {
    return std::make_unique<KeywordMockClient>(KeywordMockClient::from_json(json::parse(in)));
  } catch (const json::exception& e) {
    throw ConfigError("mock table '" + config.paths.mock_table + "': " + e.what());
  }
}

inline std::vector<ThemeLabel> cmd_label(const PipelineConfig& config, PromptClient* client_override = nullptr) {
  std::vector<ThemeLabel> themes;
  timed_stage(config, "label", [&] {
    config.validate();
    detail::require_file(config.paths.corpus, "corpus");
    detail::require_artifact(config.output(artifacts::kAssignments), "cluster");
    std::unique_ptr<PromptClient> owned;
    PromptClient* client = client_override;
    if (client == nullptr) {
      owned = make_client(config);
      client = owned.get();
    }
    const Corpus corpus = load_corpus(config.paths.corpus);
    const auto final = stage_assignment(load_assignments(config.output(artifacts::kAssignments)), "final");
    if (final.empty()) throw DataError("assignment file has no final rows");
    int k = 0;
    for (const auto& [key, c] : final) k = std::max(k, c + 1);
    std::vector<std::vector<std::string>> texts(static_cast<std::size_t>(k));
    for (const Utterance* u : corpus.targets()) {
      auto it = final.find(u->key());
      if (it != final.end()) texts[static_cast<std::size_t>(it->second)].push_back(u->text);
    }
    LabelConfig lc;
    lc.group_size = config.labeling.group_size;
    lc.flat = config.labeling.flat;
    lc.max_retries = config.labeling.max_retries;
    lc.parallelism = config.labeling.parallelism;
    lc.seed = config.seed + seed_offset::kLabeling;
    themes = generate_themes(texts, *client, lc, config.jobs);
    auto out = detail::open_output(config.output(artifacts::kThemes));
    for (const auto& t : themes) out << to_json(t).dump() << '\n';
    return std::vector<std::string>{artifacts::kThemes};
  });
  return themes;
}

inline MetricReport cmd_evaluate(const PipelineConfig& config) {
  MetricReport report;
  timed_stage(config, "evaluate", [&] {
    config.validate();
    detail::require_file(config.paths.corpus, "corpus");
    detail::require_artifact(config.output(artifacts::kAssignments), "cluster");
    detail::require_artifact(config.output(artifacts::kThemes), "label");
    const Corpus corpus = load_corpus(config.paths.corpus);
    LabeledClustering pred;
    pred.assignment = stage_assignment(load_assignments(config.output(artifacts::kAssignments)), "final");
    pred.themes = load_themes(config.output(artifacts::kThemes));
    std::optional<EmbeddingStore> labels;
    if (!config.paths.label_embeddings.empty()) {
      detail::require_file(config.paths.label_embeddings, "label embeddings");
      labels = load_embeddings(config.paths.label_embeddings);
    }
    report = evaluate_run(pred, gold_clustering(corpus), labels ? &*labels : nullptr,
                          config.evaluation.nmi_normalization);
    auto out = detail::open_output(config.output(artifacts::kReport));
    out << report.to_json().dump(2) << '\n';
    return std::vector<std::string>{artifacts::kReport};
  });
  return report;
}

inline MetricReport cmd_run_all(const PipelineConfig& config, PromptClient* client_override = nullptr) {
  config.validate();
  // Fail on unreadable inputs before doing any work.
  detail::require_file(config.paths.corpus, "corpus");
  detail::require_file(config.paths.embeddings, "embeddings");
  if (!config.paths.preferences.empty()) detail::require_file(config.paths.preferences, "preferences");
  if (!config.paths.label_embeddings.empty()) detail::require_file(config.paths.label_embeddings, "label embeddings");
  if (config.labeling.client == "mock" && client_override == nullptr) {
    detail::require_file(config.paths.mock_table, "mock table");
  }
  if (config.segmentation.enabled) cmd_segment(config);
  cmd_cluster(config);
  cmd_label(config, client_override);
  return cmd_evaluate(config);
}

}  // namespace catchtd
