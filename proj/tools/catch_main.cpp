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

// Command-line front end: catch segment|cluster|label|evaluate|run-all|validate.

#include "catchtd/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

namespace {

using catchtd::json;

// Flag values collected before the config file is read. Each flag, when
// given, overwrites one config key.
struct Overrides {
  std::string config_path;
  json patch = json::object();
  std::vector<std::function<void()>> setters;
  bool no_prefs = false;
  bool no_segmentation = false;
  bool flat_labels = false;
};

template <typename T>
void flag(CLI::App& app, Overrides& o, const std::string& name, const std::string& section, const std::string& key,
          const std::string& help) {
  auto value = std::make_shared<std::optional<T>>();
  app.add_option("--" + name, *value, help);
  o.setters.push_back([&o, value, section, key] {
    if (!value->has_value()) return;
    if (section.empty()) {
      o.patch[key] = **value;
    } else {
      o.patch[section][key] = **value;
    }
  });
}

void add_common(CLI::App& app, Overrides& o) {
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.add_option("-c,--config", o.config_path, "JSON config file");
  flag<std::uint64_t>(app, o, "seed", "", "seed", "root random seed");
  flag<std::size_t>(app, o, "jobs", "", "jobs", "worker threads");

  flag<std::string>(app, o, "corpus", "paths", "corpus", "corpus JSONL");
  flag<std::string>(app, o, "preferences", "paths", "preferences", "preference pairs JSONL");
  flag<std::string>(app, o, "embeddings", "paths", "embeddings", "utterance embeddings JSONL");
  flag<std::string>(app, o, "label-embeddings", "paths", "label_embeddings", "label embeddings JSONL");
  flag<std::string>(app, o, "mock-table", "paths", "mock_table", "keyword table for the mock client");
  flag<std::string>(app, o, "output-dir", "paths", "output_dir", "artifact directory");

  flag<double>(app, o, "margin", "segmentation", "margin", "contrastive margin");
  flag<int>(app, o, "window", "segmentation", "window", "positive window");
  flag<int>(app, o, "negatives-per-positive", "segmentation", "negatives_per_positive", "negatives per positive");
  flag<double>(app, o, "learning-rate", "segmentation", "learning_rate", "head learning rate");
  flag<int>(app, o, "epochs", "segmentation", "epochs", "epochs per adaptation stage");
  flag<std::size_t>(app, o, "output-dim", "segmentation", "output_dim", "head output dimension (0 = input)");
  flag<std::string>(app, o, "tiling-mode", "segmentation", "tiling_mode", "depth|threshold");
  flag<double>(app, o, "threshold", "segmentation", "threshold", "absolute boundary threshold");

  flag<int>(app, o, "k", "clustering", "k", "number of clusters");
  flag<double>(app, o, "theta-link", "clustering", "theta_link", "linking threshold");
  flag<double>(app, o, "theta-split", "clustering", "theta_split", "splitting threshold");
  flag<std::string>(app, o, "sp-mode", "clustering", "sp_mode", "paper_literal|inverted");
  flag<std::string>(app, o, "reduction", "clustering", "reduction", "identity|pca");
  flag<std::size_t>(app, o, "reduced-dim", "clustering", "reduced_dim", "target dimension for pca");
  flag<std::string>(app, o, "aggregation", "clustering", "aggregation", "mean|min|max");
  flag<double>(app, o, "prm-learning-rate", "clustering", "prm_learning_rate", "reward model learning rate");
  flag<int>(app, o, "prm-epochs", "clustering", "prm_epochs", "reward model epochs");
  flag<int>(app, o, "kmeans-restarts", "clustering", "kmeans_restarts", "k-means restarts");
  flag<bool>(app, o, "gsp", "clustering", "gsp", "cluster directly on SP distances");
  flag<bool>(app, o, "dump-sp-matrix", "clustering", "dump_sp_matrix", "write sp_matrix.csv");

  flag<std::string>(app, o, "client", "labeling", "client", "mock|http");
  flag<std::size_t>(app, o, "group-size", "labeling", "group_size", "items per label group");
  flag<std::string>(app, o, "endpoint", "labeling", "endpoint", "chat-completion URL");
  flag<std::string>(app, o, "model", "labeling", "model", "model name");
  flag<double>(app, o, "temperature", "labeling", "temperature", "sampling temperature");
  flag<int>(app, o, "max-retries", "labeling", "max_retries", "retries on unusable responses");
  flag<std::size_t>(app, o, "parallelism", "labeling", "parallelism", "concurrent label calls");
  flag<int>(app, o, "backoff-ms", "labeling", "backoff_ms", "first HTTP retry delay");

  flag<std::string>(app, o, "nmi-normalization", "evaluation", "nmi_normalization", "arithmetic|geometric|min|max");

  app.add_flag("--no-prefs", o.no_prefs, "ignore preference pairs");
  app.add_flag("--no-segmentation", o.no_segmentation, "cluster raw utterance vectors");
  app.add_flag("--flat-labels", o.flat_labels, "one label call per cluster");
}

catchtd::PipelineConfig resolve(Overrides& o) {
  json root = json::object();
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    if (!in) throw catchtd::ConfigError("cannot open config '" + o.config_path + "'");
    try {
      root = json::parse(in);
    } catch (const json::parse_error& e) {
      throw catchtd::ConfigError("config '" + o.config_path + "': " + e.what());
    }
  }
  for (auto& set : o.setters) set();
  root.merge_patch(o.patch);
  if (o.no_prefs) root["clustering"]["use_preferences"] = false;
  if (o.no_segmentation) root["segmentation"]["enabled"] = false;
  if (o.flat_labels) root["labeling"]["flat"] = true;
  return catchtd::config_from_json(root);
}

int run(const std::string& command, const catchtd::PipelineConfig& config) {
  using namespace catchtd;
  if (command == "validate") {
    const ValidationSummary s = cmd_validate(config);
    std::cout << "dialogues " << s.dialogues << ", utterances " << s.utterances << ", targets " << s.targets
              << ", should_link " << s.should_link << ", cannot_link " << s.cannot_link << ", dim " << s.embedding_dim
              << '\n';
    if (!s.coverage.complete()) {
      std::cerr << "missing embeddings for " << s.coverage.missing.size() << " utterance(s):\n";
      for (const auto& k : s.coverage.missing) std::cerr << "  " << k << '\n';
      return static_cast<int>(ErrorKind::data);
    }
    return 0;
  }
  if (command == "segment") {
    const auto r = cmd_segment(config);
    for (const auto& w : r.log.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << r.segments.size() << " segments\n";
  } else if (command == "cluster") {
    const auto r = cmd_cluster(config);
    for (const auto& w : r.clustering.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << r.keys.size() << " items, " << r.clustering.final.k << " clusters\n";
  } else if (command == "label") {
    const auto themes = cmd_label(config);
    for (const auto& t : themes) std::cout << t.cluster << '\t' << t.text << '\n';
  } else if (command == "evaluate") {
    std::cout << cmd_evaluate(config).to_json().dump(2) << '\n';
  } else if (command == "run-all") {
    std::cout << cmd_run_all(config).to_json().dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Controllable theme detection over dialogue corpora"};
  app.require_subcommand(1);
  std::map<std::string, std::unique_ptr<Overrides>> overrides;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"segment", "segment dialogues and write segment embeddings"},
      {"cluster", "cluster target utterances into themes"},
      {"label", "generate a theme label per cluster"},
      {"evaluate", "score assignments and labels against gold themes"},
      {"run-all", "run every stage in order"},
      {"validate", "check inputs without running anything"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    overrides[name] = std::make_unique<Overrides>();
    add_common(*sub, *overrides[name]);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(catchtd::ErrorKind::config);
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, resolve(*overrides[command]));
  } catch (const catchtd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(catchtd::ErrorKind::internal);
  }
}
