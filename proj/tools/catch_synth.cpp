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

// Writes a planted-theme fixture (corpus, embeddings, preferences, label
// embeddings, mock keyword table) for trying the pipeline offline.

#include "planted.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Generate a planted-theme fixture"};
  catchtd::planted::Spec spec;
  std::string out = "fixture";
  app.add_option("--themes", spec.themes, "number of themes (1-6)");
  app.add_option("--dialogues", spec.dialogues, "number of dialogues");
  app.add_option("--dim", spec.dim, "embedding dimension");
  app.add_option("--noise", spec.noise, "per-coordinate noise");
  app.add_option("--seed", spec.seed, "random seed");
  app.add_option("-o,--out", out, "output directory");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto fixture = catchtd::planted::make_fixture(spec);
    const auto paths = catchtd::planted::write_fixture(fixture, out);
    std::cout << paths.corpus << '\n'
              << paths.embeddings << '\n'
              << paths.preferences << '\n'
              << paths.label_embeddings << '\n'
              << paths.mock_table << '\n';
  } catch (const catchtd::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  }
  return 0;
}
