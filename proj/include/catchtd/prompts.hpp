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

// Prompt templates for theme labeling. Bump kPromptVersion whenever the
// wording changes; the version is recorded in run manifests.

#include <string>
#include <string_view>
#include <vector>

namespace catchtd {

inline constexpr std::string_view kPromptVersion = "themes-v1";

enum class PromptKind { label, vote_core, is_relevant, conclude };

inline std::string to_string(PromptKind k) {
  switch (k) {
    case PromptKind::label: return "Label";
    case PromptKind::vote_core: return "VoteCore";
    case PromptKind::is_relevant: return "IsRelevant";
    case PromptKind::conclude: return "Conclude";
  }
  return "?";
}

// Structured prompt input. For is_relevant, items = {candidate, core}.
struct PromptRequest {
  PromptKind kind = PromptKind::label;
  std::vector<std::string> items;
};

struct RenderedPrompt {
  std::string system;
  std::string user;
};

namespace prompts {

inline constexpr std::string_view kSystem =
    "You name the themes of customer-service conversations. Theme names are concise verb phrases "
    "that reflect what the user wants, such as \"book a flight\" or \"update billing address\".";

inline constexpr std::string_view kLabel =
    "The utterances below come from different conversations and share one theme.\n"
    "Write a concise verb phrase reflecting user intent that names this theme.\n"
    "Reply with the phrase only.\n\nUtterances:\n";

inline constexpr std::string_view kVoteCore =
    "Several candidate theme labels received the same number of votes.\n"
    "Choose the one that best represents the shared theme.\n"
    "Reply with one of the candidates exactly as written.\n\nCandidates:\n";

inline constexpr std::string_view kIsRelevant =
    "Does the candidate theme label describe the same user intent as the core label?\n"
    "Reply with yes or no.\n\n";

inline constexpr std::string_view kConclude =
    "The labels below describe one group of conversations.\n"
    "Consolidate them into a single concise verb phrase reflecting user intent.\n"
    "Reply with the phrase only.\n\nLabels:\n";

inline std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += std::to_string(i + 1) + ". " + items[i] + "\n";
  return out;
}

}  // namespace prompts

inline RenderedPrompt render_prompt(const PromptRequest& request) {
  RenderedPrompt p{std::string(prompts::kSystem), {}};
  switch (request.kind) {
    case PromptKind::label:
      p.user = std::string(prompts::kLabel) + prompts::numbered(request.items);
      break;
    case PromptKind::vote_core:
      p.user = std::string(prompts::kVoteCore) + prompts::numbered(request.items);
      break;
    case PromptKind::is_relevant:
      p.user = std::string(prompts::kIsRelevant) + "Candidate: " + (request.items.size() > 0 ? request.items[0] : "") +
               "\nCore: " + (request.items.size() > 1 ? request.items[1] : "") + "\n";
      break;
    case PromptKind::conclude:
      p.user = std::string(prompts::kConclude) + prompts::numbered(request.items);
      break;
  }
  return p;
}

}  // namespace catchtd
