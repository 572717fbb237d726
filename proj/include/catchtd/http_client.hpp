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

// OpenAI-style chat-completion client over cpp-httplib.

#include "catchtd/labeling.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>

namespace catchtd {

inline constexpr const char* kTokenEnvVar = "CATCH_LLM_TOKEN";

struct HttpClientConfig {
  std::string url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "llama-3-8b-instruct";
  double temperature = 0.0;
  int attempts = 3;
  std::chrono::milliseconds backoff_base{500};
  std::chrono::seconds timeout{60};
};

class ChatCompletionClient : public PromptClient {
 public:
  explicit ChatCompletionClient(HttpClientConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL needs a scheme: '" + config_.url + "'");
    const auto path_start = config_.url.find('/', scheme_end + 3);
    base_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/" : config_.url.substr(path_start);
    if (const char* token = std::getenv(kTokenEnvVar)) token_ = token;
  }

  // Request body sent for a prompt.
  json request_body(const PromptRequest& request) const {
    const RenderedPrompt p = render_prompt(request);
    return {{"model", config_.model},
            {"messages", json::array({{{"role", "system"}, {"content", p.system}}, {{"role", "user"}, {"content", p.user}}})},
            {"temperature", config_.temperature}};
  }

  std::string generate(const PromptRequest& request) override {
    const std::string body = request_body(request).dump();
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
    std::string last_error;
    for (int attempt = 0; attempt < std::max(1, config_.attempts); ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 1)));
      httplib::Client client(base_);
      client.set_connection_timeout(config_.timeout);
      client.set_read_timeout(config_.timeout);
      auto res = client.Post(path_, headers, body, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200) throw ClientError("chat completion: HTTP " + std::to_string(res->status) + ": " + res->body);
      try {
        const json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const json::exception& e) {
        throw ClientError(std::string("chat completion: malformed response: ") + e.what());
      }
    }
    throw ClientError("chat completion: " + config_.url + " failed after " + std::to_string(config_.attempts) +
                      " attempt(s): " + last_error);
  }

 private:
  HttpClientConfig config_;
  std::string base_;
  std::string path_;
  std::string token_;
};

}  // namespace catchtd
