// Copyright 2026 The instructrl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Language backends that score prompts: the rule oracle, a scripted
// completion model, and a client for an OpenAI-style completions endpoint.

#ifndef INSTRUCTRL_BACKEND_H_
#define INSTRUCTRL_BACKEND_H_

#include <chrono>
#include <memory>
#include <string>

#include "instructrl/lang.h"
#include "json.hpp"

namespace instructrl {

struct QaAnswer {
  double p_yes = 0.0;  // summed over affirmative token variants
  double p_no = 0.0;
  nlohmann::json raw;
};

struct ContinuationScore {
  double mean_logprob = 0.0;
  int num_tokens = 0;
  nlohmann::json raw;
};

class LanguageBackend {
 public:
  virtual ~LanguageBackend() = default;
  // Recorded in prior tables; a cache is only reused by a backend of the
  // same name.
  virtual std::string name() const = 0;
  // Provenance kind: "oracle", "scripted" or "llm_api".
  virtual std::string kind() const = 0;
  virtual QaAnswer answer_yes_no(const std::string& prompt) = 0;
  virtual ContinuationScore score_continuation(const std::string& prompt,
                                               const std::string& continuation) = 0;
};

// 1 iff p(yes) > p(no).
int qa_logit(LanguageBackend& backend, const std::string& prompt, nlohmann::json* raw = nullptr);
// Mean per-token log-likelihood of the action continuing the prompt.
double completion_logit(LanguageBackend& backend, const std::string& prompt,
                        const std::string& action_text, nlohmann::json* raw = nullptr);

// Affirmative / negative first-token variants.
bool is_affirmative_token(const std::string& token);
bool is_negative_token(const std::string& token);

// Rule oracle for the Hanabi hint instructions. With focus kColor: after a
// color hint, "yes" exactly for playing a touched position; after anything
// else, "yes" exactly for hinting color. kRank swaps the roles.
class OracleBackend final : public LanguageBackend {
 public:
  explicit OracleBackend(HintFocus focus) : focus_(focus) {}
  std::string name() const override;
  std::string kind() const override { return "oracle"; }
  QaAnswer answer_yes_no(const std::string& prompt) override;
  ContinuationScore score_continuation(const std::string& prompt,
                                       const std::string& continuation) override;
  bool rule(const std::string& observation_text, const std::string& action_text) const;

 private:
  HintFocus focus_;
};

// Stand-in causal LM for the Say-Select completion prompt: after "My partner
// selected k." it continues with " k" with probability p_match, with " 0"
// with probability p_quit and with each other digit equally.
class ScriptedCompletionBackend final : public LanguageBackend {
 public:
  explicit ScriptedCompletionBackend(double p_match = 0.4, double p_quit = 0.05);
  std::string name() const override { return "scripted_completion"; }
  std::string kind() const override { return "scripted"; }
  QaAnswer answer_yes_no(const std::string& prompt) override;
  ContinuationScore score_continuation(const std::string& prompt,
                                       const std::string& continuation) override;

 private:
  double p_match_;
  double p_quit_;
};

struct CompletionApiConfig {
  std::string base_url = "https://api.openai.com";  // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string model;
  std::string api_key_env = "INSTRUCTRL_API_KEY";
  int top_logprobs = 5;
  double min_interval_s = 0.0;  // rate limit between requests
  double timeout_s = 30.0;
};
void to_json(nlohmann::json& j, const CompletionApiConfig& c);
void from_json(const nlohmann::json& j, CompletionApiConfig& c);

// Transport failures, timeouts, 429 and 5xx raise RetryableBackendError;
// other HTTP errors raise ConfigError.
class CompletionApiBackend final : public LanguageBackend {
 public:
  explicit CompletionApiBackend(CompletionApiConfig config);
  std::string name() const override { return "api:" + config_.model; }
  std::string kind() const override { return "llm_api"; }
  QaAnswer answer_yes_no(const std::string& prompt) override;
  ContinuationScore score_continuation(const std::string& prompt,
                                       const std::string& continuation) override;
  int requests_sent() const { return requests_; }

 private:
  nlohmann::json post(const nlohmann::json& body);

  CompletionApiConfig config_;
  std::string api_key_;
  std::chrono::steady_clock::time_point last_request_{};
  int requests_ = 0;
};

// "oracle_color", "oracle_rank", "scripted", or "api" (reads `api` options).
std::unique_ptr<LanguageBackend> make_backend(const std::string& name,
                                              const nlohmann::json& options = {});

}  // namespace instructrl

#endif  // INSTRUCTRL_BACKEND_H_
