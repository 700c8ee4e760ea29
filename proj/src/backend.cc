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

#include "instructrl/backend.h"

#include <cmath>
#include <thread>

#include "httplib.h"
#include "instructrl/errors.h"

namespace instructrl {

namespace {

const char* const kAffirmative[] = {"Yes", "yes", " Yes", " yes"};
const char* const kNegative[] = {"No", "no", " No", " no"};

// Text between `open` and the following `close`.
std::string between(const std::string& s, const std::string& open, const std::string& close) {
  const size_t a = s.find(open);
  if (a == std::string::npos) return {};
  const size_t start = a + open.size();
  const size_t b = s.find(close, start);
  if (b == std::string::npos) return {};
  return s.substr(start, b - start);
}

std::string focus_word(HintFocus f) { return f == HintFocus::kColor ? "color" : "rank"; }

}  // namespace

bool is_affirmative_token(const std::string& token) {
  for (const char* t : kAffirmative)
    if (token == t) return true;
  return false;
}

bool is_negative_token(const std::string& token) {
  for (const char* t : kNegative)
    if (token == t) return true;
  return false;
}

int qa_logit(LanguageBackend& backend, const std::string& prompt, nlohmann::json* raw) {
  QaAnswer a = backend.answer_yes_no(prompt);
  if (!std::isfinite(a.p_yes) || !std::isfinite(a.p_no))
    throw NumericalError("qa_logit: backend returned a non-finite probability");
  if (raw) *raw = std::move(a.raw);
  return a.p_yes > a.p_no ? 1 : 0;
}

double completion_logit(LanguageBackend& backend, const std::string& prompt,
                        const std::string& action_text, nlohmann::json* raw) {
  ContinuationScore s = backend.score_continuation(prompt, completion_continuation(action_text));
  if (!std::isfinite(s.mean_logprob))
    throw NumericalError("completion_logit: non-finite log-likelihood for '" + action_text + "'");
  if (raw) *raw = std::move(s.raw);
  return s.mean_logprob;
}

std::string OracleBackend::name() const { return "oracle_" + focus_word(focus_); }

bool OracleBackend::rule(const std::string& obs, const std::string& act) const {
  const std::string word = focus_word(focus_);
  const std::string hint_prefix = "My partner told me that the " + word + " of my card";
  if (obs.starts_with(hint_prefix)) {
    const std::string play_prefix = "play my card at position '";
    if (!act.starts_with(play_prefix) || act.size() != play_prefix.size() + 2) return false;
    const char letter = act[play_prefix.size()];
    const size_t is_pos = obs.rfind(" is ");
    const std::string positions = obs.substr(hint_prefix.size(), is_pos - hint_prefix.size());
    return positions.find(std::string("'") + letter + "'") != std::string::npos;
  }
  return act == "hint " + word + " to my partner";
}

QaAnswer OracleBackend::answer_yes_no(const std::string& prompt) {
  const std::string obs = between(prompt, "\nPreviously: ", ".\nQuestion: ");
  const std::string act = between(prompt, "Question: Should I ", "?\nAnswer:");
  if (obs.empty() || act.empty())
    throw ContractViolation("oracle backend: not a qa_style prompt");
  const bool yes = rule(obs, act);
  return {yes ? 1.0 : 0.0, yes ? 0.0 : 1.0,
          {{"oracle", focus_word(focus_)}, {"answer", yes ? "Yes" : "No"}}};
}

ContinuationScore OracleBackend::score_continuation(const std::string&, const std::string&) {
  throw ContractViolation("oracle backend answers qa_style prompts only");
}

ScriptedCompletionBackend::ScriptedCompletionBackend(double p_match, double p_quit)
    : p_match_(p_match), p_quit_(p_quit) {
  if (p_match <= 0 || p_quit <= 0 || p_match + p_quit >= 1)
    throw ConfigError("scripted backend: need p_match, p_quit > 0 with sum < 1");
}

QaAnswer ScriptedCompletionBackend::answer_yes_no(const std::string&) {
  throw ContractViolation("scripted completion backend has no qa mode");
}

ContinuationScore ScriptedCompletionBackend::score_continuation(const std::string& prompt,
                                                                const std::string& continuation) {
  const std::string partner = between(prompt, "My partner selected ", ".\n");
  if (!prompt.ends_with("So I should select"))
    throw ContractViolation("scripted backend: not a completion_style prompt");
  if (continuation.size() != 2 || continuation[0] != ' ' || continuation[1] < '0' ||
      continuation[1] > '5')
    throw ContractViolation("scripted backend: continuation must be a single digit token");
  const int digit = continuation[1] - '0';
  double p;
  if (partner.size() == 1 && partner[0] >= '1' && partner[0] <= '5') {
    const int k = partner[0] - '0';
    p = digit == k ? p_match_ : digit == 0 ? p_quit_ : (1.0 - p_match_ - p_quit_) / 4.0;
  } else {
    p = 1.0 / 6.0;
  }
  const double lp = std::log(p);
  return {lp, 1, {{"tokens", {continuation}}, {"token_logprobs", {lp}}}};
}

void to_json(nlohmann::json& j, const CompletionApiConfig& c) {
  j = {{"base_url", c.base_url},         {"path", c.path},
       {"model", c.model},               {"api_key_env", c.api_key_env},
       {"top_logprobs", c.top_logprobs}, {"min_interval_s", c.min_interval_s},
       {"timeout_s", c.timeout_s}};
}

void from_json(const nlohmann::json& j, CompletionApiConfig& c) {
  CompletionApiConfig d;
  c.base_url = j.value("base_url", d.base_url);
  c.path = j.value("path", d.path);
  c.model = j.value("model", d.model);
  c.api_key_env = j.value("api_key_env", d.api_key_env);
  c.top_logprobs = j.value("top_logprobs", d.top_logprobs);
  c.min_interval_s = j.value("min_interval_s", d.min_interval_s);
  c.timeout_s = j.value("timeout_s", d.timeout_s);
}

CompletionApiBackend::CompletionApiBackend(CompletionApiConfig config)
    : config_(std::move(config)) {
  if (config_.model.empty()) throw ConfigError("api backend: model name is required");
  if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
}

nlohmann::json CompletionApiBackend::post(const nlohmann::json& body) {
  if (config_.min_interval_s > 0 && requests_ > 0) {
    const auto next = last_request_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                          std::chrono::duration<double>(config_.min_interval_s));
    std::this_thread::sleep_until(next);
  }
  last_request_ = std::chrono::steady_clock::now();
  ++requests_;

  httplib::Client client(config_.base_url);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res)
    throw RetryableBackendError("api backend: transport error: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw RetryableBackendError("api backend: HTTP " + std::to_string(res->status));
  if (res->status != 200)
    throw ConfigError("api backend: HTTP " + std::to_string(res->status) + ": " + res->body);
  try {
    return nlohmann::json::parse(res->body);
  } catch (const nlohmann::json::exception& e) {
    throw RetryableBackendError(std::string("api backend: malformed response: ") + e.what());
  }
}

QaAnswer CompletionApiBackend::answer_yes_no(const std::string& prompt) {
  nlohmann::json response = post({{"model", config_.model},
                                  {"prompt", prompt},
                                  {"max_tokens", 1},
                                  {"temperature", 0},
                                  {"logprobs", config_.top_logprobs}});
  QaAnswer a;
  try {
    const auto& top = response.at("choices").at(0).at("logprobs").at("top_logprobs").at(0);
    for (const auto& [token, lp] : top.items()) {
      if (is_affirmative_token(token)) a.p_yes += std::exp(lp.get<double>());
      if (is_negative_token(token)) a.p_no += std::exp(lp.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw RetryableBackendError(std::string("api backend: unexpected response shape: ") +
                                e.what());
  }
  a.raw = std::move(response);
  return a;
}

ContinuationScore CompletionApiBackend::score_continuation(const std::string& prompt,
                                                           const std::string& continuation) {
  nlohmann::json response = post({{"model", config_.model},
                                  {"prompt", prompt + continuation},
                                  {"max_tokens", 0},
                                  {"echo", true},
                                  {"logprobs", 0}});
  ContinuationScore s;
  try {
    const auto& lp = response.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& logprobs = lp.at("token_logprobs");
    const auto& offsets = lp.at("text_offset");
    double sum = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
      const size_t end = offsets.at(i).get<size_t>() + tokens.at(i).get<std::string>().size();
      if (end <= prompt.size()) continue;
      sum += logprobs.at(i).get<double>();
      ++s.num_tokens;
    }
    if (s.num_tokens == 0)
      throw RetryableBackendError("api backend: echo response has no continuation tokens");
    s.mean_logprob = sum / s.num_tokens;
  } catch (const nlohmann::json::exception& e) {
    throw RetryableBackendError(std::string("api backend: unexpected response shape: ") +
                                e.what());
  }
  s.raw = std::move(response);
  return s;
}

std::unique_ptr<LanguageBackend> make_backend(const std::string& name,
                                              const nlohmann::json& options_in) {
  const nlohmann::json options = options_in.is_object() ? options_in : nlohmann::json::object();
  if (name == "oracle_color") return std::make_unique<OracleBackend>(HintFocus::kColor);
  if (name == "oracle_rank") return std::make_unique<OracleBackend>(HintFocus::kRank);
  if (name == "scripted" || name == "scripted_completion")
    return std::make_unique<ScriptedCompletionBackend>(options.value("p_match", 0.4),
                                                       options.value("p_quit", 0.05));
  if (name == "api")
    return std::make_unique<CompletionApiBackend>(
        options.value("api", nlohmann::json::object()).get<CompletionApiConfig>());
  throw ConfigError("unknown backend '" + name + "'");
}

}  // namespace instructrl
