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

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "instructrl/backend.h"
#include "instructrl/errors.h"
#include "instructrl/prior.h"

namespace instructrl {
namespace {

// Local stand-in for an OpenAI-style completions endpoint.
class MockCompletionServer {
 public:
  MockCompletionServer() {
    server_.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      last_auth = req.get_header_value("Authorization");
      if (fail_status.load() != 0) {
        res.status = fail_status.load();
        res.set_content("{\"error\":\"nope\"}", "application/json");
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json reply;
      if (body.value("echo", false)) {
        // Tokenizes on spaces; the digit after "select" gets log p = -0.5 * digit.
        const std::string text = body["prompt"];
        nlohmann::json tokens = nlohmann::json::array(), lps = nlohmann::json::array(),
                       offsets = nlohmann::json::array();
        size_t pos = 0;
        while (pos < text.size()) {
          size_t end = text.find(' ', pos + 1);
          if (end == std::string::npos) end = text.size();
          const std::string tok = text.substr(pos, end - pos);
          tokens.push_back(tok);
          offsets.push_back(pos);
          const bool digit = tok.size() == 2 && std::isdigit(static_cast<unsigned char>(tok[1]));
          lps.push_back(digit ? -0.5 * (tok[1] - '0') : -1.0);
          pos = end;
        }
        reply = {{"choices",
                  {{{"text", text},
                    {"logprobs",
                     {{"tokens", tokens}, {"token_logprobs", lps}, {"text_offset", offsets}}}}}}};
      } else {
        const std::string prompt = body["prompt"];
        const bool yes = prompt.find("play") != std::string::npos;
        nlohmann::json top = yes ? nlohmann::json{{" Yes", std::log(0.3)},
                                                  {"yes", std::log(0.15)},
                                                  {" No", std::log(0.35)},
                                                  {"Maybe", std::log(0.2)}}
                                 : nlohmann::json{{" Yes", std::log(0.2)},
                                                  {" No", std::log(0.1)},
                                                  {"no", std::log(0.15)},
                                                  {" no", std::log(0.05)}};
        reply = {{"choices", {{{"text", " Yes"}, {"logprobs", {{"top_logprobs", {top}}}}}}}};
      }
      res.set_content(reply.dump(), "application/json");
    });
    port = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockCompletionServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> fail_status{0};
  std::string last_auth;

 private:
  httplib::Server server_;
  std::thread thread_;
};

CompletionApiConfig config_for(const MockCompletionServer& server) {
  CompletionApiConfig c;
  c.base_url = server.url();
  c.model = "mock-model";
  c.api_key_env = "INSTRUCTRL_TEST_API_KEY";
  c.timeout_s = 5;
  return c;
}

TEST_CASE("yes/no answers sum the token variants") {
  MockCompletionServer server;
  CompletionApiBackend backend(config_for(server));
  // yes-side: 0.3 + 0.15 = 0.45 > 0.35
  QaAnswer a = backend.answer_yes_no("Question: Should I play my card at position 'A'?\nAnswer:");
  CHECK(a.p_yes == doctest::Approx(0.45));
  CHECK(a.p_no == doctest::Approx(0.35));
  CHECK(qa_logit(backend, "Question: Should I play?") == 1);
  // no-side: 0.1 + 0.15 + 0.05 = 0.3 > 0.2
  CHECK(qa_logit(backend, "Question: Should I hint?") == 0);
  CHECK(server.hits == 3);
  CHECK(is_affirmative_token(" yes"));
  CHECK(!is_affirmative_token("YES"));
  CHECK(is_negative_token("No"));
}

TEST_CASE("continuation scoring averages the continuation tokens only") {
  MockCompletionServer server;
  CompletionApiBackend backend(config_for(server));
  const std::string prompt = "My partner selected 3.\nSo I should select";
  CHECK(completion_logit(backend, prompt, "3") == doctest::Approx(-1.5));
  CHECK(completion_logit(backend, prompt, "1") == doctest::Approx(-0.5));
  ContinuationScore s = backend.score_continuation(prompt, " 4 4");
  CHECK(s.num_tokens == 2);
  CHECK(s.mean_logprob == doctest::Approx(-2.0));
}

TEST_CASE("server errors are retryable; client errors are not") {
  MockCompletionServer server;
  CompletionApiBackend backend(config_for(server));
  server.fail_status = 503;
  CHECK_THROWS_AS(backend.answer_yes_no("x"), RetryableBackendError);
  server.fail_status = 429;
  CHECK_THROWS_AS(backend.answer_yes_no("x"), RetryableBackendError);
  server.fail_status = 401;
  CHECK_THROWS_AS(backend.answer_yes_no("x"), ConfigError);
  server.fail_status = 0;
  CHECK_NOTHROW(backend.answer_yes_no("x"));
}

TEST_CASE("an unreachable endpoint is a retryable error") {
  int port;
  {
    MockCompletionServer server;
    port = server.port;
  }
  CompletionApiConfig c;
  c.base_url = "http://127.0.0.1:" + std::to_string(port);
  c.model = "m";
  c.timeout_s = 1;
  CompletionApiBackend backend(c);
  CHECK_THROWS_AS(backend.answer_yes_no("x"), RetryableBackendError);
}

TEST_CASE("the key is read from the configured variable and sent as a bearer token") {
  MockCompletionServer server;
  ::setenv("INSTRUCTRL_TEST_API_KEY", "sk-test", 1);
  CompletionApiBackend with_key(config_for(server));
  with_key.answer_yes_no("x");
  CHECK(server.last_auth == "Bearer sk-test");
  ::unsetenv("INSTRUCTRL_TEST_API_KEY");
  CompletionApiBackend without_key(config_for(server));
  without_key.answer_yes_no("x");
  CHECK(server.last_auth.empty());
  CompletionApiConfig no_model = config_for(server);
  no_model.model.clear();
  CHECK_THROWS_AS(CompletionApiBackend{no_model}, ConfigError);
}

TEST_CASE("requests are rate limited") {
  MockCompletionServer server;
  CompletionApiConfig c = config_for(server);
  c.min_interval_s = 0.05;
  CompletionApiBackend backend(c);
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < 4; ++i) backend.answer_yes_no("x");
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(elapsed >= 0.15);
  CHECK(backend.requests_sent() == 4);
}

TEST_CASE("a say-select prior built over the api resumes after an outage") {
  MockCompletionServer server;
  auto path = std::filesystem::temp_directory_path() / "instructrl_tests" / "api_prior.json";
  std::filesystem::create_directories(path.parent_path());
  std::filesystem::remove(path);
  CompletionApiBackend backend(config_for(server));
  PriorBuildOptions options;
  options.cache_path = path;
  options.save_every = 1;
  options.progress = [&](size_t done, size_t) {
    if (done == 10) server.fail_status = 500;
  };
  CHECK_THROWS_AS(build_prior_table(EnvConfig::say_select_default(),
                                    instruction_by_key("say_select"), backend, 1.0, options),
                  RetryableBackendError);
  CHECK(PriorTable::load(path).size() == 10);
  server.fail_status = 0;
  options.progress = nullptr;
  const int before = server.hits;
  PriorBuildStats stats;
  const PriorTable t = build_prior_table(EnvConfig::say_select_default(),
                                         instruction_by_key("say_select"), backend, 1.0, options,
                                         &stats);
  CHECK(server.hits - before == 20);
  CHECK(stats.from_cache == 10);
  CHECK(t.is_complete());
  CHECK(t.provenance().kind == "llm_api");
  CHECK(t.logit("2", "3") == doctest::Approx(-1.5));
  CHECK(t.entries().front().raw.contains("choices"));
}

TEST_CASE("backend factory") {
  CHECK(make_backend("oracle_color")->name() == "oracle_color");
  CHECK(make_backend("oracle_rank")->name() == "oracle_rank");
  CHECK(make_backend("scripted")->kind() == "scripted");
  CHECK(make_backend("api", {{"api", {{"model", "m"}}}})->kind() == "llm_api");
  CHECK_THROWS_AS(make_backend("gpt"), ConfigError);
}

}  // namespace
}  // namespace instructrl
