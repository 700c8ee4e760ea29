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

// Live human-vs-agent game sessions: creation from loaded agents, redacted
// views, turn handling with the agent's reply, per-session event streams and
// the append-only results file.

#ifndef INSTRUCTRL_SESSION_H_
#define INSTRUCTRL_SESSION_H_

#include <array>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "instructrl/config.h"
#include "instructrl/game.h"
#include "instructrl/hanabi_learn.h"
#include "instructrl/report.h"
#include "instructrl/rng.h"
#include "instructrl/run.h"
#include "json.hpp"

namespace instructrl {

// Carried by every payload and event.
inline constexpr int kProtocolVersion = 1;
inline constexpr int kSurveyQuestions = 2;

// A request the session refuses. `status` is the HTTP status to answer with.
class SessionError : public std::runtime_error {
 public:
  SessionError(int status, std::string code, const std::string& message,
               nlohmann::json details = nullptr)
      : std::runtime_error(message),
        status_(status),
        code_(std::move(code)),
        details_(std::move(details)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const nlohmann::json& details() const { return details_; }
  nlohmann::json to_json() const;

 private:
  int status_;
  std::string code_;
  nlohmann::json details_;
};

// An agent the service can seat. Hanabi agents play either seat; a
// Say-Select checkpoint plays Alice and the human plays Bob.
struct SessionAgent {
  std::string name;
  EnvConfig env;
  std::shared_ptr<const HanabiAgent> hanabi;
  std::shared_ptr<const SaySelectCheckpoint> say_select;
  std::string instruction_key;  // empty for vanilla agents
  std::string instruction_text;

  static SessionAgent from_checkpoint(std::string name, AnyCheckpoint checkpoint);
  nlohmann::json describe() const;  // no instruction text: the lobby must not leak it
};

struct SessionOptions {
  std::string agent;
  int human_seat = 0;
  bool instruction_visible = false;
  std::optional<uint64_t> seed;
};
SessionOptions session_options_from_json(const nlohmann::json& body);

class Session {
 public:
  // `initial` overrides the dealt game (tests); otherwise the game is dealt
  // from the seed. The agent moves right away when it has the first turn.
  Session(std::string id, std::shared_ptr<const SessionAgent> agent, SessionOptions options,
          uint64_t seed, std::unique_ptr<State> initial = nullptr);

  const std::string& id() const { return id_; }
  uint64_t seed() const { return seed_; }
  const SessionOptions& options() const { return options_; }

  // Redacted document for the human.
  nlohmann::json view() const;
  // Applies the human's move, then the agent's replies until it is the
  // human's turn again or the game ends. Returns the new view.
  nlohmann::json act(const nlohmann::json& body);
  // Result record for a finished game; throws unless terminal and not yet
  // recorded.
  nlohmann::json finish(const nlohmann::json& body);

  bool terminal() const;
  // Events with seq > after, waiting up to `timeout` for one to arrive.
  std::vector<nlohmann::json> events_after(int64_t after, std::chrono::milliseconds timeout) const;
  int64_t event_count() const;
  // Wakes waiters (service shutdown).
  void close();
  bool closed() const;

 private:
  int apply_locked(int action, bool by_human);
  void agent_moves_locked();
  nlohmann::json view_locked() const;
  nlohmann::json legal_actions_locked() const;
  void push_event_locked(const std::string& type, nlohmann::json payload);

  std::string id_;
  std::shared_ptr<const SessionAgent> agent_;
  SessionOptions options_;
  uint64_t seed_;
  std::unique_ptr<State> state_;
  std::unique_ptr<Policy> policy_;
  Rng rng_;
  std::vector<nlohmann::json> log_;
  bool recorded_ = false;
  bool closed_ = false;

  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<nlohmann::json> events_;
};

// Append-only JSON-lines file of result records.
class ResultStore {
 public:
  explicit ResultStore(std::filesystem::path path) : path_(std::move(path)) {}
  void append(const nlohmann::json& record);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};
std::vector<nlohmann::json> read_results(const std::filesystem::path& path);

// mean +- standard error per (agent, condition), scores and each survey
// question (answers absent in some records are skipped).
struct ResultAggregate {
  std::string agent;
  std::string condition;
  int n = 0;
  double score_mean = 0.0, score_stderr = 0.0;
  int lost = 0;
  int n_survey = 0;
  std::array<double, kSurveyQuestions> survey_mean{}, survey_stderr{};
};
std::vector<ResultAggregate> aggregate_results(const std::vector<nlohmann::json>& records);
CsvTable results_csv(const std::vector<ResultAggregate>& rows);

class SessionManager {
 public:
  explicit SessionManager(std::vector<SessionAgent> agents,
                          std::optional<std::filesystem::path> results_path = {});

  nlohmann::json agents_json() const;
  // Returns the new session. Throws SessionError for unknown agents or bad
  // options.
  std::shared_ptr<Session> create(const nlohmann::json& body);
  std::shared_ptr<Session> create(const SessionOptions& options,
                                  std::unique_ptr<State> initial = nullptr);
  // Throws SessionError 404.
  std::shared_ptr<Session> get(const std::string& id) const;
  // Records the result and appends it to the results file.
  nlohmann::json record_result(const std::string& id, const nlohmann::json& body);
  size_t size() const;
  void shutdown();

 private:
  std::map<std::string, std::shared_ptr<const SessionAgent>> agents_;
  std::optional<ResultStore> results_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  Rng id_rng_;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_SESSION_H_
