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

#include "instructrl/session.h"

#include <cmath>
#include <ctime>
#include <fstream>
#include <random>

#include "instructrl/errors.h"
#include "instructrl/hanabi.h"
#include "instructrl/lang.h"
#include "instructrl/say_select.h"

namespace instructrl {

namespace {

const char* type_name(HanabiAction::Type t) {
  switch (t) {
    case HanabiAction::Type::kPlay: return "play";
    case HanabiAction::Type::kDiscard: return "discard";
    case HanabiAction::Type::kHintColor: return "hint_color";
    case HanabiAction::Type::kHintRank: return "hint_rank";
  }
  return "?";
}

std::optional<HanabiAction::Type> type_from_name(const std::string& s) {
  for (auto t : {HanabiAction::Type::kPlay, HanabiAction::Type::kDiscard,
                 HanabiAction::Type::kHintColor, HanabiAction::Type::kHintRank})
    if (s == type_name(t)) return t;
  return std::nullopt;
}

nlohmann::json hanabi_action_json(const HanabiAction& a, const HanabiConfig& h) {
  nlohmann::json j = {{"id", a.to_id(h)},
                      {"type", type_name(a.type)},
                      {"value", a.value},
                      {"label", a.to_string()},
                      {"text", describe_hanabi_action(a)}};
  if (a.type == HanabiAction::Type::kHintColor) j["color"] = color_name(a.value);
  if (a.type == HanabiAction::Type::kHintRank) j["rank"] = a.value + 1;
  if (!a.is_hint()) j["position"] = std::string(1, position_letter(a.value));
  return j;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_protocol(const nlohmann::json& body) {
  if (!body.is_object()) throw SessionError(400, "bad_request", "body must be a JSON object");
  if (body.contains("protocol_version") && body.at("protocol_version") != kProtocolVersion)
    throw SessionError(400, "protocol_version",
                       "unsupported protocol version " + body.at("protocol_version").dump());
}

std::string condition_of(bool visible) { return visible ? "with_L" : "without_L"; }

void mean_se(const std::vector<double>& xs, double& mean, double& se) {
  mean = se = 0.0;
  if (xs.empty()) return;
  for (double x : xs) mean += x;
  mean /= xs.size();
  if (xs.size() < 2) return;
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  se = std::sqrt(ss / (xs.size() - 1) / xs.size());
}

}  // namespace

nlohmann::json SessionError::to_json() const {
  nlohmann::json j = {{"protocol_version", kProtocolVersion},
                      {"error", {{"code", code_}, {"message", what()}}}};
  if (!details_.is_null()) j["error"]["details"] = details_;
  return j;
}

// ---- agents ----

SessionAgent SessionAgent::from_checkpoint(std::string name, AnyCheckpoint checkpoint) {
  SessionAgent a;
  a.name = std::move(name);
  a.env = checkpoint_env(checkpoint);
  std::shared_ptr<const PriorTable> prior;
  if (auto* s = std::get_if<SaySelectCheckpoint>(&checkpoint)) {
    prior = s->prior;
    a.say_select = std::make_shared<const SaySelectCheckpoint>(std::move(*s));
  } else {
    auto& h = std::get<HanabiTrainResult>(checkpoint);
    prior = h.agent.prior();
    a.hanabi = std::make_shared<const HanabiAgent>(std::move(h.agent));
  }
  if (prior) {
    a.instruction_key = prior->instruction().key;
    a.instruction_text = prior->instruction().text;
  }
  return a;
}

nlohmann::json SessionAgent::describe() const {
  return {{"name", name},
          {"env", to_string(env.env_id)},
          {"hanabi", env.env_id == EnvId::kHanabi ? nlohmann::json(env.hanabi) : nlohmann::json(nullptr)},
          {"instructed", !instruction_key.empty()},
          {"human_seats", env.env_id == EnvId::kHanabi ? nlohmann::json{0, 1} : nlohmann::json{1}}};
}

SessionOptions session_options_from_json(const nlohmann::json& body) {
  check_protocol(body);
  SessionOptions o;
  try {
    o.agent = body.at("agent").get<std::string>();
    o.human_seat = body.value("human_seat", 0);
    o.instruction_visible = body.value("instruction_visible", false);
    if (body.contains("seed") && !body.at("seed").is_null()) o.seed = body.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw SessionError(400, "bad_request", std::string("session options: ") + e.what());
  }
  if (o.human_seat != 0 && o.human_seat != 1)
    throw SessionError(400, "bad_request", "human_seat must be 0 or 1");
  return o;
}

// ---- sessions ----

Session::Session(std::string id, std::shared_ptr<const SessionAgent> agent,
                 SessionOptions options, uint64_t seed, std::unique_ptr<State> initial)
    : id_(std::move(id)),
      agent_(std::move(agent)),
      options_(std::move(options)),
      seed_(seed),
      rng_(derive_seed(seed, streams::kPolicy)) {
  if (agent_->env.env_id == EnvId::kSaySelect && options_.human_seat != SaySelectState::kBob)
    throw SessionError(400, "bad_request", "Say-Select sessions seat the human as Bob (seat 1)");
  state_ = initial ? std::move(initial) : new_initial_state(agent_->env, seed);
  if (state_->config() != agent_->env)
    throw SessionError(400, "bad_request", "initial state does not match the agent's env");
  if (agent_->hanabi)
    policy_ = std::make_unique<HanabiAgentPolicy>(agent_->hanabi);
  else
    policy_ = std::make_unique<SaySelectTablePolicy>(*make_table_policy(*agent_->say_select));
  std::lock_guard lock(mu_);
  push_event_locked("created", nlohmann::json::object());
  agent_moves_locked();
}

bool Session::terminal() const {
  std::lock_guard lock(mu_);
  return state_->is_terminal();
}

int Session::apply_locked(int action, bool by_human) {
  const int actor = state_->current_player();
  nlohmann::json entry = {{"move_number", state_->move_number()},
                          {"player", actor},
                          {"actor", by_human ? "human" : "agent"},
                          {"action", action}};
  if (state_->env_id() == EnvId::kHanabi) {
    const auto& h = static_cast<const HanabiState&>(*state_);
    const HanabiAction a = HanabiAction::from_id(action, h.hanabi());
    entry["type"] = type_name(a.type);
    entry["action_text"] = describe_hanabi_action(a);
    const int reward = state_->apply_action(action);
    const LastMove& m = h.last_move();
    // What the other player was told, in the prior's own phrasing.
    entry["description"] = describe_hanabi_move(m, 1 - actor);
    if (m.type == LastMove::Type::kPlay || m.type == LastMove::Type::kDiscard) {
      entry["card"] = {{"color", color_name(m.card.color)}, {"rank", m.card.rank + 1}};
      if (m.type == LastMove::Type::kPlay) entry["success"] = m.success;
    }
    entry["reward"] = reward;
  } else {
    entry["type"] = action == SaySelectState::kQuit ? "quit" : (actor == 0 ? "say" : "pick");
    entry["action_text"] = state_->action_to_string(action);
    entry["description"] = actor == 0 ? "Alice says " + describe_say_select_action(action)
                                      : (action == SaySelectState::kQuit
                                             ? std::string("Bob quits")
                                             : "Bob picks ball " + describe_say_select_action(action));
    entry["reward"] = state_->apply_action(action);
  }
  log_.push_back(entry);
  push_event_locked(state_->is_terminal() ? "game_over" : "turn", {{"move", entry}});
  return entry["reward"].get<int>();
}

void Session::agent_moves_locked() {
  while (!state_->is_terminal() && state_->current_player() != options_.human_seat) {
    const int a = policy_->decide(*state_, rng_).action;
    if (!state_->is_legal(a)) throw ContractViolation("agent chose an illegal action");
    apply_locked(a, false);
  }
}

nlohmann::json Session::legal_actions_locked() const {
  nlohmann::json out = nlohmann::json::array();
  for (int a : state_->legal_actions()) {
    if (state_->env_id() == EnvId::kHanabi) {
      const auto& h = static_cast<const HanabiState&>(*state_).hanabi();
      out.push_back(hanabi_action_json(HanabiAction::from_id(a, h), h));
    } else {
      out.push_back({{"id", a},
                     {"type", a == SaySelectState::kQuit ? "quit" : "pick"},
                     {"value", a},
                     {"text", describe_say_select_action(a)}});
    }
  }
  return out;
}

nlohmann::json Session::view_locked() const {
  const int human = options_.human_seat;
  nlohmann::json v = {{"protocol_version", kProtocolVersion},
                      {"session_id", id_},
                      {"agent", agent_->name},
                      {"env", to_string(agent_->env.env_id)},
                      {"human_seat", human},
                      {"condition", condition_of(options_.instruction_visible)},
                      {"seed", seed_}};
  // Only present when the flag is set: the other condition must not carry it.
  if (options_.instruction_visible && !agent_->instruction_text.empty())
    v["instruction"] = agent_->instruction_text;
  if (state_->env_id() == EnvId::kHanabi) {
    v["state"] = static_cast<const HanabiState&>(*state_).snapshot(human);
  } else {
    const auto& s = static_cast<const SaySelectState&>(*state_);
    v["state"] = {{"alice_two_ago", s.alice_two_ago()},
                  {"alice_one_ago", s.alice_one_ago()},
                  {"current_player", s.current_player()},
                  {"move_number", s.move_number()},
                  {"score", s.score()},
                  {"terminal", s.is_terminal()}};
    if (s.is_terminal()) v["state"]["ball_rewards"] = s.ball_rewards();
  }
  v["log"] = log_;
  const bool my_turn = !state_->is_terminal() && state_->current_player() == human;
  v["your_turn"] = my_turn;
  v["legal_actions"] = my_turn ? legal_actions_locked() : nlohmann::json::array();
  v["terminal"] = state_->is_terminal();
  if (state_->is_terminal()) {
    nlohmann::json r = {{"score", state_->score()}, {"lost", false}};
    if (state_->env_id() == EnvId::kHanabi) {
      const auto reason = static_cast<const HanabiState&>(*state_).end_reason();
      r["lost"] = reason == HanabiEndReason::kOutOfLives;
      r["end_reason"] = to_string(reason);
    }
    v["result"] = r;
  }
  v["result_recorded"] = recorded_;
  return v;
}

nlohmann::json Session::view() const {
  std::lock_guard lock(mu_);
  return view_locked();
}

nlohmann::json Session::act(const nlohmann::json& body) {
  check_protocol(body);
  std::lock_guard lock(mu_);
  if (state_->is_terminal()) throw SessionError(409, "game_over", "the game is over");
  if (state_->current_player() != options_.human_seat)
    throw SessionError(409, "not_your_turn", "it is the agent's turn");
  int action = -1;
  try {
    if (body.contains("action")) {
      action = body.at("action").get<int>();
    } else if (state_->env_id() == EnvId::kHanabi && body.contains("type")) {
      const auto t = type_from_name(body.at("type").get<std::string>());
      if (!t) throw SessionError(400, "bad_request", "unknown action type " + body.at("type").dump());
      const HanabiAction a{*t, body.at("value").get<int>()};
      const auto& h = static_cast<const HanabiState&>(*state_).hanabi();
      const int limit = a.is_hint() ? (*t == HanabiAction::Type::kHintColor ? h.num_colors : h.num_ranks)
                                    : h.hand_size;
      if (a.value < 0 || a.value >= limit)
        throw SessionError(400, "bad_request", "action value out of range");
      action = a.to_id(h);
    } else {
      throw SessionError(400, "bad_request", "expected \"action\" or \"type\" and \"value\"");
    }
  } catch (const nlohmann::json::exception& e) {
    throw SessionError(400, "bad_request", std::string("action: ") + e.what());
  }
  if (action < 0 || action >= state_->num_distinct_actions() || !state_->is_legal(action))
    throw SessionError(422, "illegal_action", "action " + std::to_string(action) + " is not legal now",
                       {{"legal_actions", legal_actions_locked()}});
  apply_locked(action, true);
  agent_moves_locked();
  return view_locked();
}

nlohmann::json Session::finish(const nlohmann::json& body) {
  check_protocol(body);
  std::lock_guard lock(mu_);
  if (!state_->is_terminal()) throw SessionError(409, "not_terminal", "the game is still running");
  if (recorded_) throw SessionError(409, "duplicate_result", "result already recorded");
  nlohmann::json survey = nullptr;
  if (body.contains("survey") && !body.at("survey").is_null()) {
    const auto& s = body.at("survey");
    if (!s.is_array() || s.size() != kSurveyQuestions)
      throw SessionError(400, "bad_survey", "survey must list two answers");
    for (const auto& a : s)
      if (!a.is_number_integer() || a.get<int>() < 1 || a.get<int>() > 7)
        throw SessionError(400, "bad_survey", "survey answers are integers in [1, 7]");
    survey = s;
  }
  nlohmann::json record = {{"protocol_version", kProtocolVersion},
                           {"session_id", id_},
                           {"agent", agent_->name},
                           {"instruction", agent_->instruction_key.empty()
                                               ? nlohmann::json(nullptr)
                                               : nlohmann::json(agent_->instruction_key)},
                           {"condition", condition_of(options_.instruction_visible)},
                           {"env", to_string(agent_->env.env_id)},
                           {"human_seat", options_.human_seat},
                           {"seed", seed_},
                           {"score", state_->score()},
                           {"lost", false},
                           {"moves", state_->move_number()},
                           {"survey", survey},
                           {"finished_at", utc_now()}};
  if (state_->env_id() == EnvId::kHanabi) {
    const auto reason = static_cast<const HanabiState&>(*state_).end_reason();
    record["lost"] = reason == HanabiEndReason::kOutOfLives;
    record["end_reason"] = to_string(reason);
  }
  recorded_ = true;
  push_event_locked("result", {{"record", record}});
  return record;
}

void Session::push_event_locked(const std::string& type, nlohmann::json payload) {
  payload["protocol_version"] = kProtocolVersion;
  payload["session_id"] = id_;
  payload["seq"] = static_cast<int64_t>(events_.size()) + 1;
  payload["event"] = type;
  payload["current_player"] = state_->current_player();
  payload["your_turn"] = !state_->is_terminal() && state_->current_player() == options_.human_seat;
  payload["terminal"] = state_->is_terminal();
  payload["score"] = state_->score();
  events_.push_back(std::move(payload));
  cv_.notify_all();
}

std::vector<nlohmann::json> Session::events_after(int64_t after,
                                                  std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mu_);
  if (after < 0) after = 0;
  cv_.wait_for(lock, timeout,
               [&] { return closed_ || static_cast<int64_t>(events_.size()) > after; });
  std::vector<nlohmann::json> out;
  for (auto i = static_cast<size_t>(after); i < events_.size(); ++i) out.push_back(events_[i]);
  return out;
}

int64_t Session::event_count() const {
  std::lock_guard lock(mu_);
  return static_cast<int64_t>(events_.size());
}

void Session::close() {
  std::lock_guard lock(mu_);
  closed_ = true;
  cv_.notify_all();
}

bool Session::closed() const {
  std::lock_guard lock(mu_);
  return closed_;
}

// ---- results ----

void ResultStore::append(const nlohmann::json& record) {
  std::lock_guard lock(mu_);
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw ConfigError("cannot open results file " + path_.string());
  out << record.dump() << '\n';
  out.flush();
  if (!out) throw ConfigError("short write to " + path_.string());
}

std::vector<nlohmann::json> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::parse_error&) {
      // A torn last line after a crash is skipped; anything else is an error.
      if (in.peek() == EOF) break;
      throw ConfigError(path.string() + ": bad record on line " + std::to_string(n));
    }
  }
  return out;
}

std::vector<ResultAggregate> aggregate_results(const std::vector<nlohmann::json>& records) {
  struct Acc {
    std::vector<double> scores;
    int lost = 0;
    std::array<std::vector<double>, kSurveyQuestions> survey;
    int n_survey = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& r : records) {
    Acc& a = groups[{r.at("agent").get<std::string>(), r.at("condition").get<std::string>()}];
    a.scores.push_back(r.at("score").get<double>());
    a.lost += r.value("lost", false);
    if (r.contains("survey") && r.at("survey").is_array()) {
      ++a.n_survey;
      for (int q = 0; q < kSurveyQuestions; ++q) a.survey[q].push_back(r.at("survey").at(q).get<double>());
    }
  }
  std::vector<ResultAggregate> out;
  for (const auto& [key, a] : groups) {
    ResultAggregate g;
    g.agent = key.first;
    g.condition = key.second;
    g.n = static_cast<int>(a.scores.size());
    mean_se(a.scores, g.score_mean, g.score_stderr);
    g.lost = a.lost;
    g.n_survey = a.n_survey;
    for (int q = 0; q < kSurveyQuestions; ++q) mean_se(a.survey[q], g.survey_mean[q], g.survey_stderr[q]);
    out.push_back(g);
  }
  return out;
}

CsvTable results_csv(const std::vector<ResultAggregate>& rows) {
  CsvTable t;
  t.header = {"agent", "condition", "n", "score_mean", "score_stderr", "lost", "n_survey",
              "q1_mean", "q1_stderr", "q2_mean", "q2_stderr"};
  for (const auto& g : rows)
    t.add_row({g.agent, g.condition, std::to_string(g.n), format_number(g.score_mean),
               format_number(g.score_stderr), std::to_string(g.lost), std::to_string(g.n_survey),
               format_number(g.survey_mean[0]), format_number(g.survey_stderr[0]),
               format_number(g.survey_mean[1]), format_number(g.survey_stderr[1])});
  return t;
}

// ---- manager ----

SessionManager::SessionManager(std::vector<SessionAgent> agents,
                               std::optional<std::filesystem::path> results_path)
    : id_rng_(std::random_device{}()) {
  for (auto& a : agents) {
    const std::string name = a.name;
    if (!agents_.emplace(name, std::make_shared<const SessionAgent>(std::move(a))).second)
      throw ConfigError("duplicate agent name '" + name + "'");
  }
  if (results_path) results_.emplace(*results_path);
}

nlohmann::json SessionManager::agents_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [name, a] : agents_) out.push_back(a->describe());
  return out;
}

std::shared_ptr<Session> SessionManager::create(const nlohmann::json& body) {
  return create(session_options_from_json(body));
}

std::shared_ptr<Session> SessionManager::create(const SessionOptions& options,
                                                std::unique_ptr<State> initial) {
  const auto it = agents_.find(options.agent);
  if (it == agents_.end())
    throw SessionError(404, "unknown_agent", "no agent named '" + options.agent + "'");
  std::string id;
  uint64_t seed;
  {
    std::lock_guard lock(mu_);
    do {
      char buf[17];
      std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id_rng_.next_u64()));
      id = buf;
    } while (sessions_.count(id));
    seed = options.seed ? *options.seed : id_rng_.next_u64();
  }
  auto s = std::make_shared<Session>(id, it->second, options, seed, std::move(initial));
  std::lock_guard lock(mu_);
  sessions_[id] = s;
  return s;
}

std::shared_ptr<Session> SessionManager::get(const std::string& id) const {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw SessionError(404, "unknown_session", "no session '" + id + "'");
  return it->second;
}

nlohmann::json SessionManager::record_result(const std::string& id, const nlohmann::json& body) {
  nlohmann::json record = get(id)->finish(body);
  if (results_) results_->append(record);
  return record;
}

size_t SessionManager::size() const {
  std::lock_guard lock(mu_);
  return sessions_.size();
}

void SessionManager::shutdown() {
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) s->close();
}

}  // namespace instructrl
