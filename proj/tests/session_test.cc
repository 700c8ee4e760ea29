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

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <memory>
#include <thread>

#include "doctest.h"
#include "instructrl/backend.h"
#include "instructrl/errors.h"
#include "instructrl/hanabi.h"
#include "instructrl/lang.h"
#include "instructrl/server.h"
#include "instructrl/session.h"
// After Eigen: glibc's resolv.h, pulled in here, defines _res.
#include "httplib.h"

namespace instructrl {
namespace {

using nlohmann::json;

HanabiTrainResult tiny_trained(const std::string& focus) {
  HanabiTrainConfig c = HanabiTrainConfig::instructq_defaults(60);
  c.hidden = {16};
  c.num_envs = 8;
  c.batch_size = 32;
  c.learning_starts = 100;
  c.replay_capacity = 1000;
  c.eval_every = 60;
  c.eval_games = 5;
  std::shared_ptr<const PriorTable> prior;
  if (!focus.empty()) {
    auto backend = make_backend("oracle_" + focus);
    prior = std::make_shared<PriorTable>(build_prior_table(
        EnvConfig::hanabi_mini(), instruction_by_key(focus), *backend, c.beta));
  }
  return train_hanabi(c, prior);
}

// One manager shared by the cases: training is the slow part.
SessionManager& manager() {
  static const auto results = std::filesystem::temp_directory_path() / "instructrl_results_test.jsonl";
  static SessionManager m = [] {
    std::filesystem::remove(results);
    std::vector<SessionAgent> agents;
    agents.push_back(SessionAgent::from_checkpoint("color", tiny_trained("color")));
    agents.push_back(SessionAgent::from_checkpoint("vanilla", tiny_trained("")));
    return SessionManager(std::move(agents), results);
  }();
  return m;
}

std::filesystem::path results_path() {
  return std::filesystem::temp_directory_path() / "instructrl_results_test.jsonl";
}

SessionOptions opts(const std::string& agent, int seat, bool visible, uint64_t seed) {
  SessionOptions o;
  o.agent = agent;
  o.human_seat = seat;
  o.instruction_visible = visible;
  o.seed = seed;
  return o;
}

// Plays the first legal action until the game ends.
json play_out(Session& s) {
  json v = s.view();
  while (!v["terminal"].get<bool>()) {
    REQUIRE(v["your_turn"].get<bool>());
    v = s.act({{"action", v["legal_actions"][0]["id"]}});
  }
  return v;
}

void check_redacted(const json& view) {
  const int human = view["human_seat"];
  for (const auto& slot : view["state"]["hands"][human]) {
    CHECK_FALSE(slot.contains("card"));
    CHECK(slot.contains("knowledge"));
  }
  for (const auto& slot : view["state"]["hands"][1 - human]) CHECK(slot.contains("card"));
  CHECK(view["protocol_version"] == kProtocolVersion);
}

TEST_CASE("instruction appears only when visible") {
  const Instruction& color = instruction_by_key("color");
  auto hidden = manager().create(opts("color", 0, false, 1));
  auto shown = manager().create(opts("color", 0, true, 1));
  CHECK_FALSE(hidden->view().contains("instruction"));
  CHECK(hidden->view().dump().find(color.text) == std::string::npos);
  CHECK(hidden->view()["condition"] == "without_L");
  CHECK(shown->view()["instruction"] == color.text);
  CHECK(shown->view()["condition"] == "with_L");
  // Vanilla agents have nothing to show.
  CHECK_FALSE(manager().create(opts("vanilla", 0, true, 1))->view().contains("instruction"));
  CHECK(manager().agents_json().dump().find(color.text) == std::string::npos);
}

TEST_CASE("seeded sessions deal the same game") {
  auto a = manager().create(opts("color", 1, false, 77));
  auto b = manager().create(opts("color", 1, false, 77));
  json va = a->view(), vb = b->view();
  CHECK(va["session_id"] != vb["session_id"]);
  va.erase("session_id");
  vb.erase("session_id");
  CHECK(va == vb);
  // Agent moved first with human in seat 1.
  CHECK(va["log"].size() == 1);
  CHECK(va["log"][0]["actor"] == "agent");
  CHECK(a->view() == a->view());
}

TEST_CASE("views never carry the human's own cards") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    auto s = manager().create(opts(seed % 2 ? "color" : "vanilla", static_cast<int>(seed % 2), true, seed));
    json v = s->view();
    check_redacted(v);
    while (!v["terminal"].get<bool>()) {
      const auto& legal = v["legal_actions"];
      v = s->act({{"action", legal[seed * 7 % legal.size()]["id"]}});
      check_redacted(v);
    }
  }
  // Counterfactual: swap the human's cards with cards at the bottom of the
  // deck; the opening view must not change by a single byte.
  const EnvConfig env = EnvConfig::hanabi_mini();
  for (uint64_t seed = 0; seed < 20; ++seed) {
    HanabiState base(env, seed);
    std::vector<Card> deck = base.deck_order();
    std::vector<Card> swapped = deck;
    std::swap(swapped[0], swapped[deck.size() - 1]);
    std::swap(swapped[1], swapped[deck.size() - 2]);
    auto a = manager().create(opts("color", 0, true, 5),
                              std::make_unique<HanabiState>(env, deck));
    auto b = manager().create(opts("color", 0, true, 5),
                              std::make_unique<HanabiState>(env, swapped));
    json va = a->view(), vb = b->view();
    va.erase("session_id");
    vb.erase("session_id");
    CHECK(va.dump() == vb.dump());
  }
}

TEST_CASE("hint without tokens is rejected with the legal set") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  auto state = std::make_unique<HanabiState>(env, uint64_t{3});
  for (int i = 0; i < env.hanabi.max_hint_tokens; ++i) {
    for (int a : state->legal_actions())
      if (HanabiAction::from_id(a, env.hanabi).is_hint()) {
        state->apply_action(a);
        break;
      }
  }
  REQUIRE(state->hint_tokens() == 0);
  REQUIRE(state->current_player() == 0);
  auto s = manager().create(opts("color", 0, false, 3), std::move(state));
  try {
    s->act({{"type", "hint_rank"}, {"value", 0}});
    FAIL("accepted a hint at zero tokens");
  } catch (const SessionError& e) {
    CHECK(e.status() == 422);
    CHECK(e.code() == "illegal_action");
    const json legal = e.details()["legal_actions"];
    CHECK(legal.size() > 0);
    for (const auto& a : legal) CHECK(a["type"] != "hint_rank");
    for (const auto& a : legal) CHECK(a["type"] != "hint_color");
    CHECK(e.to_json()["protocol_version"] == kProtocolVersion);
  }
  CHECK_THROWS_AS(s->act({{"action", 99}}), SessionError);
  CHECK_THROWS_AS(s->act({{"type", "juggle"}, {"value", 0}}), SessionError);
  CHECK_THROWS_AS(s->act({{"protocol_version", 2}, {"action", 0}}), SessionError);
}

TEST_CASE("valid play scores, third bomb zeroes the score") {
  const EnvConfig env = EnvConfig::hanabi_mini();
  // Canonical order: the human (seat 0) is dealt two red ones.
  auto s = manager().create(opts("vanilla", 0, false, 1),
                            std::make_unique<HanabiState>(env, canonical_deck(env.hanabi)));
  const json v = s->act({{"type", "play"}, {"value", 0}});
  CHECK(v["log"][0]["success"] == true);
  CHECK(v["log"][0]["reward"] == 1);
  CHECK(v["log"][0]["card"]["rank"] == 1);
  CHECK(v["log"][0]["description"] == "My partner played their card at position 'A'");

  // Reversed order: everyone holds high cards; two misplays, then the
  // human's third one ends the game.
  auto deck = canonical_deck(env.hanabi);
  std::reverse(deck.begin(), deck.end());
  auto state = std::make_unique<HanabiState>(env, deck);
  state->apply_action(HanabiAction{HanabiAction::Type::kPlay, 0}.to_id(env.hanabi));
  state->apply_action(HanabiAction{HanabiAction::Type::kPlay, 0}.to_id(env.hanabi));
  REQUIRE(state->lives() == 1);
  auto bomb = manager().create(opts("vanilla", 0, false, 1), std::move(state));
  const json end = bomb->act({{"type", "play"}, {"value", 0}});
  CHECK(end["terminal"] == true);
  CHECK(end["state"]["score"] == 0);
  CHECK(end["result"]["score"] == 0);
  CHECK(end["result"]["lost"] == true);
  CHECK(end["result"]["end_reason"] == to_string(HanabiEndReason::kOutOfLives));
  CHECK(end["legal_actions"].empty());
  try {
    bomb->act({{"action", 0}});
    FAIL("acted after the end");
  } catch (const SessionError& e) {
    CHECK(e.code() == "game_over");
  }
}

TEST_CASE("agent hints read in the prior's phrasing") {
  // Find an agent rank hint in some game and check its sentence.
  bool seen = false;
  for (uint64_t seed = 0; seed < 40 && !seen; ++seed) {
    auto s = manager().create(opts("vanilla", 0, false, seed));
    const json v = play_out(*s);
    for (const auto& e : v["log"]) {
      if (e["actor"] == "agent" && e["type"] == "hint_rank") {
        const std::string d = e["description"];
        CHECK(d.rfind("My partner told me that the rank of my card", 0) == 0);
        seen = true;
      }
    }
  }
  CHECK(seen);
}

TEST_CASE("results: state machine, persistence and aggregation") {
  std::vector<std::string> ids;
  auto s = manager().create(opts("color", 0, true, 9));
  try {
    manager().record_result(s->id(), json::object());
    FAIL("recorded a running game");
  } catch (const SessionError& e) {
    CHECK(e.code() == "not_terminal");
  }
  play_out(*s);
  CHECK_THROWS_AS(manager().record_result(s->id(), {{"survey", {0, 8}}}), SessionError);
  CHECK_THROWS_AS(manager().record_result(s->id(), {{"survey", {6}}}), SessionError);
  const json rec = manager().record_result(s->id(), {{"survey", {6, 6}}});
  CHECK(rec["condition"] == "with_L");
  CHECK(rec["survey"] == json{6, 6});
  CHECK(rec["instruction"] == "color");
  CHECK(s->view()["result_recorded"] == true);
  try {
    manager().record_result(s->id(), {{"survey", {6, 6}}});
    FAIL("duplicate result accepted");
  } catch (const SessionError& e) {
    CHECK(e.code() == "duplicate_result");
  }
  // Nine more, some without survey.
  for (uint64_t seed = 10; seed < 19; ++seed) {
    auto t = manager().create(opts("color", 1, true, seed));
    play_out(*t);
    manager().record_result(t->id(), seed % 3 ? json{{"survey", {5, 7}}} : json::object());
  }
  const auto records = read_results(results_path());
  REQUIRE(records.size() >= 10);
  std::vector<json> mine(records.end() - 10, records.end());
  CHECK(mine[0]["session_id"] == s->id());
  const auto agg = aggregate_results(mine);
  REQUIRE(agg.size() == 1);
  CHECK(agg[0].n == 10);
  CHECK(agg[0].n_survey == 7);
  double mean = 0;
  for (const auto& r : mine) mean += r["score"].get<double>();
  CHECK(agg[0].score_mean == doctest::Approx(mean / 10));
  CHECK(agg[0].survey_mean[1] == doctest::Approx((6.0 + 6 * 7.0) / 7));
  CHECK(results_csv(agg).rows.size() == 1);
}

TEST_CASE("events are sequenced and cover every move") {
  auto s = manager().create(opts("vanilla", 1, false, 4));
  const json v = play_out(*s);
  const auto events = s->events_after(0, std::chrono::milliseconds(0));
  REQUIRE(events.size() == v["log"].size() + 1);
  CHECK(events[0]["event"] == "created");
  for (size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i]["seq"] == static_cast<int64_t>(i + 1));
    CHECK(events[i]["protocol_version"] == kProtocolVersion);
  }
  CHECK(events.back()["event"] == "game_over");
  CHECK(s->events_after(static_cast<int64_t>(events.size()), std::chrono::milliseconds(10)).empty());
}

TEST_CASE("unknown agent and bad options") {
  CHECK_THROWS_AS(manager().create(opts("nobody", 0, false, 1)), SessionError);
  CHECK_THROWS_AS(session_options_from_json({{"agent", "color"}, {"human_seat", 2}}), SessionError);
  CHECK_THROWS_AS(session_options_from_json(json::array()), SessionError);
  CHECK_THROWS_AS(manager().get("ffff"), SessionError);
}

TEST_CASE("say-select sessions seat the human as Bob") {
  SaySelectTrainConfig c;
  c.num_updates = 50;
  SaySelectCheckpoint ck;
  ck.train_config = c;
  ck.result = train_say_select(c, nullptr);
  std::vector<SessionAgent> agents;
  agents.push_back(SessionAgent::from_checkpoint("alice", ck));
  SessionManager m(std::move(agents));
  CHECK_THROWS_AS(m.create(opts("alice", 0, false, 1)), SessionError);
  auto s = m.create(opts("alice", 1, false, 1));
  json v = s->view();
  CHECK_FALSE(v["state"].contains("ball_rewards"));
  CHECK(v["log"].size() == 1);  // Alice spoke
  v = s->act({{"action", 0}});   // quit
  CHECK(v["terminal"] == true);
  CHECK(v["state"].contains("ball_rewards"));
}

// ---- HTTP ----

struct Served {
  SessionServer server{manager()};
  int port = -1;
  std::thread thread;
  Served() {
    port = server.bind_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
  }
  ~Served() {
    server.stop();
    thread.join();
  }
};

TEST_CASE("http: a full game through the documented endpoints") {
  static Served served;  // stays up for the SSE case below
  httplib::Client cli("127.0.0.1", served.port);
  cli.set_read_timeout(10, 0);

  auto health = cli.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["protocol_version"] == kProtocolVersion);
  auto agents = cli.Get("/agents");
  REQUIRE(agents);
  CHECK(json::parse(agents->body)["agents"].size() == 2);

  auto bad = cli.Post("/sessions", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  CHECK(json::parse(bad->body)["error"]["code"] == "bad_json");
  auto missing = cli.Get("/sessions/abcdef/view");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  const json create = {{"protocol_version", kProtocolVersion},
                       {"agent", "color"},
                       {"human_seat", 0},
                       {"instruction_visible", true},
                       {"seed", 12}};
  auto created = cli.Post("/sessions", create.dump(), "application/json");
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const json c = json::parse(created->body);
  const std::string id = c["session_id"];
  CHECK(c["view"]["instruction"] == instruction_by_key("color").text);

  // Collect the event stream in the background.
  std::vector<json> events;
  std::thread sse([&] {
    httplib::Client ec("127.0.0.1", served.port);
    ec.set_read_timeout(20, 0);
    std::string buf;
    ec.Get("/sessions/" + id + "/events", [&](const char* data, size_t n) {
      buf.append(data, n);
      size_t pos;
      while ((pos = buf.find("\n\n")) != std::string::npos) {
        const std::string frame = buf.substr(0, pos);
        buf.erase(0, pos + 2);
        const auto d = frame.find("data: ");
        if (d != std::string::npos) events.push_back(json::parse(frame.substr(d + 6)));
      }
      return true;
    });
  });

  json view = c["view"];
  int posts = 0;
  while (!view["terminal"].get<bool>()) {
    const json act = {{"protocol_version", kProtocolVersion},
                      {"action", view["legal_actions"][0]["id"]}};
    auto r = cli.Post("/sessions/" + id + "/actions", act.dump(), "application/json");
    REQUIRE(r);
    REQUIRE(r->status == 200);
    view = json::parse(r->body);
    check_redacted(view);
    ++posts;
  }
  CHECK(posts > 0);
  auto got = cli.Get("/sessions/" + id + "/view");
  REQUIRE(got);
  CHECK(json::parse(got->body) == view);

  auto illegal = cli.Post("/sessions/" + id + "/actions", R"({"action": 0})", "application/json");
  REQUIRE(illegal);
  CHECK(illegal->status == 409);

  auto res = cli.Post("/sessions/" + id + "/result", R"({"survey": [6, 6]})", "application/json");
  REQUIRE(res);
  CHECK(res->status == 201);
  CHECK(json::parse(res->body)["record"]["condition"] == "with_L");
  auto dup = cli.Post("/sessions/" + id + "/result", "{}", "application/json");
  REQUIRE(dup);
  CHECK(dup->status == 409);

  sse.join();
  REQUIRE(events.size() >= 3);
  CHECK(events.front()["event"] == "created");
  CHECK(events.back()["event"] == "result");
  for (size_t i = 0; i < events.size(); ++i) {
    CHECK(events[i]["seq"] == static_cast<int64_t>(i + 1));
    CHECK(events[i]["protocol_version"] == kProtocolVersion);
  }
  // Resuming from Last-Event-ID replays only what came after.
  httplib::Client ec("127.0.0.1", served.port);
  std::string tail;
  ec.Get("/sessions/" + id + "/events", {{"Last-Event-ID", std::to_string(events.size() - 1)}},
         [&](const char* data, size_t n) {
           tail.append(data, n);
           return true;
         });
  CHECK(tail.find("event: result") != std::string::npos);
  CHECK(tail.find("event: created") == std::string::npos);
}

}  // namespace
}  // namespace instructrl
