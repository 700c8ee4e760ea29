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

// instructrl command-line tool: train, eval, analyze, prior build/audit,
// sweep and serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "instructrl/errors.h"
#include "instructrl/eval.h"
#include "instructrl/lang.h"
#include "instructrl/prior.h"
#include "instructrl/report.h"
#include "instructrl/run.h"
#include "instructrl/server.h"
#include "instructrl/session.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace instructrl;

namespace {

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
  std::optional<int> threads;
};

void log_line(const std::string& m) { std::cerr << "[instructrl] " << m << std::endl; }

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

RunConfig run_config_with_overrides(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  RunConfig c = load_run_config(g.config);
  if (g.seed) c.seed = *g.seed;
  if (!g.out.empty()) c.out = g.out;
  if (g.threads) c.threads = *g.threads;
  c.validate();
  return c;
}

fs::path out_dir(const Globals& g, const std::string& fallback) {
  fs::path p = g.out.empty() ? fs::path(fallback) : fs::path(g.out);
  fs::create_directories(p);
  return p;
}

void save_csv(const CsvTable& t, const fs::path& p) {
  t.save(p);
  std::cout << p.string() << "\n";
}

void save_text(const std::string& s, const fs::path& p) {
  write_text_file(p, s);
  std::cout << p.string() << "\n";
}

// A checkpoint loaded as something that can sit in an evaluation seat.
struct Loaded {
  std::string name;
  AnyCheckpoint checkpoint;
  EvalPlayer player;
};

Loaded load_player(const std::string& path, bool pure_q) {
  AnyCheckpoint c = load_any_checkpoint(path);
  std::string name = fs::path(path).parent_path().filename().string();
  if (name.empty()) name = fs::path(path).stem().string();
  EvalPlayer p;
  if (auto* s = std::get_if<SaySelectCheckpoint>(&c)) {
    p = EvalPlayer::of(std::shared_ptr<Policy>(make_table_policy(*s)), name);
  } else {
    p = EvalPlayer::of(std::make_shared<const HanabiAgent>(std::get<HanabiTrainResult>(c).agent),
                       name, pure_q);
  }
  return {name, std::move(c), std::move(p)};
}

std::vector<Loaded> load_players(const std::vector<std::string>& paths, bool pure_q,
                                 const std::string& env_check) {
  if (paths.empty()) throw ConfigError("give at least one --checkpoint");
  std::vector<Loaded> out;
  for (const auto& p : paths) out.push_back(load_player(p, pure_q));
  const EnvConfig& env = checkpoint_env(out[0].checkpoint);
  for (const auto& l : out)
    if (!(checkpoint_env(l.checkpoint) == env))
      throw ConfigError("checkpoint " + l.name + " was trained on a different environment");
  if (!env_check.empty() && to_string(env.env_id) != env_check &&
      !(env_check == "hanabi_mini" && env == EnvConfig::hanabi_mini()) &&
      !(env_check == "hanabi_full" && env == EnvConfig::hanabi_full()))
    throw ConfigError("checkpoints do not match --env " + env_check);
  return out;
}

// ---- subcommands ----

int cmd_train(const Globals& g) {
  const RunConfig c = run_config_with_overrides(g);
  const TrainOutputs o = run_training(c, log_line);
  std::cout << o.checkpoint.string() << "\n" << o.curve_csv.string() << "\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::vector<std::string>& ckpts, int games, bool pure_q,
             const std::string& env_check) {
  const auto players = load_players(ckpts, pure_q, env_check);
  const EnvConfig env = checkpoint_env(players[0].checkpoint);
  const uint64_t seed = g.seed.value_or(0);
  const fs::path out = out_dir(g, "eval");
  std::vector<EvalReport> reports;
  json doc = {{"env", env}, {"seed", seed}, {"games", games}, {"pure_q", pure_q}};
  for (const auto& l : players) {
    reports.push_back(selfplay_eval(l.player, env, games, seed));
    save_csv(eval_games_csv(reports.back()), out / ("games_" + l.name + ".csv"));
    if (const auto* s = std::get_if<SaySelectCheckpoint>(&l.checkpoint)) {
      std::optional<SaySelectLogPrior> prior;
      if (s->prior) prior = say_select_log_prior(*s->prior, s->beta);
      const auto exact = evaluate_say_select_exact(s->result.alice, s->result.bob,
                                                   prior ? &*prior : nullptr,
                                                   s->prior ? s->result.final_lambda : 0.0, env);
      doc["say_select_exact"][l.name] = {{"expected_return", exact.expected_return},
                                         {"expected_score", exact.expected_score},
                                         {"optimal_return", say_select_optimal_return(env)}};
    }
  }
  if (players.size() > 1 && env.env_id == EnvId::kHanabi) {
    std::vector<EvalPlayer> ps;
    for (const auto& l : players) ps.push_back(l.player);
    const IntraAxpReport axp = intra_axp(ps, env, games, seed);
    std::vector<EvalReport> rows = axp.pairs;
    rows.push_back(axp.aggregate);
    rows.push_back(axp.selfplay_aggregate);
    save_csv(eval_summary_csv(rows), out / "intra_axp.csv");
    doc["intra_axp"] = {{"aggregate", axp.aggregate},
                        {"selfplay", axp.selfplay_aggregate},
                        {"gap", axp.gap},
                        {"gap_stderr", axp.gap_stderr}};
  }
  doc["selfplay"] = reports;
  save_csv(eval_summary_csv(reports), out / "eval_summary.csv");
  write_json_atomic(out / "report.json", doc);
  for (const auto& r : reports)
    std::cerr << r.method << ": " << format_number(r.mean_score) << " +- "
              << format_number(r.stderr_score) << " (lost " << r.games_lost << "/" << r.n_games
              << ")\n";
  return 0;
}

int cmd_analyze(const Globals& g, const std::vector<std::string>& ckpts,
                std::vector<std::string> analyses, int games, bool pure_q,
                const std::string& results) {
  const fs::path out = out_dir(g, "analysis");
  const uint64_t seed = g.seed.value_or(0);
  if (!results.empty()) {
    save_csv(results_csv(aggregate_results(read_results(results))), out / "human_results.csv");
    if (ckpts.empty()) return 0;
  }
  const auto players = load_players(ckpts, pure_q, "");
  const EnvConfig env = checkpoint_env(players[0].checkpoint);
  if (analyses.empty())
    analyses = env.env_id == EnvId::kHanabi ? std::vector<std::string>{"matrix", "knowledge", "hints"}
                                            : std::vector<std::string>{"grid"};
  for (const auto& l : players) {
    for (const auto& a : analyses) {
      if (a == "grid") {
        const auto* s = std::get_if<SaySelectCheckpoint>(&l.checkpoint);
        if (!s) throw ConfigError("grid needs a Say-Select checkpoint");
        std::optional<SaySelectLogPrior> prior;
        if (s->prior) prior = say_select_log_prior(*s->prior, s->beta);
        const BobGrid grid = bob_policy_grid(s->result.bob, prior ? &*prior : nullptr,
                                             s->prior ? s->result.final_lambda : 0.0);
        save_csv(bob_grid_csv(grid), out / (l.name + "_bob_grid.csv"));
        save_text(bob_grid_text(grid), out / (l.name + "_bob_grid.txt"));
        continue;
      }
      if (env.env_id != EnvId::kHanabi) throw ConfigError("analysis '" + a + "' needs Hanabi");
      if (a == "matrix" || a == "hints") {
        const ActionMatrix m = conditional_action_matrix(l.player, env, games, seed);
        if (a == "matrix") {
          save_csv(action_matrix_csv(m), out / (l.name + "_action_matrix.csv"));
          save_text(action_matrix_svg(m, l.name), out / (l.name + "_action_matrix.svg"));
          const ActionMatrix r = reduce_by_move_type(m, env.hanabi);
          save_csv(action_matrix_csv(r), out / (l.name + "_action_matrix_by_type.csv"));
        } else {
          const HintCounts h = hint_counts(m, env.hanabi);
          CsvTable t;
          t.header = {"agent", "color_hints", "rank_hints", "color_fraction"};
          t.add_row({l.name, std::to_string(h.color), std::to_string(h.rank),
                     format_number(h.color_fraction())});
          save_csv(t, out / (l.name + "_hints.csv"));
        }
      } else if (a == "knowledge") {
        save_csv(card_knowledge_csv(card_knowledge_report(l.player, env, games, seed)),
                 out / (l.name + "_card_knowledge.csv"));
      } else {
        throw ConfigError("unknown analysis '" + a + "' (matrix, hints, knowledge, grid)");
      }
    }
  }
  return 0;
}

int cmd_prior_build(const Globals& g) {
  const RunConfig c = run_config_with_overrides(g);
  if (c.instruction.empty()) throw ConfigError("the run config names no instruction");
  const auto table = resolve_prior(c, log_line);
  std::cout << c.resolved_prior_cache().string() << "\n";
  std::cerr << table->size() << " entries\n";
  return 0;
}

int cmd_prior_audit(const Globals& g, const std::string& prior_path, const std::string& reference,
                    std::optional<double> noise) {
  PriorTable t = PriorTable::load(prior_path);
  json audit = {{"path", prior_path},
                {"entries", t.size()},
                {"enumerated", enumerate_pairs(t.env()).size()},
                {"complete", t.is_complete()},
                {"binary", t.is_binary()},
                {"instruction", t.instruction().key},
                {"backend", t.backend()},
                {"provenance", t.provenance().kind}};
  if (t.is_binary()) {
    size_t yes = 0;
    for (const auto& e : t.entries()) yes += e.logit > 0.5;
    audit["positive_entries"] = yes;
  }
  if (!reference.empty()) audit["accuracy"] = prior_accuracy(t, PriorTable::load(reference));
  if (noise) {
    const uint64_t seed = g.seed.value_or(0);
    const PriorTable noisy = corrupt_prior(t, *noise, derive_seed(seed, streams::kCorruption));
    audit["noise"] = {{"ratio", *noise}, {"accuracy", prior_accuracy(noisy, t)}};
    if (!g.out.empty()) {
      noisy.save(fs::path(g.out) / "prior_noisy.json");
      audit["noise"]["path"] = (fs::path(g.out) / "prior_noisy.json").string();
    }
  }
  std::cout << audit.dump(2) << "\n";
  if (!g.out.empty()) write_json_atomic(fs::path(g.out) / "audit.json", audit);
  return 0;
}

int cmd_sweep(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  const json spec = read_json_file(g.config);
  const std::string kind = spec.value("kind", std::string());
  const fs::path out = out_dir(g, spec.value("out", std::string("sweep")));
  const uint64_t seed = g.seed.value_or(spec.value("eval_seed", uint64_t{0}));
  const int games = spec.value("games", 1000);
  if (kind == "noise") {
    RunConfig run = spec.at("run").get<RunConfig>();
    if (g.threads) run.threads = *g.threads;
    if (!run.prior_cache) run.prior_cache = out / "prior.json";
    const auto clean = resolve_prior(run, log_line);
    const HanabiTrainConfig base = hanabi_train_config(run);
    const auto provider = training_agent_provider(base, out / "agents", log_line);
    const auto noise = spec.at("noise").get<std::vector<double>>();
    const auto clean_seeds = spec.at("clean_seeds").get<std::vector<uint64_t>>();
    const auto noisy_seeds = spec.at("noisy_seeds").get<std::vector<uint64_t>>();
    const auto pts = noise_sweep(clean, noise, clean_seeds, noisy_seeds, provider, run.env, games, seed);
    save_csv(noise_sweep_csv(pts), out / "noise_sweep.csv");
    save_text(noise_sweep_svg(pts, "cross-play vs prior noise"), out / "noise_sweep.svg");
    return 0;
  }
  if (kind == "adaptation") {
    const Loaded base = load_player(spec.at("base").get<std::string>(), false);
    const auto* h = std::get_if<HanabiTrainResult>(&base.checkpoint);
    if (!h) throw ConfigError("adaptation needs a Hanabi checkpoint as base");
    RunConfig pr;
    pr.env = h->agent.env();
    pr.learner = Learner::kInstructQ;
    pr.instruction = spec.at("instruction").get<std::string>();
    pr.prior_cache = out / ("prior_" + pr.instruction + ".json");
    pr.out = out;
    const auto prior = resolve_prior(pr, log_line);
    std::optional<Loaded> partner;
    if (spec.contains("partner")) partner = load_player(spec.at("partner").get<std::string>(), false);
    const auto lambdas = spec.at("lambdas").get<std::vector<double>>();
    const auto pts = adaptation_sweep(h->agent, prior, lambdas, partner ? &partner->player : nullptr,
                                      pr.env, games, seed);
    save_csv(adaptation_csv(pts), out / "adaptation.csv");
    save_text(adaptation_svg(pts, "test-time adaptation"), out / "adaptation.svg");
    std::cerr << "self-play non-increasing over the upper half: "
              << (selfplay_non_increasing_top_half(pts) ? "yes" : "no") << "\n";
    return 0;
  }
  throw ConfigError("sweep kind must be \"noise\" or \"adaptation\"");
}

SessionServer* g_server = nullptr;

int cmd_serve(const std::vector<std::string>& agent_specs, const std::string& host, int port,
              const std::string& results) {
  std::vector<SessionAgent> agents;
  for (const auto& spec : agent_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("--agent takes name=checkpoint");
    agents.push_back(SessionAgent::from_checkpoint(spec.substr(0, eq),
                                                   load_any_checkpoint(spec.substr(eq + 1))));
  }
  if (agents.empty()) throw ConfigError("give at least one --agent name=checkpoint");
  SessionManager manager(std::move(agents), results.empty() ? std::nullopt
                                                           : std::optional<fs::path>(results));
  SessionServer server(manager);
  if (!server.bind(host, port)) throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  log_line("serving on http://" + host + ":" + std::to_string(port));
  server.listen_after_bind();
  g_server = nullptr;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instructrl: reinforcement learning regularized toward a language prior"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Run config (train, prior build) or sweep spec (sweep)");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads; 1 is deterministic mode")
      ->check(CLI::PositiveNumber);
  app.fallthrough();

  auto* train = app.add_subcommand("train", "Train per a run config");

  std::vector<std::string> ckpts;
  int games = 1000;
  bool pure_q = false;
  std::string env_check;
  auto* eval = app.add_subcommand("eval", "Self-play (and intra-AXP for several Hanabi checkpoints)");
  eval->add_option("--checkpoint", ckpts, "Checkpoint file (repeatable)")->required();
  eval->add_option("--games", games, "Games per evaluation")->check(CLI::PositiveNumber);
  eval->add_flag("--pure-q", pure_q, "Act on Q alone, dropping the prior term");
  eval->add_option("--env", env_check, "Fail unless the checkpoints match this env");

  std::vector<std::string> analyses;
  std::string results;
  auto* analyze = app.add_subcommand("analyze", "Action matrices, hint ratios, card knowledge, Bob grids");
  analyze->add_option("--checkpoint", ckpts, "Checkpoint file (repeatable)");
  analyze->add_option("--analysis", analyses, "matrix, hints, knowledge, grid")->delimiter(',');
  analyze->add_option("--games", games, "Games per analysis")->check(CLI::PositiveNumber);
  analyze->add_flag("--pure-q", pure_q, "Act on Q alone");
  analyze->add_option("--results", results, "Aggregate a human-play results file");

  auto* prior = app.add_subcommand("prior", "Prior tables");
  prior->require_subcommand(1);
  auto* prior_build = prior->add_subcommand("build", "Build (or resume) the prior named by a run config");
  std::string prior_path, reference;
  std::optional<double> noise;
  auto* prior_audit = prior->add_subcommand("audit", "Summarize a prior table");
  prior_audit->add_option("--prior", prior_path, "Prior table file")->required();
  prior_audit->add_option("--reference", reference, "Table to measure accuracy against");
  prior_audit->add_option("--noise", noise, "Also corrupt by this ratio and report")
      ->check(CLI::Range(0.0, 1.0));

  auto* sweep = app.add_subcommand("sweep", "Noise or adaptation sweep from a spec file");

  std::vector<std::string> agent_specs;
  std::string host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "Host live human-vs-agent sessions over HTTP");
  serve->add_option("--agent", agent_specs, "name=checkpoint (repeatable)")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");
  serve->add_option("--results", results, "JSON-lines file for result records");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(g);
    if (*eval) return cmd_eval(g, ckpts, games, pure_q, env_check);
    if (*analyze) return cmd_analyze(g, ckpts, analyses, games, pure_q, results);
    if (*prior_build) return cmd_prior_build(g);
    if (*prior_audit) return cmd_prior_audit(g, prior_path, reference, noise);
    if (*sweep) return cmd_sweep(g);
    if (*serve) return cmd_serve(agent_specs, host, port, results);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
