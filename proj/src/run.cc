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

#include "instructrl/run.h"

#include <fstream>

#include "instructrl/backend.h"
#include "instructrl/errors.h"
#include "instructrl/lang.h"
#include "instructrl/report.h"

namespace instructrl {

namespace {

constexpr const char* kRunFormat = "instructrl.run_config";
constexpr const char* kSaySelectFormat = "instructrl.say_select_checkpoint";
constexpr int kSaySelectVersion = 1;

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void say(const std::function<void(const std::string&)>& log, const std::string& m) {
  if (log) log(m);
}

}  // namespace

EnvConfig env_from_json(const nlohmann::json& j) {
  if (!j.is_string()) return j.get<EnvConfig>();
  const std::string s = j.get<std::string>();
  if (s == "say_select") return EnvConfig::say_select_default();
  if (s == "hanabi_mini") return EnvConfig::hanabi_mini();
  if (s == "hanabi_full" || s == "hanabi") return EnvConfig::hanabi_full();
  throw ConfigError("unknown env preset '" + s + "' (say_select, hanabi_mini, hanabi_full)");
}

std::string to_string(Learner l) {
  switch (l) {
    case Learner::kSaySelectTabular: return "say_select_tabular";
    case Learner::kInstructQ: return "instructq";
    case Learner::kInstructPPO: return "instructppo";
  }
  return "?";
}

Learner learner_from_string(const std::string& s) {
  if (s == "say_select_tabular" || s == "tabular") return Learner::kSaySelectTabular;
  if (s == "instructq") return Learner::kInstructQ;
  if (s == "instructppo") return Learner::kInstructPPO;
  throw ConfigError("unknown learner '" + s + "'");
}

void RunConfig::validate() const {
  env.validate();
  const bool say_select = env.env_id == EnvId::kSaySelect;
  if (say_select != (learner == Learner::kSaySelectTabular))
    throw ConfigError("learner " + to_string(learner) + " does not fit env " +
                      instructrl::to_string(env.env_id));
  if (!instruction.empty()) {
    const Instruction& inst = instruction_by_key(instruction);
    if (say_select != !inst.focus().has_value())
      throw ConfigError("instruction '" + instruction + "' is for the other environment");
  }
  if (beta && !(*beta > 0.0)) throw ConfigError("beta must be positive");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (!train.is_object()) throw ConfigError("train must be an object");
}

std::string RunConfig::resolved_backend() const {
  if (!backend.empty()) return backend;
  if (instruction.empty()) return "";
  const auto focus = instruction_by_key(instruction).focus();
  if (!focus) return "scripted";
  return *focus == HintFocus::kColor ? "oracle_color" : "oracle_rank";
}

std::filesystem::path RunConfig::resolved_prior_cache() const {
  return prior_cache ? *prior_cache : out / "prior.json";
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"format", kRunFormat},
       {"version", kRunConfigVersion},
       {"name", c.name},
       {"env", c.env},
       {"learner", to_string(c.learner)},
       {"instruction", c.instruction.empty() ? nlohmann::json(nullptr) : nlohmann::json(c.instruction)},
       {"backend", c.resolved_backend()},
       {"backend_options", c.backend_options},
       {"train", c.train},
       {"seed", c.seed},
       {"threads", c.threads},
       {"out", c.out.string()}};
  if (c.beta) j["beta"] = *c.beta;
  if (c.prior_cache) j["prior_cache"] = c.prior_cache->string();
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  if (j.contains("format") && j.at("format") != kRunFormat)
    throw ConfigError("not a run config: format " + j.at("format").dump());
  if (j.value("version", kRunConfigVersion) != kRunConfigVersion)
    throw ConfigError("unsupported run config version");
  try {
    RunConfig d;
    c.name = j.value("name", d.name);
    c.env = j.contains("env") ? env_from_json(j.at("env")) : d.env;
    c.learner = j.contains("learner")
                    ? learner_from_string(j.at("learner"))
                    : (c.env.env_id == EnvId::kSaySelect ? Learner::kSaySelectTabular
                                                         : Learner::kInstructQ);
    c.instruction = j.contains("instruction") && !j.at("instruction").is_null()
                        ? j.at("instruction").get<std::string>()
                        : "";
    c.backend = j.value("backend", std::string());
    c.backend_options = j.value("backend_options", nlohmann::json::object());
    c.beta = j.contains("beta") ? std::optional<double>(j.at("beta").get<double>()) : std::nullopt;
    c.prior_cache = j.contains("prior_cache")
                        ? std::optional<std::filesystem::path>(j.at("prior_cache").get<std::string>())
                        : std::nullopt;
    c.train = j.value("train", nlohmann::json::object());
    c.seed = j.value("seed", d.seed);
    c.threads = j.value("threads", d.threads);
    c.out = j.value("out", d.out.string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
}

RunConfig load_run_config(const std::filesystem::path& path) {
  return read_json(path).get<RunConfig>();
}

SaySelectTrainConfig say_select_train_config(const RunConfig& config) {
  nlohmann::json t = config.train;
  t["env"] = config.env;
  t["seed"] = config.seed;
  if (config.beta) t["beta"] = *config.beta;
  SaySelectTrainConfig c;
  try {
    c = t.get<SaySelectTrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (config.instruction.empty()) c.bob_lambda = LambdaSchedule::constant(0.0);
  return c;
}

HanabiTrainConfig hanabi_train_config(const RunConfig& config) {
  nlohmann::json t = config.train;
  t["learner"] = config.learner == Learner::kInstructPPO ? "instructppo" : "instructq";
  t["env"] = config.env;
  t["seed"] = config.seed;
  t["threads"] = config.threads;
  if (config.beta) t["beta"] = *config.beta;
  HanabiTrainConfig c;
  try {
    c = t.get<HanabiTrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  if (config.instruction.empty()) c.lambda = LambdaSchedule::constant(0.0);
  c.validate();
  return c;
}

std::shared_ptr<const PriorTable> resolve_prior(const RunConfig& config,
                                                const std::function<void(const std::string&)>& log) {
  if (config.instruction.empty()) return nullptr;
  const auto path = config.resolved_prior_cache();
  const Instruction& inst = instruction_by_key(config.instruction);
  const double beta = config.learner == Learner::kSaySelectTabular
                          ? say_select_train_config(config).beta
                          : hanabi_train_config(config).beta;
  auto backend = make_backend(config.resolved_backend(), config.backend_options);
  if (std::filesystem::exists(path)) {
    PriorTable cached = PriorTable::load(path);
    if (cached.is_complete() && cached.instruction().text == inst.text &&
        cached.backend() == backend->name() && cached.env() == config.env) {
      say(log, "prior: cached " + path.string());
      cached.set_beta(beta);
      return std::make_shared<const PriorTable>(std::move(cached));
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  say(log, "prior: building with " + backend->name() + " into " + path.string());
  PriorBuildOptions options;
  options.cache_path = path;
  PriorBuildStats stats;
  PriorTable table = build_prior_table(config.env, inst, *backend, beta, options, &stats);
  table.save(path);
  say(log, "prior: " + std::to_string(table.size()) + " entries (" +
               std::to_string(stats.from_cache) + " cached, " + std::to_string(stats.queried) +
               " queried)");
  return std::make_shared<const PriorTable>(std::move(table));
}

// ---- Say-Select checkpoints ----

nlohmann::json say_select_checkpoint_to_json(const SaySelectCheckpoint& c) {
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& p : c.result.curve)
    curve.push_back({{"update", p.update},
                     {"lambda", p.lambda},
                     {"behavior_return", p.behavior_return},
                     {"greedy_return", p.greedy_return}});
  return {{"format", kSaySelectFormat},
          {"version", kSaySelectVersion},
          {"run_config", c.run_config},
          {"train_config", c.train_config},
          {"alice", c.result.alice},
          {"bob", c.result.bob},
          {"prior", c.prior ? c.prior->to_json() : nlohmann::json(nullptr)},
          {"beta", c.beta},
          {"final_lambda", c.result.final_lambda},
          {"plateau_update", c.result.plateau_update},
          {"curve", curve}};
}

SaySelectCheckpoint say_select_checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kSaySelectFormat)
    throw ConfigError("not a Say-Select checkpoint");
  if (j.at("version").get<int>() != kSaySelectVersion)
    throw ConfigError("unsupported Say-Select checkpoint version");
  SaySelectCheckpoint c;
  c.run_config = j.value("run_config", nlohmann::json());
  c.train_config = j.at("train_config").get<SaySelectTrainConfig>();
  c.result.alice = j.at("alice").get<QTable>();
  c.result.bob = j.at("bob").get<QTable>();
  if (!j.at("prior").is_null())
    c.prior = std::make_shared<const PriorTable>(PriorTable::from_json(j.at("prior")));
  c.beta = j.at("beta");
  c.result.final_lambda = j.at("final_lambda");
  c.result.plateau_update = j.at("plateau_update");
  for (const auto& p : j.at("curve"))
    c.result.curve.push_back({p.at("update"), p.at("lambda"), p.at("behavior_return"),
                              p.at("greedy_return")});
  return c;
}

std::shared_ptr<SaySelectTablePolicy> make_table_policy(const SaySelectCheckpoint& c) {
  std::optional<SaySelectLogPrior> prior;
  if (c.prior) prior = say_select_log_prior(*c.prior, c.beta);
  return std::make_shared<SaySelectTablePolicy>(c.result.alice, c.result.bob, prior,
                                                c.prior ? c.result.final_lambda : 0.0);
}

AnyCheckpoint load_any_checkpoint(const std::filesystem::path& path) {
  const nlohmann::json j = read_json(path);
  const std::string format = j.value("format", std::string());
  try {
    if (format == kSaySelectFormat) return say_select_checkpoint_from_json(j);
    if (format == "instructrl.checkpoint") return checkpoint_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  throw ConfigError(path.string() + ": unknown checkpoint format '" + format + "'");
}

const EnvConfig& checkpoint_env(const AnyCheckpoint& c) {
  if (const auto* s = std::get_if<SaySelectCheckpoint>(&c)) return s->train_config.env;
  return std::get<HanabiTrainResult>(c).agent.env();
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
  auto tmp = path;
  tmp += ".tmp";
  write_text_file(tmp, j.dump(1) + "\n");
  std::filesystem::rename(tmp, path);
}

// ---- training ----

TrainOutputs run_training(const RunConfig& config,
                          const std::function<void(const std::string&)>& log) {
  config.validate();
  std::filesystem::create_directories(config.out);
  TrainOutputs out{config.out / "checkpoint.json", config.out / "curve.csv",
                   config.out / "run_config.json"};
  const nlohmann::json run_json = config;
  write_json_atomic(out.run_config, run_json);
  const auto prior = resolve_prior(config, log);

  CsvTable curve;
  if (config.learner == Learner::kSaySelectTabular) {
    SaySelectCheckpoint ckpt;
    ckpt.run_config = run_json;
    ckpt.train_config = say_select_train_config(config);
    ckpt.prior = prior;
    ckpt.beta = ckpt.train_config.beta;
    say(log, "train: say-select, " + std::to_string(ckpt.train_config.num_updates) + " updates");
    ckpt.result = train_say_select(ckpt.train_config, prior.get());
    write_json_atomic(out.checkpoint, say_select_checkpoint_to_json(ckpt));
    curve.header = {"update", "lambda", "behavior_return", "greedy_return"};
    for (const auto& p : ckpt.result.curve)
      curve.add_row({std::to_string(p.update), format_number(p.lambda),
                     format_number(p.behavior_return), format_number(p.greedy_return)});
    say(log, "train: plateau at update " + std::to_string(ckpt.result.plateau_update));
  } else {
    const HanabiTrainConfig tc = hanabi_train_config(config);
    say(log, "train: " + to_string(tc.learner) + ", " + std::to_string(tc.num_updates) +
                 " updates");
    HanabiTrainHooks hooks;
    hooks.on_eval = [&](const HanabiCurvePoint& p) {
      say(log, "update " + std::to_string(p.update) + " lambda " + format_number(p.lambda) +
                   " selfplay " + format_number(p.selfplay_score));
    };
    const HanabiTrainResult r = train_hanabi(tc, prior, hooks);
    save_checkpoint(out.checkpoint, r, run_json);
    curve.header = {"update", "lambda", "epsilon", "env_steps", "games", "loss",
                    "selfplay_score", "seconds"};
    for (const auto& p : r.curve)
      curve.add_row({std::to_string(p.update), format_number(p.lambda), format_number(p.epsilon),
                     std::to_string(p.env_steps), std::to_string(p.games), format_number(p.loss),
                     format_number(p.selfplay_score), format_number(p.seconds)});
  }
  curve.save(out.curve_csv);
  say(log, "wrote " + out.checkpoint.string());
  return out;
}

}  // namespace instructrl
