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

#include "instructrl/prior.h"

#include <cmath>
#include <fstream>
#include <limits>

#include "instructrl/errors.h"
#include "instructrl/rng.h"

namespace instructrl {

namespace {

nlohmann::json instruction_json(const Instruction& i) {
  return {{"key", i.key}, {"text", i.text}, {"template_id", to_string(i.template_id)},
          {"tag", i.tag}};
}

Instruction instruction_from_json(const nlohmann::json& j) {
  Instruction i;
  i.key = j.value("key", "");
  i.text = j.at("text").get<std::string>();
  i.template_id = template_from_string(j.at("template_id").get<std::string>());
  i.tag = j.value("tag", "");
  return i;
}

void check_beta(double beta) {
  if (!(beta >= 0) || !std::isfinite(beta)) throw ConfigError("prior: beta must be finite and >= 0");
}

// In-place log-softmax of beta * logits over entries with legal[i] set.
void log_softmax_masked(std::span<const double> logits, std::span<const uint8_t> legal,
                        double beta, std::span<double> out) {
  double hi = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i)
    if (legal[i]) hi = std::max(hi, beta * logits[i]);
  if (!std::isfinite(hi)) throw ContractViolation("prior: no legal action");
  double z = 0;
  for (size_t i = 0; i < logits.size(); ++i)
    if (legal[i]) z += std::exp(beta * logits[i] - hi);
  const double log_z = hi + std::log(z);
  for (size_t i = 0; i < logits.size(); ++i)
    out[i] = legal[i] ? beta * logits[i] - log_z : -std::numeric_limits<double>::infinity();
}

}  // namespace

PriorTable::PriorTable(EnvConfig env, Instruction instruction, std::string backend, double beta)
    : env_(std::move(env)), instruction_(std::move(instruction)), backend_(std::move(backend)) {
  set_beta(beta);
}

void PriorTable::set_beta(double beta) {
  check_beta(beta);
  beta_ = beta;
}

void PriorTable::set(const std::string& obs, const std::string& act, double logit,
                     nlohmann::json raw) {
  if (!std::isfinite(logit)) throw NumericalError("prior: non-finite logit for " + obs + " / " + act);
  auto [it, inserted] = index_.emplace(key(obs, act), entries_.size());
  if (inserted) entries_.push_back({obs, act, logit, std::move(raw)});
  else entries_[it->second] = {obs, act, logit, std::move(raw)};
}

bool PriorTable::contains(const std::string& obs, const std::string& act) const {
  return index_.contains(key(obs, act));
}

const PriorEntry* PriorTable::find(const std::string& obs, const std::string& act) const {
  auto it = index_.find(key(obs, act));
  return it == index_.end() ? nullptr : &entries_[it->second];
}

double PriorTable::logit(const std::string& obs, const std::string& act) const {
  auto it = index_.find(key(obs, act));
  if (it == index_.end())
    throw ContractViolation("prior table has no entry for observation '" + obs +
                            "' and action '" + act + "'");
  return entries_[it->second].logit;
}

bool PriorTable::is_binary() const {
  for (const PriorEntry& e : entries_)
    if (e.logit != 0.0 && e.logit != 1.0) return false;
  return true;
}

bool PriorTable::is_complete() const {
  for (const auto& [obs, act] : enumerate_pairs(env_))
    if (!contains(obs, act)) return false;
  return true;
}

nlohmann::json PriorTable::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const PriorEntry& e : entries_) {
    nlohmann::json je = {{"obs", e.obs}, {"act", e.act}, {"logit", e.logit}};
    if (!e.raw.is_null()) je["raw"] = e.raw;
    entries.push_back(std::move(je));
  }
  nlohmann::json prov = {{"kind", provenance_.kind}};
  if (provenance_.kind == "corrupted") {
    prov["base_kind"] = provenance_.base_kind;
    prov["noise_ratio"] = provenance_.noise_ratio;
    prov["noise_seed"] = provenance_.noise_seed;
  }
  return {{"format", "instructrl.prior"},
          {"version", kPriorFormatVersion},
          {"env", to_string(env_.env_id)},
          {"env_config", env_},
          {"instruction_text", instruction_.text},
          {"template_id", to_string(instruction_.template_id)},
          {"instruction", instruction_json(instruction_)},
          {"backend", backend_},
          {"beta", beta_},
          {"provenance", prov},
          {"complete", is_complete()},
          {"entries", entries}};
}

PriorTable PriorTable::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "instructrl.prior") throw ConfigError("not an instructrl prior table");
  if (j.at("version").get<int>() != kPriorFormatVersion)
    throw ConfigError("unsupported prior table version");
  Instruction inst = j.contains("instruction")
                         ? instruction_from_json(j.at("instruction"))
                         : Instruction{"", j.at("instruction_text").get<std::string>(),
                                       template_from_string(j.at("template_id")), ""};
  PriorTable t(j.at("env_config").get<EnvConfig>(), inst, j.at("backend").get<std::string>(),
               j.at("beta").get<double>());
  const auto& prov = j.value("provenance", nlohmann::json::object());
  t.provenance_.kind = prov.value("kind", "oracle");
  t.provenance_.base_kind = prov.value("base_kind", "");
  t.provenance_.noise_ratio = prov.value("noise_ratio", 0.0);
  t.provenance_.noise_seed = prov.value("noise_seed", uint64_t{0});
  for (const auto& e : j.at("entries"))
    t.set(e.at("obs").get<std::string>(), e.at("act").get<std::string>(),
          e.at("logit").get<double>(), e.value("raw", nlohmann::json()));
  return t;
}

void PriorTable::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write prior table to " + path.string());
    out << to_json().dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

PriorTable PriorTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read prior table " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed prior table " + path.string() + ": " + e.what());
  }
}

std::vector<std::string> hanabi_observation_texts(const HanabiConfig& h) {
  std::vector<std::string> out;
  LastMove none;
  out.push_back(describe_hanabi_move(none, 0));
  for (int p = 0; p < h.hand_size; ++p) {
    LastMove m;
    m.type = LastMove::Type::kPlay;
    m.player = 1;
    m.position = p;
    out.push_back(describe_hanabi_move(m, 0));
  }
  for (int p = 0; p < h.hand_size; ++p) {
    LastMove m;
    m.type = LastMove::Type::kDiscard;
    m.player = 1;
    m.position = p;
    out.push_back(describe_hanabi_move(m, 0));
  }
  const int subsets = (1 << h.hand_size) - 1;
  for (int r = 0; r < h.num_ranks; ++r)
    for (int mask = 1; mask <= subsets; ++mask)
      out.push_back(describe_hint(false, r, static_cast<uint8_t>(mask)));
  for (int c = 0; c < h.num_colors; ++c)
    for (int mask = 1; mask <= subsets; ++mask)
      out.push_back(describe_hint(true, c, static_cast<uint8_t>(mask)));
  return out;
}

std::vector<std::string> hanabi_action_texts(const HanabiConfig& h) {
  std::vector<std::string> out;
  for (int p = 0; p < h.hand_size; ++p)
    out.push_back(describe_hanabi_action({HanabiAction::Type::kPlay, p}));
  for (int p = 0; p < h.hand_size; ++p)
    out.push_back(describe_hanabi_action({HanabiAction::Type::kDiscard, p}));
  out.push_back(describe_hanabi_action({HanabiAction::Type::kHintColor, 0}));
  out.push_back(describe_hanabi_action({HanabiAction::Type::kHintRank, 0}));
  return out;
}

std::vector<std::pair<std::string, std::string>> enumerate_pairs(const EnvConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  if (config.env_id == EnvId::kHanabi) {
    const auto acts = hanabi_action_texts(config.hanabi);
    for (const std::string& o : hanabi_observation_texts(config.hanabi))
      for (const std::string& a : acts) out.emplace_back(o, a);
  } else {
    for (int o = 1; o <= SaySelectState::kNumBalls; ++o)
      for (int a = 0; a <= SaySelectState::kNumBalls; ++a)
        out.emplace_back(std::to_string(o), describe_say_select_action(a));
  }
  return out;
}

PriorTable build_prior_table(const EnvConfig& env, const Instruction& instruction,
                             LanguageBackend& backend, double beta,
                             const PriorBuildOptions& options, PriorBuildStats* stats) {
  PriorTable table(env, instruction, backend.name(), beta);
  table.set_provenance({backend.kind(), "", 0.0, 0});
  std::optional<PriorTable> cached;
  if (options.cache_path && std::filesystem::exists(*options.cache_path)) {
    cached = PriorTable::load(*options.cache_path);
    if (cached->instruction().text != instruction.text ||
        cached->instruction().template_id != instruction.template_id ||
        cached->backend() != backend.name() || !(cached->env() == env))
      throw ConfigError("prior cache " + options.cache_path->string() +
                        " was built for a different instruction, backend or environment");
  }
  PriorBuildStats local;
  const auto pairs = enumerate_pairs(env);
  size_t since_save = 0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [obs, act] = pairs[i];
    if (const PriorEntry* hit = cached ? cached->find(obs, act) : nullptr) {
      table.set(obs, act, hit->logit, hit->raw);
      ++local.from_cache;
    } else {
      try {
        nlohmann::json raw;
        double logit;
        if (instruction.template_id == TemplateId::kQaStyle) {
          logit = qa_logit(backend, build_prompt(instruction, obs, act), &raw);
        } else {
          logit = completion_logit(backend, build_prompt(instruction, obs), act, &raw);
        }
        table.set(obs, act, logit, std::move(raw));
      } catch (const RetryableBackendError&) {
        if (options.cache_path) table.save(*options.cache_path);
        if (stats) *stats = local;
        throw;
      }
      ++local.queried;
      if (options.cache_path && ++since_save >= static_cast<size_t>(options.save_every)) {
        table.save(*options.cache_path);
        since_save = 0;
      }
    }
    if (options.progress) options.progress(i + 1, pairs.size());
  }
  if (options.cache_path && (local.queried > 0 || !cached)) table.save(*options.cache_path);
  if (stats) *stats = local;
  return table;
}

std::vector<double> prior_distribution(const PriorTable& table, const std::string& obs,
                                       std::span<const std::string> legal_action_texts,
                                       double beta) {
  check_beta(beta);
  if (legal_action_texts.empty()) throw ContractViolation("prior_distribution: no legal action");
  std::vector<double> logits;
  for (const std::string& a : legal_action_texts) logits.push_back(table.logit(obs, a));
  std::vector<uint8_t> legal(logits.size(), 1);
  std::vector<double> out(logits.size());
  log_softmax_masked(logits, legal, beta, out);
  for (double& x : out) x = std::exp(x);
  return out;
}

PriorDistribution prior_for_state(const PriorTable& table, const State& state, double beta) {
  PriorDistribution d;
  d.actions = state.legal_actions();
  const std::string obs = describe_observation(state, state.current_player());
  std::vector<std::string> texts;
  for (int a : d.actions) texts.push_back(describe_action(state.env_id(), state.config(), a));
  d.probs = prior_distribution(table, obs, texts, beta);
  return d;
}

PriorTable corrupt_prior(const PriorTable& table, double noise_ratio, uint64_t seed) {
  if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0))
    throw ContractViolation("corrupt_prior: noise ratio must lie in [0, 1]");
  if (!table.is_binary()) throw ContractViolation("corrupt_prior: table logits are not binary");
  const int n = static_cast<int>(table.size());
  const int flips = static_cast<int>(std::lround(noise_ratio * n));
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, streams::kCorruption));
  for (int i = 0; i < flips; ++i) std::swap(order[i], order[i + rng.uniform_int(n - i)]);
  std::vector<uint8_t> flip(n, 0);
  for (int i = 0; i < flips; ++i) flip[order[i]] = 1;

  PriorTable out(table.env(), table.instruction(), table.backend(), table.beta());
  const auto& entries = table.entries();
  for (int i = 0; i < n; ++i) {
    const PriorEntry& e = entries[i];
    out.set(e.obs, e.act, flip[i] ? 1.0 - e.logit : e.logit);
  }
  const PriorProvenance& base = table.provenance();
  out.set_provenance({"corrupted", base.kind == "corrupted" ? base.base_kind : base.kind,
                      noise_ratio, seed});
  return out;
}

double prior_accuracy(const PriorTable& table, const PriorTable& reference) {
  if (table.size() != reference.size() || table.size() == 0)
    throw ContractViolation("prior_accuracy: tables cover different domains");
  if (!table.is_binary() || !reference.is_binary())
    throw ContractViolation("prior_accuracy: needs binary logits");
  size_t agree = 0;
  for (const PriorEntry& e : reference.entries()) {
    if (!table.contains(e.obs, e.act))
      throw ContractViolation("prior_accuracy: tables cover different domains");
    agree += table.logit(e.obs, e.act) == e.logit;
  }
  return static_cast<double>(agree) / static_cast<double>(reference.size());
}

std::pair<std::string, std::string> swap_hint_roles(const std::string& obs,
                                                    const std::string& act,
                                                    const HanabiConfig& config) {
  if (config.num_colors != config.num_ranks)
    throw ContractViolation("swap_hint_roles: needs as many colors as ranks");
  const std::string color_prefix = "My partner told me that the color of my card";
  const std::string rank_prefix = "My partner told me that the rank of my card";
  std::string o = obs;
  auto swap_value = [&](const std::string& from_prefix, const std::string& to_prefix,
                        auto from_word, auto to_word) {
    const size_t is_pos = o.rfind(" is ");
    const std::string value = o.substr(is_pos + 4);
    int v = 0;
    while (v < config.num_colors && from_word(v) != value) ++v;
    if (v == config.num_colors) throw ContractViolation("swap_hint_roles: bad hint value " + value);
    o = to_prefix + o.substr(from_prefix.size(), is_pos - from_prefix.size()) + " is " + to_word(v);
  };
  if (o.starts_with(color_prefix)) {
    swap_value(color_prefix, rank_prefix, color_name, rank_word);
  } else if (o.starts_with(rank_prefix)) {
    swap_value(rank_prefix, color_prefix, rank_word, color_name);
  }
  std::string a = act;
  if (a == "hint color to my partner") a = "hint rank to my partner";
  else if (a == "hint rank to my partner") a = "hint color to my partner";
  return {o, a};
}

CompiledHanabiPrior::CompiledHanabiPrior(const PriorTable& table, const HanabiConfig& config)
    : config_(config), num_actions_(config.num_actions()) {
  const auto obs_texts = hanabi_observation_texts(config);
  num_obs_ = static_cast<int>(obs_texts.size());
  logits_.resize(static_cast<size_t>(num_obs_) * num_actions_);
  for (int o = 0; o < num_obs_; ++o)
    for (int a = 0; a < num_actions_; ++a)
      logits_[static_cast<size_t>(o) * num_actions_ + a] =
          table.logit(obs_texts[o], describe_hanabi_action(HanabiAction::from_id(a, config)));
}

int CompiledHanabiPrior::observation_index(const LastMove& move, int observer) const {
  const int h = config_.hand_size;
  const int subsets = (1 << h) - 1;
  if (move.type == LastMove::Type::kNone || move.player == observer) return 0;
  switch (move.type) {
    case LastMove::Type::kPlay: return 1 + move.position;
    case LastMove::Type::kDiscard: return 1 + h + move.position;
    case LastMove::Type::kHintRank: return 1 + 2 * h + move.hint_value * subsets + move.touched - 1;
    case LastMove::Type::kHintColor:
      return 1 + 2 * h + config_.num_ranks * subsets + move.hint_value * subsets + move.touched - 1;
    case LastMove::Type::kNone: break;
  }
  return 0;
}

void CompiledHanabiPrior::log_prior(int obs_index, std::span<const uint8_t> legal, double beta,
                                    std::span<double> out) const {
  log_softmax_masked(
      std::span<const double>(logits_.data() + static_cast<size_t>(obs_index) * num_actions_,
                              num_actions_),
      legal, beta, out);
}

void CompiledHanabiPrior::log_prior(const HanabiState& state, double beta,
                                    std::span<double> out) const {
  std::array<uint8_t, 4 * kMaxHandSize> legal{};
  state.legal_mask(std::span<uint8_t>(legal.data(), num_actions_));
  log_prior(observation_index(state.last_move(), state.current_player()),
            std::span<const uint8_t>(legal.data(), num_actions_), beta, out);
}

SaySelectLogPrior say_select_log_prior(const PriorTable& table, double beta) {
  SaySelectLogPrior out{};
  const std::array<uint8_t, 6> legal{1, 1, 1, 1, 1, 1};
  for (double& x : out[0]) x = -std::log(6.0);
  for (int u = 1; u <= 5; ++u) {
    std::array<double, 6> logits;
    for (int a = 0; a <= 5; ++a) logits[a] = table.logit(std::to_string(u), std::to_string(a));
    log_softmax_masked(logits, legal, beta, out[u]);
  }
  return out;
}

}  // namespace instructrl
