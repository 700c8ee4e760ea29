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

#include "instructrl/hanabi_learn.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>

#include "instructrl/errors.h"
#include "instructrl/ppo.h"
#include "instructrl/rng.h"

namespace instructrl {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

// Runs f(i) for i in [0, n). Work is split into contiguous chunks; callers
// only write to per-index state, so results do not depend on `threads`.
template <typename F>
void parallel_for(int n, int threads, F&& f) {
  if (threads <= 1 || n < 2) {
    for (int i = 0; i < n; ++i) f(i);
    return;
  }
  const int workers = std::min(threads, n);
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = n * w / workers; i < n * (w + 1) / workers; ++i) f(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

MlpSpec net_spec(const HanabiTrainConfig& c, const HanabiEncoder& enc) {
  const int A = c.env.hanabi.num_actions();
  return MlpSpec{enc.size(), c.hidden,
                 c.learner == HanabiLearner::kInstructPPO ? A + 1 : A, c.activation};
}

void legal_mask_of(const HanabiState& s, std::span<uint8_t> mask) { s.legal_mask(mask); }

}  // namespace

std::string to_string(HanabiLearner l) {
  return l == HanabiLearner::kInstructQ ? "instructq" : "instructppo";
}

HanabiLearner hanabi_learner_from_string(const std::string& s) {
  if (s == "instructq") return HanabiLearner::kInstructQ;
  if (s == "instructppo") return HanabiLearner::kInstructPPO;
  throw ConfigError("unknown learner '" + s + "' (expected instructq or instructppo)");
}

// ---- config ----

HanabiTrainConfig HanabiTrainConfig::instructq_defaults(int64_t num_updates) {
  HanabiTrainConfig c;
  c.learner = HanabiLearner::kInstructQ;
  c.num_updates = num_updates;
  c.lambda = LambdaSchedule::instructq_default(num_updates);
  c.beta = 1.0;
  c.eval_every = std::max<int64_t>(1, num_updates / 10);
  return c;
}

HanabiTrainConfig HanabiTrainConfig::instructppo_defaults(int64_t num_updates) {
  HanabiTrainConfig c;
  c.learner = HanabiLearner::kInstructPPO;
  c.num_updates = num_updates;
  c.lambda = LambdaSchedule::instructppo_default(num_updates);
  c.beta = 2.0;
  c.adam.lr = 3e-4;
  c.eval_every = std::max<int64_t>(1, num_updates / 10);
  return c;
}

double HanabiTrainConfig::epsilon_at(int64_t update) const {
  const double horizon = epsilon_decay_fraction * static_cast<double>(num_updates);
  if (horizon <= 0 || update >= horizon) return epsilon;
  return epsilon_start + (epsilon - epsilon_start) * (static_cast<double>(update) / horizon);
}

void HanabiTrainConfig::validate() const {
  env.validate();
  if (env.env_id != EnvId::kHanabi) throw ConfigError("hanabi training needs a hanabi env");
  if (hidden.empty()) throw ConfigError("at least one hidden layer is required");
  for (int h : hidden)
    if (h < 1) throw ConfigError("hidden widths must be positive");
  lambda.validate();
  if (!(beta >= 0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  if (!(adam.lr > 0)) throw ConfigError("learning rate must be positive");
  if (!(max_grad_norm > 0)) throw ConfigError("max_grad_norm must be positive");
  if (num_updates < 1) throw ConfigError("num_updates must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (num_envs < 1 || env_steps_per_update < 1 || batch_size < 1)
    throw ConfigError("num_envs, env_steps_per_update and batch_size must be >= 1");
  if (replay_capacity < batch_size) throw ConfigError("replay_capacity must be >= batch_size");
  if (learning_starts < batch_size || learning_starts > replay_capacity)
    throw ConfigError("learning_starts must lie in [batch_size, replay_capacity]");
  if (target_period < 1) throw ConfigError("target_period must be >= 1");
  for (double e : {epsilon_start, epsilon})
    if (!(e >= 0 && e <= 1)) throw ConfigError("epsilon must be in [0, 1]");
  if (!(epsilon_decay_fraction >= 0 && epsilon_decay_fraction <= 1))
    throw ConfigError("epsilon_decay_fraction must be in [0, 1]");
  if (batch_episodes < 1 || ppo_epochs < 1 || minibatch_size < 1)
    throw ConfigError("batch_episodes, ppo_epochs and minibatch_size must be >= 1");
  if (!(clip > 0 && clip < 1)) throw ConfigError("clip must be in (0, 1)");
  if (value_coef < 0 || entropy_coef < 0) throw ConfigError("loss coefficients must be >= 0");
  if (eval_every < 1 || eval_games < 1) throw ConfigError("eval_every and eval_games must be >= 1");
}

void to_json(nlohmann::json& j, const HanabiTrainConfig& c) {
  j = {{"env", c.env},
       {"learner", to_string(c.learner)},
       {"hidden", c.hidden},
       {"activation", to_string(c.activation)},
       {"lambda", c.lambda},
       {"beta", c.beta},
       {"adam", c.adam},
       {"max_grad_norm", c.max_grad_norm},
       {"num_updates", c.num_updates},
       {"seed", c.seed},
       {"threads", c.threads},
       {"num_envs", c.num_envs},
       {"env_steps_per_update", c.env_steps_per_update},
       {"batch_size", c.batch_size},
       {"replay_capacity", c.replay_capacity},
       {"learning_starts", c.learning_starts},
       {"target_period", c.target_period},
       {"epsilon_start", c.epsilon_start},
       {"epsilon", c.epsilon},
       {"epsilon_decay_fraction", c.epsilon_decay_fraction},
       {"batch_episodes", c.batch_episodes},
       {"ppo_epochs", c.ppo_epochs},
       {"minibatch_size", c.minibatch_size},
       {"clip", c.clip},
       {"value_coef", c.value_coef},
       {"entropy_coef", c.entropy_coef},
       {"normalize_advantages", c.normalize_advantages},
       {"eval_every", c.eval_every},
       {"eval_games", c.eval_games}};
}

void from_json(const nlohmann::json& j, HanabiTrainConfig& c) {
  const HanabiLearner learner =
      hanabi_learner_from_string(j.value("learner", std::string("instructq")));
  const int64_t n = j.value("num_updates", learner == HanabiLearner::kInstructQ
                                               ? HanabiTrainConfig{}.num_updates
                                               : int64_t{600});
  c = learner == HanabiLearner::kInstructQ ? HanabiTrainConfig::instructq_defaults(n)
                                           : HanabiTrainConfig::instructppo_defaults(n);
  if (j.contains("env")) c.env = j.at("env").get<EnvConfig>();
  if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("activation")) c.activation = activation_from_string(j.at("activation"));
  if (j.contains("lambda")) c.lambda = j.at("lambda").get<LambdaSchedule>();
  if (j.contains("adam")) c.adam = j.at("adam").get<AdamConfig>();
  c.beta = j.value("beta", c.beta);
  c.max_grad_norm = j.value("max_grad_norm", c.max_grad_norm);
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.num_envs = j.value("num_envs", c.num_envs);
  c.env_steps_per_update = j.value("env_steps_per_update", c.env_steps_per_update);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.replay_capacity = j.value("replay_capacity", c.replay_capacity);
  c.learning_starts = j.value("learning_starts", c.learning_starts);
  c.target_period = j.value("target_period", c.target_period);
  c.epsilon_start = j.value("epsilon_start", c.epsilon_start);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.epsilon_decay_fraction = j.value("epsilon_decay_fraction", c.epsilon_decay_fraction);
  c.batch_episodes = j.value("batch_episodes", c.batch_episodes);
  c.ppo_epochs = j.value("ppo_epochs", c.ppo_epochs);
  c.minibatch_size = j.value("minibatch_size", c.minibatch_size);
  c.clip = j.value("clip", c.clip);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.normalize_advantages = j.value("normalize_advantages", c.normalize_advantages);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.eval_games = j.value("eval_games", c.eval_games);
}

// ---- agent ----

HanabiAgent::HanabiAgent(HanabiLearner kind, EnvConfig env, Mlp<float> net,
                         std::shared_ptr<const PriorTable> prior, double beta, double lambda)
    : kind_(kind), env_(std::move(env)), net_(std::move(net)), encoder_(env_.hanabi),
      prior_(std::move(prior)), beta_(beta), lambda_(lambda) {
  if (env_.env_id != EnvId::kHanabi) throw ConfigError("HanabiAgent needs a hanabi env");
  const int A = env_.hanabi.num_actions();
  const int want = kind_ == HanabiLearner::kInstructPPO ? A + 1 : A;
  if (net_.spec().input != encoder_.size() || net_.spec().output != want)
    throw ConfigError("network shape does not match the environment encoding");
  if (!(lambda_ >= 0)) throw ConfigError("lambda must be >= 0");
  if (prior_) compiled_ = std::make_shared<CompiledHanabiPrior>(*prior_, env_.hanabi);
}

std::vector<double> HanabiAgent::action_values(const HanabiState& state) const {
  const int A = env_.hanabi.num_actions();
  RowMatrix<float> x(1, encoder_.size());
  encoder_.encode(state, state.current_player(), std::span<float>(x.data(), x.size()));
  Mlp<float>::Workspace ws;
  const auto& out = net_.forward(x, ws);
  std::vector<double> v(A);
  for (int a = 0; a < A; ++a) v[a] = out(0, a);
  return v;
}

int HanabiAgent::greedy_action(const HanabiState& state, bool pure_q) const {
  const HanabiState* ptr = &state;
  int a = -1;
  greedy_actions(std::span<const HanabiState* const>(&ptr, 1), std::span<int>(&a, 1), pure_q);
  return a;
}

void HanabiAgent::greedy_actions(std::span<const HanabiState* const> states, std::span<int> out,
                                 bool pure_q) const {
  const int n = static_cast<int>(states.size());
  if (n == 0) return;
  const int A = env_.hanabi.num_actions();
  const int D = encoder_.size();
  RowMatrix<float> x(n, D);
  for (int i = 0; i < n; ++i)
    encoder_.encode(*states[i], states[i]->current_player(),
                    std::span<float>(x.data() + static_cast<size_t>(i) * D, D));
  Mlp<float>::Workspace ws;
  const auto& y = net_.forward(x, ws);
  const bool with_prior = !pure_q && kind_ == HanabiLearner::kInstructQ && uses_prior();
  std::vector<uint8_t> legal(A);
  std::vector<double> q(A), logp(A);
  for (int i = 0; i < n; ++i) {
    legal_mask_of(*states[i], legal);
    for (int a = 0; a < A; ++a) q[a] = y(i, a);
    if (with_prior) {
      compiled_->log_prior(*states[i], beta_, logp);
      out[i] = regularized_argmax(q, logp, legal, lambda_);
    } else {
      out[i] = regularized_argmax(q, {}, legal, 0.0);
    }
  }
}

HanabiAgent HanabiAgent::adapted(std::shared_ptr<const PriorTable> prior, double lambda) const {
  if (kind_ != HanabiLearner::kInstructQ)
    throw ContractViolation("test-time adaptation needs a Q agent");
  const double beta = prior ? prior->beta() : beta_;
  return HanabiAgent(kind_, env_, net_, std::move(prior), beta, lambda);
}

HanabiAgent adapt_policy(const HanabiAgent& base, std::shared_ptr<const PriorTable> prior,
                         double lambda) {
  return base.adapted(std::move(prior), lambda);
}

nlohmann::json HanabiAgent::to_json() const {
  return {{"learner", to_string(kind_)},
          {"env", env_},
          {"net", net_.spec()},
          {"params", params_to_json<float>(net_.params())},
          {"beta", beta_},
          {"lambda", lambda_},
          {"prior", prior_ ? prior_->to_json() : nlohmann::json(nullptr)}};
}

HanabiAgent HanabiAgent::from_json(const nlohmann::json& j) {
  Mlp<float> net(j.at("net").get<MlpSpec>());
  const auto params = params_from_json<float>(j.at("params"));
  if (params.size() != net.num_params())
    throw ConfigError("checkpoint parameter count does not match the network spec");
  std::copy(params.begin(), params.end(), net.params().begin());
  std::shared_ptr<const PriorTable> prior;
  if (!j.at("prior").is_null())
    prior = std::make_shared<PriorTable>(PriorTable::from_json(j.at("prior")));
  return HanabiAgent(hanabi_learner_from_string(j.at("learner")), j.at("env").get<EnvConfig>(),
                     std::move(net), std::move(prior), j.at("beta").get<double>(),
                     j.at("lambda").get<double>());
}

Decision HanabiAgentPolicy::decide(const State& state, Rng&) {
  const auto* h = dynamic_cast<const HanabiState*>(&state);
  if (!h) throw ContractViolation("HanabiAgentPolicy needs a Hanabi state");
  Decision d;
  d.action = agent_->greedy_action(*h, pure_q_);
  if (!pure_q_ && agent_->uses_prior()) {
    std::vector<double> logp(h->num_distinct_actions());
    agent_->compiled_prior()->log_prior(*h, agent_->beta(), logp);
    for (int a : h->legal_actions()) d.prior.push_back(std::exp(logp[a]));
  }
  return d;
}

std::string HanabiAgentPolicy::name() const {
  return to_string(agent_->kind()) + (pure_q_ ? "_pure" : "");
}

// ---- lockstep play ----

std::vector<HanabiGameResult> play_hanabi_games(
    const EnvConfig& env, std::span<const uint64_t> seeds,
    std::span<const std::array<const HanabiAgent*, 2>> seating, bool pure_q,
    const HanabiMoveObserver& observer) {
  if (seeds.size() != seating.size()) throw ContractViolation("one seating per game");
  const size_t n = seeds.size();
  std::vector<HanabiState> states;
  states.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    for (const HanabiAgent* a : seating[i])
      if (!a || !(a->env().hanabi == env.hanabi))
        throw ConfigError("agent was trained for a different Hanabi config");
    states.emplace_back(env, seeds[i]);
  }
  std::vector<size_t> active(n);
  std::iota(active.begin(), active.end(), size_t{0});
  std::vector<int> actions(n, -1);
  std::vector<double> returns(n, 0.0), discounts(n, 1.0);
  std::vector<const HanabiAgent*> agents;
  std::vector<const HanabiState*> batch;
  std::vector<size_t> batch_games;
  std::vector<int> batch_out;
  while (!active.empty()) {
    agents.clear();
    for (size_t g : active) {
      const HanabiAgent* a = seating[g][states[g].current_player()];
      if (std::find(agents.begin(), agents.end(), a) == agents.end()) agents.push_back(a);
    }
    for (const HanabiAgent* a : agents) {
      batch.clear();
      batch_games.clear();
      for (size_t g : active) {
        if (seating[g][states[g].current_player()] != a) continue;
        batch.push_back(&states[g]);
        batch_games.push_back(g);
      }
      batch_out.assign(batch.size(), -1);
      a->greedy_actions(batch, batch_out, pure_q);
      for (size_t k = 0; k < batch.size(); ++k) actions[batch_games[k]] = batch_out[k];
    }
    std::vector<size_t> next;
    for (size_t g : active) {
      if (observer) observer(g, states[g], actions[g]);
      returns[g] += discounts[g] * states[g].apply_action(actions[g]);
      discounts[g] *= env.gamma;
      if (!states[g].is_terminal()) next.push_back(g);
    }
    active.swap(next);
  }
  std::vector<HanabiGameResult> results(n);
  for (size_t i = 0; i < n; ++i) {
    results[i].seed = seeds[i];
    results[i].score = states[i].score();
    results[i].lost = states[i].end_reason() == HanabiEndReason::kOutOfLives;
    results[i].moves = states[i].move_number();
    results[i].discounted_return = returns[i];
  }
  return results;
}

void to_json(nlohmann::json& j, const HanabiCurvePoint& p) {
  j = {{"update", p.update},       {"lambda", p.lambda},
       {"epsilon", p.epsilon},     {"env_steps", p.env_steps},
       {"games", p.games},         {"loss", p.loss},
       {"selfplay_score", p.selfplay_score}, {"seconds", p.seconds}};
}

void from_json(const nlohmann::json& j, HanabiCurvePoint& p) {
  p.update = j.at("update");
  p.lambda = j.at("lambda");
  p.epsilon = j.value("epsilon", 0.0);
  p.env_steps = j.value("env_steps", int64_t{0});
  p.games = j.value("games", int64_t{0});
  p.loss = j.value("loss", 0.0);
  p.selfplay_score = j.at("selfplay_score");
  p.seconds = j.value("seconds", 0.0);
}

// ---- training ----

namespace {

// Shared pieces of both learners.
class TrainerBase {
 public:
  TrainerBase(const HanabiTrainConfig& config, std::shared_ptr<const PriorTable> prior,
              const HanabiTrainHooks& hooks)
      : config_(config), prior_(std::move(prior)), hooks_(hooks), encoder_(config.env.hanabi),
        A_(config.env.hanabi.num_actions()), D_(encoder_.size()),
        game_rng_(derive_seed(config.seed, streams::kGame)),
        sampler_(derive_seed(config.seed, streams::kReplay)) {
    config_.validate();
    if (prior_) {
      if (prior_->env().env_id != EnvId::kHanabi || !(prior_->env().hanabi == config.env.hanabi))
        throw ConfigError("prior table was built for a different environment");
      compiled_ = std::make_unique<CompiledHanabiPrior>(*prior_, config.env.hanabi);
    }
    Rng init(derive_seed(config.seed, streams::kInit));
    net_ = Mlp<float>(net_spec(config_, encoder_), init);
    adam_ = AdamState<float>(net_.num_params());
    grad_.assign(net_.num_params(), 0.0f);
    Rng es(derive_seed(config.seed, streams::kSeatOrder));
    for (int i = 0; i < config.eval_games; ++i) eval_seeds_.push_back(es.next_u64());
    start_ = Clock::now();
  }

 protected:
  double final_lambda() const { return anneal_lambda(config_.lambda, config_.num_updates - 1); }

  HanabiAgent snapshot(double lambda) const {
    return HanabiAgent(config_.learner, config_.env, net_, prior_, config_.beta, lambda);
  }

  void evaluate(int64_t update, double lambda, double epsilon) {
    const HanabiAgent agent = snapshot(lambda);
    std::vector<std::array<const HanabiAgent*, 2>> seating(eval_seeds_.size(), {&agent, &agent});
    const auto games = play_hanabi_games(config_.env, eval_seeds_, seating);
    HanabiCurvePoint p;
    p.update = update;
    p.lambda = lambda;
    p.epsilon = epsilon;
    p.env_steps = env_steps_;
    p.games = games_;
    p.loss = loss_count_ ? loss_sum_ / loss_count_ : 0.0;
    double total = 0;
    for (const auto& g : games) total += g.score;
    p.selfplay_score = total / games.size();
    p.seconds = std::chrono::duration<double>(Clock::now() - start_).count();
    loss_sum_ = 0;
    loss_count_ = 0;
    curve_.push_back(p);
    if (hooks_.on_eval) hooks_.on_eval(p);
  }

  void apply_gradient() {
    clip_grad_norm<float>(grad_, config_.max_grad_norm);
    adam_step<float>(net_.params(), grad_, adam_, config_.adam);
  }

  HanabiTrainResult finish() {
    HanabiTrainResult r;
    r.config = config_;
    r.agent = snapshot(final_lambda());
    r.adam = adam_;
    r.rng_state = sampler_.state();
    r.update = config_.num_updates;
    r.env_steps = env_steps_;
    r.curve = curve_;
    return r;
  }

  HanabiTrainConfig config_;
  std::shared_ptr<const PriorTable> prior_;
  std::unique_ptr<CompiledHanabiPrior> compiled_;
  const HanabiTrainHooks& hooks_;
  HanabiEncoder encoder_;
  int A_, D_;
  Rng game_rng_;  // seeds of training games, drawn in env-index order
  Rng sampler_;   // replay / minibatch sampling
  Mlp<float> net_;
  AdamState<float> adam_;
  std::vector<float> grad_;
  std::vector<uint64_t> eval_seeds_;
  std::vector<HanabiCurvePoint> curve_;
  int64_t env_steps_ = 0;
  int64_t games_ = 0;
  double loss_sum_ = 0;
  int64_t loss_count_ = 0;
  Clock::time_point start_;
};

// ---- instructQ ----

class Replay {
 public:
  Replay(int capacity, int D, int A, bool with_prior)
      : capacity_(capacity), D_(D), A_(A), with_prior_(with_prior),
        obs_(static_cast<size_t>(capacity) * D), next_obs_(static_cast<size_t>(capacity) * D),
        next_legal_(static_cast<size_t>(capacity) * A),
        next_logp_(with_prior ? static_cast<size_t>(capacity) * A : 0), action_(capacity),
        reward_(capacity), discount_(capacity), terminal_(capacity) {}

  int size() const { return size_; }
  int D() const { return D_; }
  int A() const { return A_; }
  bool with_prior() const { return with_prior_; }

  void push(std::span<const float> obs, int action, double reward, double discount, bool terminal,
            std::span<const float> next_obs, std::span<const uint8_t> next_legal,
            std::span<const double> next_logp) {
    const size_t i = pos_;
    std::copy(obs.begin(), obs.end(), obs_.begin() + i * D_);
    action_[i] = action;
    reward_[i] = static_cast<float>(reward);
    discount_[i] = static_cast<float>(discount);
    terminal_[i] = terminal;
    if (terminal) {
      std::fill_n(next_obs_.begin() + i * D_, D_, 0.0f);
      std::fill_n(next_legal_.begin() + i * A_, A_, uint8_t{0});
      if (with_prior_) std::fill_n(next_logp_.begin() + i * A_, A_, 0.0f);
    } else {
      std::copy(next_obs.begin(), next_obs.end(), next_obs_.begin() + i * D_);
      std::copy(next_legal.begin(), next_legal.end(), next_legal_.begin() + i * A_);
      if (with_prior_)
        for (int a = 0; a < A_; ++a)
          next_logp_[i * A_ + a] = static_cast<float>(next_logp[a]);
    }
    pos_ = (pos_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  const float* obs(int i) const { return obs_.data() + static_cast<size_t>(i) * D_; }
  const float* next_obs(int i) const { return next_obs_.data() + static_cast<size_t>(i) * D_; }
  const uint8_t* next_legal(int i) const { return next_legal_.data() + static_cast<size_t>(i) * A_; }
  const float* next_logp(int i) const { return next_logp_.data() + static_cast<size_t>(i) * A_; }
  int action(int i) const { return action_[i]; }
  float reward(int i) const { return reward_[i]; }
  float discount(int i) const { return discount_[i]; }
  bool terminal(int i) const { return terminal_[i]; }

 private:
  int capacity_, D_, A_;
  bool with_prior_;
  int pos_ = 0, size_ = 0;
  std::vector<float> obs_, next_obs_;
  std::vector<uint8_t> next_legal_;
  std::vector<float> next_logp_;
  std::vector<int> action_;
  std::vector<float> reward_, discount_;
  std::vector<uint8_t> terminal_;
};

struct PendingQ {
  bool active = false;
  std::vector<float> obs;
  int action = 0;
  double reward = 0;
  double discount = 1;
};

struct FinishedQ {
  std::vector<float> obs;
  int action;
  double reward, discount;
  bool terminal;
  std::vector<float> next_obs;
  std::vector<uint8_t> next_legal;
  std::vector<double> next_logp;
};

struct QSlot {
  std::unique_ptr<HanabiState> state;
  Rng rng;
  std::array<PendingQ, kNumPlayers> pending;
  std::vector<FinishedQ> finished;
  bool done = false;
};

class QTrainer : public TrainerBase {
 public:
  using TrainerBase::TrainerBase;

  HanabiTrainResult run() {
    const auto& c = config_;
    target_ = net_;
    Replay replay(c.replay_capacity, D_, A_, compiled_ != nullptr);
    slots_.resize(c.num_envs);
    for (int e = 0; e < c.num_envs; ++e) {
      slots_[e].rng = Rng(derive_seed(derive_seed(c.seed, streams::kPolicy), e));
      slots_[e].state = std::make_unique<HanabiState>(c.env, game_rng_.next_u64());
    }
    x_.resize(c.num_envs, D_);

    int64_t update = 0;
    while (update < c.num_updates) {
      const double lambda = anneal_lambda(c.lambda, update);
      const double epsilon = c.epsilon_at(update);
      for (int k = 0; k < c.env_steps_per_update; ++k) step_envs(lambda, epsilon, replay);
      if (replay.size() < c.learning_starts) continue;
      learn(replay, lambda);
      ++update;
      if (update % c.target_period == 0) target_ = net_;
      if (update % c.eval_every == 0 || update == c.num_updates)
        evaluate(update, update == c.num_updates ? final_lambda() : lambda, epsilon);
    }
    HanabiTrainResult r = finish();
    r.target_params.assign(target_.params().begin(), target_.params().end());
    return r;
  }

 private:
  void step_envs(double lambda, double epsilon, Replay& replay) {
    const int n = config_.num_envs;
    parallel_for(n, config_.threads, [&](int e) {
      const HanabiState& s = *slots_[e].state;
      encoder_.encode(s, s.current_player(),
                      std::span<float>(x_.data() + static_cast<size_t>(e) * D_, D_));
    });
    Mlp<float>::Workspace ws;
    const RowMatrix<float> q = net_.forward(x_, ws);
    parallel_for(n, config_.threads, [&](int e) { act(e, q, lambda, epsilon); });
    // Deterministic order: slot by slot.
    for (int e = 0; e < n; ++e) {
      QSlot& slot = slots_[e];
      for (FinishedQ& f : slot.finished)
        replay.push(f.obs, f.action, f.reward, f.discount, f.terminal, f.next_obs, f.next_legal,
                    f.next_logp);
      slot.finished.clear();
      ++env_steps_;
      if (slot.done) {
        slot.state = std::make_unique<HanabiState>(config_.env, game_rng_.next_u64());
        slot.done = false;
        ++games_;
      }
    }
  }

  void act(int e, const RowMatrix<float>& qall, double lambda, double epsilon) {
    QSlot& slot = slots_[e];
    HanabiState& s = *slot.state;
    const int p = s.current_player();
    std::vector<uint8_t> legal(A_);
    s.legal_mask(legal);
    std::vector<double> logp;
    if (compiled_) {
      logp.resize(A_);
      compiled_->log_prior(s, config_.beta, logp);
    }
    const std::span<const float> obs(x_.data() + static_cast<size_t>(e) * D_, D_);
    PendingQ& mine = slot.pending[p];
    if (mine.active)
      slot.finished.push_back({std::move(mine.obs), mine.action, mine.reward, mine.discount, false,
                               std::vector<float>(obs.begin(), obs.end()), legal, logp});
    std::vector<double> q(A_);
    for (int a = 0; a < A_; ++a) q[a] = qall(e, a);
    const int action = compiled_ ? instructq_act(q, logp, legal, lambda, epsilon, slot.rng)
                                 : epsilon_greedy_act(q, legal, epsilon, slot.rng);
    mine = PendingQ{true, std::vector<float>(obs.begin(), obs.end()), action, 0.0, 1.0};
    const int r = s.apply_action(action);
    for (PendingQ& pq : slot.pending) {
      if (!pq.active) continue;
      pq.reward += pq.discount * r;
      pq.discount *= config_.env.gamma;
    }
    if (s.is_terminal()) {
      for (PendingQ& pq : slot.pending) {
        if (!pq.active) continue;
        slot.finished.push_back({std::move(pq.obs), pq.action, pq.reward, 0.0, true, {}, {}, {}});
        pq.active = false;
      }
      slot.done = true;
    }
  }

  void learn(const Replay& replay, double lambda) {
    const int B = config_.batch_size;
    RowMatrix<float> x(B, D_), xn(B, D_);
    std::vector<int> idx(B);
    for (int i = 0; i < B; ++i) {
      idx[i] = sampler_.uniform_int(replay.size());
      std::copy_n(replay.obs(idx[i]), D_, x.data() + static_cast<size_t>(i) * D_);
      std::copy_n(replay.next_obs(idx[i]), D_, xn.data() + static_cast<size_t>(i) * D_);
    }
    Mlp<float>::Workspace ws_online_next, ws_target, ws;
    const RowMatrix<float> qn_online = net_.forward(xn, ws_online_next);
    const RowMatrix<float> qn_target = target_.forward(xn, ws_target);
    std::vector<double> qrow(A_), lrow(A_), targets(B);
    for (int i = 0; i < B; ++i) {
      const int t = idx[i];
      if (replay.terminal(t)) {
        targets[i] = replay.reward(t);
        continue;
      }
      // Online network picks the regularized argmax, target network scores it.
      for (int a = 0; a < A_; ++a) qrow[a] = qn_online(i, a);
      const std::span<const uint8_t> legal(replay.next_legal(t), A_);
      int best;
      if (replay.with_prior()) {
        for (int a = 0; a < A_; ++a) lrow[a] = replay.next_logp(t)[a];
        best = regularized_argmax(qrow, lrow, legal, lambda);
      } else {
        best = regularized_argmax(qrow, {}, legal, 0.0);
      }
      targets[i] = replay.reward(t) + replay.discount(t) * static_cast<double>(qn_target(i, best));
    }
    const RowMatrix<float>& q = net_.forward(x, ws);
    RowMatrix<float> gout = RowMatrix<float>::Zero(B, A_);
    double loss = 0;
    for (int i = 0; i < B; ++i) {
      const int a = replay.action(idx[i]);
      const double err = static_cast<double>(q(i, a)) - targets[i];
      loss += 0.5 * err * err / B;
      gout(i, a) = static_cast<float>(err / B);
    }
    if (!std::isfinite(loss)) throw NumericalError("instructQ: non-finite TD loss");
    std::fill(grad_.begin(), grad_.end(), 0.0f);
    net_.backward(ws, gout, grad_);
    apply_gradient();
    loss_sum_ += loss;
    ++loss_count_;
  }

  Mlp<float> target_;
  std::vector<QSlot> slots_;
  RowMatrix<float> x_;
};

// ---- instructPPO ----

struct PpoStep {
  int game = 0;
  std::vector<float> obs;
  std::vector<uint8_t> legal;
  std::vector<double> log_prior;
  int action = 0;
  double behavior_logp = 0;
  double reward = 0;
  double discount = 1;  // gamma^(moves until this player's next decision)
  bool terminal = false;
  int next = -1;  // index of the same player's next decision
};

class PpoTrainer : public TrainerBase {
 public:
  using TrainerBase::TrainerBase;

  HanabiTrainResult run() {
    const auto& c = config_;
    rngs_.clear();
    for (int e = 0; e < c.batch_episodes; ++e)
      rngs_.emplace_back(derive_seed(derive_seed(c.seed, streams::kPolicy), e));
    for (int64_t update = 0; update < c.num_updates; ++update) {
      const double lambda = anneal_lambda(c.lambda, update);
      collect();
      optimize(lambda);
      const int64_t done = update + 1;
      if (done % c.eval_every == 0 || done == c.num_updates)
        evaluate(done, done == c.num_updates ? final_lambda() : lambda, 0.0);
    }
    return finish();
  }

 private:
  void collect() {
    const int n = config_.batch_episodes;
    steps_.clear();
    std::vector<std::unique_ptr<HanabiState>> states(n);
    for (int e = 0; e < n; ++e)
      states[e] = std::make_unique<HanabiState>(config_.env, game_rng_.next_u64());
    std::vector<std::array<int, kNumPlayers>> pending(n, {-1, -1});
    std::vector<int> active(n);
    std::iota(active.begin(), active.end(), 0);
    RowMatrix<float> x;
    std::vector<double> logits(A_), logpi(A_);
    while (!active.empty()) {
      const int m = static_cast<int>(active.size());
      x.resize(m, D_);
      parallel_for(m, config_.threads, [&](int k) {
        const HanabiState& s = *states[active[k]];
        encoder_.encode(s, s.current_player(),
                        std::span<float>(x.data() + static_cast<size_t>(k) * D_, D_));
      });
      Mlp<float>::Workspace ws;
      const RowMatrix<float>& y = net_.forward(x, ws);
      std::vector<int> still;
      for (int k = 0; k < m; ++k) {
        const int e = active[k];
        HanabiState& s = *states[e];
        const int p = s.current_player();
        PpoStep st;
        st.game = e;
        st.obs.assign(x.data() + static_cast<size_t>(k) * D_,
                      x.data() + static_cast<size_t>(k + 1) * D_);
        st.legal.resize(A_);
        s.legal_mask(st.legal);
        if (compiled_) {
          st.log_prior.resize(A_);
          compiled_->log_prior(s, config_.beta, st.log_prior);
        }
        for (int a = 0; a < A_; ++a) logits[a] = y(k, a);
        masked_log_softmax(logits, st.legal, logpi);
        st.action = sample(logpi, st.legal, rngs_[e]);
        st.behavior_logp = logpi[st.action];
        const int idx = static_cast<int>(steps_.size());
        if (pending[e][p] >= 0) steps_[pending[e][p]].next = idx;
        pending[e][p] = idx;
        const int action = st.action;
        steps_.push_back(std::move(st));
        const int r = s.apply_action(action);
        for (int q : pending[e]) {
          if (q < 0) continue;
          // discount accumulates gamma per move; reward uses the value before.
          steps_[q].reward += discount_acc(q) * r;
          steps_[q].discount *= config_.env.gamma;
        }
        ++env_steps_;
        if (s.is_terminal()) {
          for (int q : pending[e])
            if (q >= 0) steps_[q].terminal = true;
          ++games_;
        } else {
          still.push_back(e);
        }
      }
      active.swap(still);
    }
  }

  // Before the first move after a decision the discount field is 1; it is
  // multiplied by gamma after each move, so it is exactly the weight of the
  // next reward.
  double discount_acc(int q) const { return steps_[q].discount; }

  static int sample(std::span<const double> logpi, std::span<const uint8_t> legal, Rng& rng) {
    const double u = rng.uniform01();
    double acc = 0;
    int last = -1;
    for (size_t a = 0; a < logpi.size(); ++a) {
      if (!legal[a]) continue;
      last = static_cast<int>(a);
      acc += std::exp(logpi[a]);
      if (u < acc) return last;
    }
    return last;  // rounding slack lands on the last legal action
  }

  void optimize(double lambda) {
    const int n = static_cast<int>(steps_.size());
    // Values of every decision under the current network.
    std::vector<double> v(n);
    {
      RowMatrix<float> x(n, D_);
      for (int i = 0; i < n; ++i) std::copy(steps_[i].obs.begin(), steps_[i].obs.end(),
                                            x.data() + static_cast<size_t>(i) * D_);
      Mlp<float>::Workspace ws;
      const RowMatrix<float>& y = net_.forward(x, ws);
      for (int i = 0; i < n; ++i) v[i] = y(i, A_);
    }
    std::vector<double> returns(n), adv(n);
    for (int i = n - 1; i >= 0; --i) {
      const PpoStep& s = steps_[i];
      const bool boot = !s.terminal && s.next >= 0;
      returns[i] = s.reward + (boot ? s.discount * returns[s.next] : 0.0);
      adv[i] = s.reward + (boot ? s.discount * v[s.next] : 0.0) - v[i];
    }
    if (config_.normalize_advantages && n > 1) {
      const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
      double var = 0;
      for (double a : adv) var += (a - mean) * (a - mean);
      const double sd = std::sqrt(var / (n - 1));
      for (double& a : adv) a = (a - mean) / (sd + 1e-8);
    }

    PpoLossConfig loss_cfg{config_.clip, compiled_ ? lambda : 0.0, config_.value_coef,
                           config_.entropy_coef};
    std::vector<int> order(n);
    const int mb = std::min(config_.minibatch_size, n);
    for (int epoch = 0; epoch < config_.ppo_epochs; ++epoch) {
      std::iota(order.begin(), order.end(), 0);
      sampler_.shuffle(std::span<int>(order));
      for (int start = 0; start + mb <= n; start += mb) {
        PpoBatch batch;
        batch.num_actions = A_;
        RowMatrix<float> x(mb, D_);
        for (int k = 0; k < mb; ++k) {
          const int i = order[start + k];
          const PpoStep& s = steps_[i];
          std::copy(s.obs.begin(), s.obs.end(), x.data() + static_cast<size_t>(k) * D_);
          batch.legal.insert(batch.legal.end(), s.legal.begin(), s.legal.end());
          if (loss_cfg.lambda != 0.0)
            batch.log_prior.insert(batch.log_prior.end(), s.log_prior.begin(), s.log_prior.end());
          batch.actions.push_back(s.action);
          batch.behavior_logp.push_back(s.behavior_logp);
          batch.advantages.push_back(adv[i]);
          batch.returns.push_back(returns[i]);
        }
        Mlp<float>::Workspace ws;
        const RowMatrix<float>& y = net_.forward(x, ws);
        RowMatrix<float> gout;
        const PpoLossTerms terms = ppo_loss<float>(y, batch, loss_cfg, &gout);
        std::fill(grad_.begin(), grad_.end(), 0.0f);
        net_.backward(ws, gout, grad_);
        apply_gradient();
        loss_sum_ += terms.total;
        ++loss_count_;
      }
    }
  }

  std::vector<Rng> rngs_;
  std::vector<PpoStep> steps_;
};

}  // namespace

HanabiTrainResult train_hanabi(const HanabiTrainConfig& config,
                               std::shared_ptr<const PriorTable> prior,
                               const HanabiTrainHooks& hooks) {
  if (config.learner == HanabiLearner::kInstructQ) {
    QTrainer t(config, std::move(prior), hooks);
    return t.run();
  }
  PpoTrainer t(config, std::move(prior), hooks);
  return t.run();
}

// ---- checkpoints ----

nlohmann::json checkpoint_to_json(const HanabiTrainResult& r, const nlohmann::json& run_config) {
  nlohmann::json curve = nlohmann::json::array();
  // Wall-clock time stays out so equal configs give equal files.
  for (const auto& p : r.curve) {
    nlohmann::json e = p;
    e.erase("seconds");
    curve.push_back(std::move(e));
  }
  return {{"format", "instructrl.checkpoint"},
          {"version", kCheckpointFormatVersion},
          {"run_config", run_config},
          {"train_config", r.config},
          {"agent", r.agent.to_json()},
          {"target_params", r.target_params.empty()
                                ? nlohmann::json(nullptr)
                                : params_to_json<float>(r.target_params)},
          {"adam",
           {{"m", params_to_json<float>(r.adam.m)},
            {"v", params_to_json<float>(r.adam.v)},
            {"step", r.adam.step}}},
          {"rng_state", r.rng_state},
          {"update", r.update},
          {"env_steps", r.env_steps},
          {"curve", curve}};
}

HanabiTrainResult checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "instructrl.checkpoint")
    throw ConfigError("not an instructrl checkpoint");
  if (j.at("version").get<int>() != kCheckpointFormatVersion)
    throw ConfigError("unsupported checkpoint version " + j.at("version").dump());
  HanabiTrainResult r;
  r.config = j.at("train_config").get<HanabiTrainConfig>();
  r.agent = HanabiAgent::from_json(j.at("agent"));
  if (!j.at("target_params").is_null())
    r.target_params = params_from_json<float>(j.at("target_params"));
  r.adam.m = params_from_json<float>(j.at("adam").at("m"));
  r.adam.v = params_from_json<float>(j.at("adam").at("v"));
  r.adam.step = j.at("adam").at("step");
  r.rng_state = j.at("rng_state");
  r.update = j.at("update");
  r.env_steps = j.value("env_steps", int64_t{0});
  for (const auto& p : j.at("curve")) r.curve.push_back(p.get<HanabiCurvePoint>());
  return r;
}

void save_checkpoint(const std::filesystem::path& path, const HanabiTrainResult& result,
                     const nlohmann::json& run_config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(result, run_config).dump();
  }
  std::filesystem::rename(tmp, path);
}

HanabiTrainResult load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace instructrl
