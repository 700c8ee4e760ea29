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

// Python bindings. Structured values cross the boundary as plain dicts (via
// the JSON forms the C++ side already defines), so Python sees the same
// schemas as the CLI and the session service.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>
#include <string>
#include <variant>

#include "instructrl/backend.h"
#include "instructrl/errors.h"
#include "instructrl/eval.h"
#include "instructrl/game.h"
#include "instructrl/hanabi.h"
#include "instructrl/hanabi_features.h"
#include "instructrl/lang.h"
#include "instructrl/prior.h"
#include "instructrl/rng.h"
#include "instructrl/run.h"
#include "instructrl/say_select_train.h"

namespace py = pybind11;
using namespace instructrl;

namespace {

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py(const py::handle& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

EnvConfig env_arg(const py::handle& o) { return env_from_json(from_py(o)); }

PriorTable table_arg(const py::handle& o) { return PriorTable::from_json(from_py(o)); }

class PyState {
 public:
  PyState(const py::handle& env, uint64_t seed) : s_(new_initial_state(env_arg(env), seed)) {}
  explicit PyState(std::unique_ptr<State> s) : s_(std::move(s)) {}

  State& get() { return *s_; }
  const State& get() const { return *s_; }
  PyState clone() const { return PyState(s_->clone()); }

  py::array_t<float> features(int observer) const {
    const auto* h = dynamic_cast<const HanabiState*>(s_.get());
    if (!h) throw ContractViolation("features are defined for Hanabi states only");
    if (!encoder_) encoder_ = std::make_unique<HanabiEncoder>(h->hanabi());
    const std::vector<float> v = encoder_->encode(*h, observer);
    return py::array_t<float>(static_cast<py::ssize_t>(v.size()), v.data());
  }

 private:
  std::unique_ptr<State> s_;
  mutable std::unique_ptr<HanabiEncoder> encoder_;
};

py::dict evaluate_checkpoint(const std::filesystem::path& path, int games, uint64_t seed,
                             bool pure_q) {
  const AnyCheckpoint c = load_any_checkpoint(path);
  if (const auto* ss = std::get_if<SaySelectCheckpoint>(&c)) {
    const auto lp = ss->prior ? std::make_optional(say_select_log_prior(*ss->prior, ss->beta))
                              : std::nullopt;
    const auto e = evaluate_say_select_exact(ss->result.alice, ss->result.bob,
                                             lp ? &*lp : nullptr,
                                             pure_q ? 0.0 : ss->result.final_lambda,
                                             ss->train_config.env);
    py::dict d;
    d["env"] = "say_select";
    d["expected_return"] = e.expected_return;
    d["expected_score"] = e.expected_score;
    d["optimal_return"] = say_select_optimal_return(ss->train_config.env);
    return d;
  }
  const auto& h = std::get<HanabiTrainResult>(c);
  const auto agent = std::make_shared<const HanabiAgent>(h.agent);
  nlohmann::json j = selfplay_eval(EvalPlayer::of(agent, "checkpoint", pure_q), h.config.env,
                                   games, seed);
  return to_py(j).cast<py::dict>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "instructrl core: environments, language priors, training and evaluation";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_RuntimeError);

  m.def("derive_seed", [](uint64_t seed, uint64_t stream) {
    return derive_seed(seed, stream);
  }, py::arg("seed"), py::arg("stream"));

  m.def("env_config", [](const py::object& env) {
    nlohmann::json j = env_arg(env);
    return to_py(j);
  }, py::arg("env"), "Expand a preset name (or validate a config dict).");

  py::class_<PyState>(m, "State")
      .def(py::init<const py::handle&, uint64_t>(), py::arg("env"), py::arg("seed"))
      .def_property_readonly("current_player", [](const PyState& s) { return s.get().current_player(); })
      .def_property_readonly("is_terminal", [](const PyState& s) { return s.get().is_terminal(); })
      .def_property_readonly("score", [](const PyState& s) { return s.get().score(); })
      .def_property_readonly("move_number", [](const PyState& s) { return s.get().move_number(); })
      .def_property_readonly("num_actions", [](const PyState& s) { return s.get().num_distinct_actions(); })
      .def("legal_actions", [](const PyState& s) { return s.get().legal_actions(); })
      .def("apply_action", [](PyState& s, int a) { return s.get().apply_action(a); }, py::arg("action"))
      .def("observation", [](const PyState& s, int p) { return s.get().observation_string(p); },
           py::arg("player"))
      .def("action_to_string", [](const PyState& s, int a) { return s.get().action_to_string(a); },
           py::arg("action"))
      .def("to_dict", [](const PyState& s) { return to_py(s.get().to_json()); })
      .def("features", &PyState::features, py::arg("observer"))
      .def("clone", &PyState::clone);

  m.def("enumerate_pairs", [](const py::object& env) { return enumerate_pairs(env_arg(env)); },
        py::arg("env"));

  m.def("build_prior", [](const py::object& env, const std::string& instruction,
                          const std::string& backend, double beta) {
    auto b = make_backend(backend);
    return to_py(build_prior_table(env_arg(env), instruction_by_key(instruction), *b, beta).to_json());
  }, py::arg("env"), py::arg("instruction"), py::arg("backend"), py::arg("beta") = 1.0,
     "Score every enumerated (observation, action) pair; returns the prior table dict.");

  m.def("prior_accuracy", [](const py::object& t, const py::object& ref) {
    return prior_accuracy(table_arg(t), table_arg(ref));
  }, py::arg("table"), py::arg("reference"));

  m.def("corrupt_prior", [](const py::object& t, double x, uint64_t seed) {
    return to_py(corrupt_prior(table_arg(t), x, seed).to_json());
  }, py::arg("table"), py::arg("noise"), py::arg("seed"));

  m.def("train", [](const py::object& config) {
    RunConfig c = from_py(config).get<RunConfig>();
    TrainOutputs out;
    {
      py::gil_scoped_release release;
      out = run_training(c);
    }
    py::dict d;
    d["checkpoint"] = out.checkpoint.string();
    d["curve_csv"] = out.curve_csv.string();
    d["run_config"] = out.run_config.string();
    return d;
  }, py::arg("config"), "Train per a run config dict; returns the written paths.");

  m.def("evaluate", &evaluate_checkpoint, py::arg("checkpoint"), py::arg("games") = 100,
        py::arg("seed") = 0, py::arg("pure_q") = false,
        "Self-play evaluation. Say-Select checkpoints are evaluated exactly.");

  m.def("say_select_optimal_return", [](const py::object& env) {
    return say_select_optimal_return(env_arg(env));
  }, py::arg("env") = "say_select");
}
