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

#include "instructrl/nn.h"

#include <bit>
#include <cmath>
#include <cstdio>

#include "instructrl/errors.h"

namespace instructrl {

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + s + "'");
}

size_t MlpSpec::num_params() const {
  size_t n = 0;
  for (int l = 0; l < num_layers(); ++l)
    n += static_cast<size_t>(layer_in(l) + 1) * layer_out(l);
  return n;
}

void MlpSpec::validate() const {
  if (input < 1 || output < 1) throw ConfigError("mlp: input and output sizes must be positive");
  for (int h : hidden)
    if (h < 1) throw ConfigError("mlp: hidden widths must be positive");
}

void to_json(nlohmann::json& j, const MlpSpec& s) {
  j = {{"input", s.input},
       {"hidden", s.hidden},
       {"output", s.output},
       {"activation", to_string(s.activation)}};
}

void from_json(const nlohmann::json& j, MlpSpec& s) {
  s.input = j.at("input");
  s.hidden = j.at("hidden").get<std::vector<int>>();
  s.output = j.at("output");
  s.activation = activation_from_string(j.value("activation", "relu"));
  s.validate();
}

template <typename T>
Mlp<T>::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  size_t off = 0;
  for (int l = 0; l < spec_.num_layers(); ++l) {
    offsets_.push_back(off);
    off += static_cast<size_t>(spec_.layer_in(l) + 1) * spec_.layer_out(l);
  }
  params_.assign(off, T(0));
}

template <typename T>
Mlp<T>::Mlp(MlpSpec spec, Rng& rng) : Mlp(std::move(spec)) {
  for (int l = 0; l < spec_.num_layers(); ++l) {
    const int in = spec_.layer_in(l), out = spec_.layer_out(l);
    const double limit = std::sqrt(6.0 / (in + out));
    T* w = params_.data() + weight_offset(l);
    for (size_t i = 0; i < static_cast<size_t>(in) * out; ++i)
      w[i] = static_cast<T>((2.0 * rng.uniform01() - 1.0) * limit);
  }
}

template <typename T>
typename Mlp<T>::ConstMatrixMap Mlp<T>::weight(int layer) const {
  return ConstMatrixMap(params_.data() + weight_offset(layer), spec_.layer_in(layer),
                        spec_.layer_out(layer));
}

template <typename T>
typename Mlp<T>::ConstVectorMap Mlp<T>::bias(int layer) const {
  return ConstVectorMap(params_.data() + bias_offset(layer), spec_.layer_out(layer));
}

template <typename T>
const typename Mlp<T>::Matrix& Mlp<T>::forward(const Eigen::Ref<const Matrix>& x,
                                               Workspace& ws) const {
  if (x.cols() != spec_.input) throw ContractViolation("mlp: input width mismatch");
  const int layers = spec_.num_layers();
  ws.acts.resize(layers + 1);
  ws.acts[0] = x;
  for (int l = 0; l < layers; ++l) {
    Matrix& h = ws.acts[l + 1];
    h.noalias() = ws.acts[l] * weight(l);
    h.rowwise() += bias(l);
    if (l + 1 < layers) {
      if (spec_.activation == Activation::kRelu) h = h.cwiseMax(T(0));
      else h = h.array().tanh();
    }
  }
  return ws.acts[layers];
}

template <typename T>
void Mlp<T>::backward(Workspace& ws, const Eigen::Ref<const Matrix>& grad_out,
                      std::span<T> grad) const {
  const int layers = spec_.num_layers();
  if (grad.size() != params_.size()) throw ContractViolation("mlp: gradient size mismatch");
  if (static_cast<int>(ws.acts.size()) != layers + 1 || grad_out.rows() != ws.acts[0].rows() ||
      grad_out.cols() != spec_.output)
    throw ContractViolation("mlp: backward without a matching forward");
  ws.delta = grad_out;
  for (int l = layers - 1; l >= 0; --l) {
    const int in = spec_.layer_in(l), out = spec_.layer_out(l);
    MatrixMap gw(grad.data() + weight_offset(l), in, out);
    VectorMap gb(grad.data() + bias_offset(l), out);
    gw.noalias() += ws.acts[l].transpose() * ws.delta;
    gb += ws.delta.colwise().sum();
    if (l == 0) break;
    ws.next_delta.noalias() = ws.delta * weight(l).transpose();
    const Matrix& h = ws.acts[l];  // post-activation of layer l - 1
    if (spec_.activation == Activation::kRelu)
      ws.next_delta = (h.array() > T(0)).select(ws.next_delta, T(0));
    else
      ws.next_delta.array() *= T(1) - h.array().square();
    std::swap(ws.delta, ws.next_delta);
  }
}

template class Mlp<float>;
template class Mlp<double>;

void to_json(nlohmann::json& j, const AdamConfig& c) {
  j = {{"lr", c.lr}, {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, AdamConfig& c) {
  AdamConfig d;
  c.lr = j.value("lr", d.lr);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.eps = j.value("eps", d.eps);
  if (!(c.lr > 0) || c.beta1 < 0 || c.beta1 >= 1 || c.beta2 < 0 || c.beta2 >= 1 || !(c.eps > 0))
    throw ConfigError("adam: invalid hyperparameters");
}

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grad, AdamState<T>& state,
               const AdamConfig& config) {
  if (grad.size() != params.size() || state.m.size() != params.size())
    throw ContractViolation("adam: size mismatch");
  ++state.step;
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  const T step = static_cast<T>(config.lr * std::sqrt(c2) / c1);
  const T eps = static_cast<T>(config.eps * std::sqrt(c2));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * grad[i];
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * grad[i] * grad[i];
    params[i] -= step * state.m[i] / (std::sqrt(state.v[i]) + eps);
  }
}

template void adam_step<float>(std::span<float>, std::span<const float>, AdamState<float>&,
                               const AdamConfig&);
template void adam_step<double>(std::span<double>, std::span<const double>, AdamState<double>&,
                                const AdamConfig&);

template <typename T>
double clip_grad_norm(std::span<T> grad, double max_norm) {
  double sq = 0;
  for (T g : grad) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (T& g : grad) g *= scale;
  }
  return norm;
}

template double clip_grad_norm<float>(std::span<float>, double);
template double clip_grad_norm<double>(std::span<double>, double);

namespace {

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, uint32_t, uint64_t>;

}  // namespace

template <typename T>
nlohmann::json params_to_json(std::span<const T> params) {
  constexpr int kDigits = sizeof(T) * 2;
  std::string hex;
  hex.reserve(params.size() * kDigits);
  char buf[17];
  for (T x : params) {
    std::snprintf(buf, sizeof(buf), "%0*llx", kDigits,
                  static_cast<unsigned long long>(std::bit_cast<Bits<T>>(x)));
    hex += buf;
  }
  return {{"dtype", sizeof(T) == 4 ? "f32" : "f64"}, {"count", params.size()}, {"hex", hex}};
}

template <typename T>
std::vector<T> params_from_json(const nlohmann::json& j) {
  constexpr size_t kDigits = sizeof(T) * 2;
  if (j.at("dtype").get<std::string>() != (sizeof(T) == 4 ? "f32" : "f64"))
    throw ConfigError("parameter blob has the wrong dtype");
  const size_t count = j.at("count");
  const std::string& hex = j.at("hex").get_ref<const std::string&>();
  if (hex.size() != count * kDigits) throw ConfigError("parameter blob is truncated");
  std::vector<T> out(count);
  for (size_t i = 0; i < count; ++i) {
    const unsigned long long bits = std::stoull(hex.substr(i * kDigits, kDigits), nullptr, 16);
    out[i] = std::bit_cast<T>(static_cast<Bits<T>>(bits));
  }
  return out;
}

template nlohmann::json params_to_json<float>(std::span<const float>);
template nlohmann::json params_to_json<double>(std::span<const double>);
template std::vector<float> params_from_json<float>(const nlohmann::json&);
template std::vector<double> params_from_json<double>(const nlohmann::json&);

}  // namespace instructrl
