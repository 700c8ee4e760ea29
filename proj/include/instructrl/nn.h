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

// Small dense networks with hand-written backprop and Adam. Parameters live
// in one flat buffer so optimizers, target copies and checkpoints treat them
// uniformly.

#ifndef INSTRUCTRL_NN_H_
#define INSTRUCTRL_NN_H_

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "instructrl/rng.h"
#include "json.hpp"

namespace instructrl {

enum class Activation { kRelu, kTanh };
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpSpec {
  int input = 0;
  std::vector<int> hidden;
  int output = 0;
  Activation activation = Activation::kRelu;

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_in(int l) const { return l == 0 ? input : hidden[l - 1]; }
  int layer_out(int l) const { return l + 1 == num_layers() ? output : hidden[l]; }
  size_t num_params() const;
  void validate() const;  // throws ConfigError
  bool operator==(const MlpSpec&) const = default;
};
void to_json(nlohmann::json& j, const MlpSpec& s);
void from_json(const nlohmann::json& j, MlpSpec& s);

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
class Mlp {
 public:
  using Matrix = RowMatrix<T>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;
  using ConstVectorMap = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

  // Activations kept for the backward pass.
  struct Workspace {
    std::vector<Matrix> acts;  // acts[0] = input, acts[l + 1] = output of layer l
    Matrix delta, next_delta;
  };

  Mlp() = default;
  explicit Mlp(MlpSpec spec);  // zero parameters
  // Uniform(+-sqrt(6 / (fan_in + fan_out))) weights, zero biases.
  Mlp(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const { return spec_; }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }
  size_t num_params() const { return params_.size(); }

  ConstMatrixMap weight(int layer) const;
  ConstVectorMap bias(int layer) const;

  // x: batch x input. Returns the batch x output matrix (valid until the next
  // forward on the same workspace).
  const Matrix& forward(const Eigen::Ref<const Matrix>& x, Workspace& ws) const;
  // Accumulates d(loss)/d(params) into `grad` (size num_params) given
  // d(loss)/d(output) for the batch of the last forward on `ws`.
  void backward(Workspace& ws, const Eigen::Ref<const Matrix>& grad_out,
                std::span<T> grad) const;

  bool operator==(const Mlp& o) const { return spec_ == o.spec_ && params_ == o.params_; }

 private:
  size_t weight_offset(int layer) const { return offsets_[layer]; }
  size_t bias_offset(int layer) const {
    return offsets_[layer] + static_cast<size_t>(spec_.layer_in(layer)) * spec_.layer_out(layer);
  }

  MlpSpec spec_;
  std::vector<size_t> offsets_;
  std::vector<T> params_;
};

extern template class Mlp<float>;
extern template class Mlp<double>;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};
void to_json(nlohmann::json& j, const AdamConfig& c);
void from_json(const nlohmann::json& j, AdamConfig& c);

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t step = 0;
  explicit AdamState(size_t n = 0) : m(n, T(0)), v(n, T(0)) {}
};

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grad, AdamState<T>& state,
               const AdamConfig& config);

// Scales grad in place so its global L2 norm is at most max_norm. Returns the
// norm before clipping. Throws NumericalError on a non-finite norm.
template <typename T>
double clip_grad_norm(std::span<T> grad, double max_norm);

// Parameters round-trip bit-exactly: floats are written as their bit patterns
// in hex, which also keeps the files free of printf rounding.
template <typename T>
nlohmann::json params_to_json(std::span<const T> params);
template <typename T>
std::vector<T> params_from_json(const nlohmann::json& j);

}  // namespace instructrl

#endif  // INSTRUCTRL_NN_H_
