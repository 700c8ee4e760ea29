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

#ifndef INSTRUCTRL_ERRORS_H_
#define INSTRUCTRL_ERRORS_H_

#include <stdexcept>
#include <string>

namespace instructrl {

// Invalid user-supplied configuration (bad config file, out-of-range knob).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition: illegal action, wrong player,
// incomplete prior table, mismatched domains.
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Transient failure talking to an external language-model service. Callers
// may retry; never converted into a default answer.
class RetryableBackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical failure during learning (NaN loss or gradient, divergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace instructrl

#endif  // INSTRUCTRL_ERRORS_H_
