// Copyright 2026 The Tabular MOPO Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MOPO_ERRORS_H_
#define MOPO_ERRORS_H_

#include <stdexcept>
#include <string>

namespace mopo {

// Raised when an input lies outside the domain of an operation (negative
// reward vectors passed to an aggregation, zero probabilities fed to a log).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when an iterative solver exhausts its budget. Carries the residual
// reached so callers can decide whether the iterate is still usable.
class SolverError : public std::runtime_error {
 public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) +
                           ")"),
        residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

}  // namespace mopo

#endif  // MOPO_ERRORS_H_
