// Copyright 2026 The magi-cpp Authors
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

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>

namespace magi {

/// Dense row-major double matrix. Rows are time steps (frames or tokens),
/// columns are channels.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Base of every error this library throws. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 1; }
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class InfeasibleAlignment : public Error {
 public:
  using Error::Error;
};

class PipelineError : public Error {
 public:
  using Error::Error;
};

/// Raised when a computation produces NaN/Inf. Carries the stage name and,
/// for iterative solvers, the step at which it happened (-1 if not applicable).
class NumericalFailure : public Error {
 public:
  NumericalFailure(std::string stage, long step, const std::string& what)
      : Error(stage + (step >= 0 ? " (step " + std::to_string(step) + ")" : std::string()) +
              ": " + what),
        stage_(std::move(stage)),
        step_(step) {}
  int exit_code() const override { return 2; }
  const std::string& stage() const { return stage_; }
  long step() const { return step_; }

 private:
  std::string stage_;
  long step_;
};

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace magi
