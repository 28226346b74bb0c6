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

// Optimal-transport conditional flow matching: probability-path samples,
// the regression loss, and forward-Euler sampling of the learned ODE.
//
// Path: x_t = t*x1 + (1 - (1 - sigma_min)*t)*x0, target u_t = x1 - (1 - sigma_min)*x0.

#pragma once

#include "magi/autograd.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace magi::cfm {

inline constexpr double kDefaultSigmaMin = 1e-4;

struct FlowSample {
  Mat x0;
  Mat x1;
  double t = 0.0;
  Mat xt;
  Mat ut;
};

struct ODESolverConfig {
  int nfe = 10;
  std::uint64_t seed = 0;
};

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Draws x0 ~ N(0, I) from `rng` and builds the path sample at time `t`.
FlowSample make_flow_sample(const Mat& x1, std::mt19937_64& rng, double t, double sigma_min = kDefaultSigmaMin);
/// Same, with caller-provided noise.
FlowSample make_flow_sample(const Mat& x1, Mat x0, double t, double sigma_min = kDefaultSigmaMin);
/// Training-time sample: t ~ U[0, 1], then x0 ~ N(0, I).
FlowSample draw_training_sample(const Mat& x1, std::mt19937_64& rng, double sigma_min = kDefaultSigmaMin);

/// Differentiable vector field v(x_t, t, cond).
using DiffField = std::function<ad::Var(const ad::Var& x, double t, const ad::Var& cond)>;
/// Inference-time vector field.
using Field = std::function<Mat(const Mat& x, double t, const Mat& cond)>;

/// Mean squared error between v(x_t, t, cond) and u_t over rows selected by
/// `row_mask`, pooled across the batch.
ad::Var cfm_loss(const DiffField& field, std::span<const FlowSample> batch, const ad::Var& cond,
                 const std::vector<bool>& row_mask);

/// x_{k+1} = x_k + v(x_k, k/nfe, cond)/nfe for k = 0..nfe-1. Throws
/// NumericalFailure carrying k when the field or state becomes non-finite.
Mat euler_solve(const Field& field, const Mat& x_init, const Mat& cond, const ODESolverConfig& config);

}  // namespace magi::cfm
