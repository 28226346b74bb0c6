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

// Building blocks of the network. Each layer registers its parameters in a
// ParamStore under a dotted name; the store is what checkpoints, optimizers
// and gradient checks iterate over.

#pragma once

#include "magi/autograd.hpp"

#include <map>
#include <random>
#include <string>
#include <vector>

namespace magi::nn {

class ParamStore {
 public:
  ad::Var add(const std::string& name, Mat init);

  std::size_t size() const { return vars_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  ad::Var& var(std::size_t i) { return vars_[i]; }
  const ad::Var& var(std::size_t i) const { return vars_[i]; }
  std::vector<ad::Var>& vars() { return vars_; }
  const std::vector<ad::Var>& vars() const { return vars_; }

  /// Total scalar parameter count.
  std::size_t count() const;
  void zero_grad();

  std::map<std::string, Mat> state() const;
  /// Copies values by name. Every registered name must be present with the
  /// same shape, otherwise ConfigError.
  void load_state(const std::map<std::string, Mat>& state);

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation.
Mat init_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in);

struct Linear {
  ad::Var weight;  // in x out
  ad::Var bias;    // 1 x out

  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
         std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& x) const;
};

struct Conv1d {
  ad::Var weight;
  ad::Var bias;
  int kernel = 3;

  Conv1d() = default;
  Conv1d(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, int kernel,
         std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& x) const;
};

struct LayerNorm {
  ad::Var gamma;
  ad::Var beta;

  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim);
  ad::Var operator()(const ad::Var& x) const;
};

struct Embedding {
  ad::Var table;  // rows x dim

  Embedding() = default;
  Embedding(ParamStore& store, const std::string& name, Eigen::Index rows, Eigen::Index dim,
            std::mt19937_64& rng);
  ad::Var operator()(std::span<const int> ids) const;
};

struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                     std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& x) const;
};

/// Pre-norm transformer block: x + MHA(LN(x)), then x + FFN(LN(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  MultiHeadAttention attn;
  Linear ff1, ff2;

  TransformerBlock() = default;
  TransformerBlock(ParamStore& store, const std::string& name, Eigen::Index dim, int heads,
                   Eigen::Index ff_dim, std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& x) const;
};

/// Variance-adaptor style predictor: two (conv k3, ReLU, LayerNorm) stages and
/// a linear head producing `out` channels per row.
struct VariancePredictor {
  Conv1d conv1, conv2;
  LayerNorm ln1, ln2;
  Linear head;

  VariancePredictor() = default;
  VariancePredictor(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index width,
                    Eigen::Index out, std::mt19937_64& rng);
  ad::Var operator()(const ad::Var& x) const;
};

/// Sinusoidal positional table, rows = positions.
Mat sinusoidal_positions(Eigen::Index length, Eigen::Index dim);
/// Sinusoidal embedding of a scalar time in [0, 1] (scaled by 1000), 1 x dim.
Mat time_features(double t, Eigen::Index dim);

}  // namespace magi::nn
