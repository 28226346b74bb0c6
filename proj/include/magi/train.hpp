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

// Loss assembly, optimisation and the pretrain -> fine-tune schedule.

#pragma once

#include "magi/align.hpp"
#include "magi/net.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace magi::train {

struct LossWeights {
  double cfm = 1.0;
  double duration = 1.0;
  double pitch = 1.0;
  double energy = 1.0;
  double prior = 1.0;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int pretrain_steps = 0;
  int finetune_steps = 0;
  LossWeights weights;
  std::uint64_t seed = 0;
  /// Save a checkpoint every this many steps (0: only at the end of the run).
  int checkpoint_every = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct LossReport {
  double total = 0.0;
  double cfm = 0.0;
  double duration = 0.0;
  double pitch = 0.0;
  double energy = 0.0;
  double prior = 0.0;
};

/// One utterance in training units: standardized joint frames and per-frame
/// standardized prosody.
struct Example {
  std::vector<int> tokens;
  int speaker = 0;
  Mat joint;                     // T_f x joint_dim
  std::vector<double> pitch_z;   // standardized log-Hz
  std::vector<double> energy_z;  // standardized linear energy
};

Example make_example(const features::FeatureBundle& bundle, const Standardizer& standardizer);

/// Differentiable loss terms for a batch, each averaged over utterances.
struct LossTerms {
  ad::Var total, cfm, duration, pitch, energy, prior;
  std::vector<align::Alignment> alignments;

  LossReport report() const;
};

/// Builds every loss term. Alignments come from monotonic alignment search on
/// the current mu unless `fixed_alignments` is given. All noise (flow times,
/// x0 draws) comes from a generator seeded with `noise_seed`. The prior term
/// is reported per feature element (prior_loss / joint_dim).
LossTerms compute_losses(const net::Model& model, std::span<const Example> batch, const LossWeights& weights,
                         std::uint64_t noise_seed,
                         const std::vector<align::Alignment>* fixed_alignments = nullptr);

/// Adaptive moment estimation over every parameter in a store.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(nn::ParamStore& params);
  long steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path, const nn::ParamStore& params);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Mat> m_, v_;
};

/// Computes the losses, backpropagates and applies one optimizer update.
/// Throws NumericalFailure naming the first non-finite component.
LossReport training_step(net::Model& model, Adam& optimizer, std::span<const Example> batch,
                         const TrainConfig& config, std::uint64_t step_seed);

/// Seed used for the noise of global step `step` under base seed `seed`.
std::uint64_t step_seed(std::uint64_t seed, long step);

/// Batch indices for global step `step`: the whole corpus if it fits,
/// otherwise a seeded draw without replacement.
std::vector<std::size_t> batch_indices(std::size_t corpus_size, int batch_size, std::uint64_t seed, long step);

struct MetricRecord {
  long step = 0;
  std::string stage;
  LossReport losses;
  double wall_time_s = 0.0;

  std::string to_line() const;
};

struct ScheduleOptions {
  /// Append one line per step when set.
  std::optional<std::filesystem::path> metrics_path;
  /// Checkpoints go to <dir>/step_<n> and <dir>/final when set.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Statistics to install before training. When absent they are fitted on
  /// the union of both corpora, unless the model is already trained.
  std::optional<Standardizer> standardizer;
};

struct ScheduleResult {
  std::vector<MetricRecord> log;
  LossReport final_pretrain;
  LossReport final_finetune;
};

/// Pretrain on the multispeaker corpus, then fine-tune on the target corpus,
/// whose utterances are all mapped to the reserved speaker index S-1.
ScheduleResult run_schedule(net::Model& model, std::span<const features::FeatureBundle> pretrain,
                            std::span<const features::FeatureBundle> finetune, const TrainConfig& config,
                            const ScheduleOptions& options = {});

/// Saves model, optimizer moments and step counter so training can resume.
void save_training_state(const std::filesystem::path& dir, const net::Model& model, const Adam& optimizer);
/// Restores optimizer state saved by save_training_state into `optimizer`.
void load_optimizer_state(const std::filesystem::path& dir, const net::Model& model, Adam& optimizer);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
inline constexpr double kGradCheckFloor = 1e-5;

/// Central finite differences of `loss` against the analytic gradients of
/// every entry of every parameter in `params`.
GradCheckResult check_gradients(nn::ParamStore& params, const std::function<ad::Var()>& loss, double eps);

/// Gradient check of the full weighted training loss on a fixed batch.
/// Alignments and noise are frozen at the unperturbed parameters.
GradCheckResult check_gradients(net::Model& model, std::span<const Example> batch, const LossWeights& weights,
                                double eps, std::uint64_t noise_seed = 0);

}  // namespace magi::train
