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

// The joint speech-and-gesture network.
//
//   tokens + speaker -> text encoder -> H (last hidden layer), mu = proj(H)
//   H + speaker      -> pitch / energy predictors (token level)
//   H + bucketed prosody embeddings -> H_p
//   H_p + speaker    -> flow-matching duration predictor (log(1 + d) domain)
//   H_p repeated by durations, + speaker -> flow-matching U-Net decoder that
//                       jointly samples [mel | motion] frames
//
// The decoder output adds a time-gated per-channel copy of the state to the
// U-Net output, since the U-Net is narrower than the joint feature width.
//
// mu only feeds the prior loss used for alignment search; the decoder is
// conditioned on H directly.

#pragma once

#include "magi/autograd.hpp"
#include "magi/cfm.hpp"
#include "magi/features.hpp"
#include "magi/layers.hpp"
#include "magi/standardizer.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <utility>
#include <vector>

namespace magi::net {

struct ModelConfig {
  int vocab_size = 43;
  int hidden = 64;
  int encoder_layers = 2;
  int encoder_heads = 2;
  int encoder_ff = 128;
  int prosody_width = 32;
  int duration_width = 32;
  int buckets = 256;
  int n_mels = 80;
  int motion_dim = features::kMotionDim;
  int speakers = 17;
  double sigma_min = cfm::kDefaultSigmaMin;
  int decoder_channels = 64;
  int decoder_heads = 2;
  int time_dim = 16;
  double frame_rate = 22050.0 / 256.0;

  int joint_dim() const { return n_mels + motion_dim; }
  /// Throws ConfigError on any inconsistent field.
  void validate() const;

  nlohmann::json to_json() const;
  /// Rejects unknown keys; missing keys keep their defaults.
  static ModelConfig from_json(const nlohmann::json& j);
};

/// Exactly one entry set.
struct SpeakerVector {
  Mat one_hot;  // 1 x S

  static SpeakerVector make(int index, int speakers);
  int index() const;
};

struct EncoderOutput {
  ad::Var hidden;  // T_t x d
  ad::Var mu;      // T_t x joint_dim
};

struct ProsodyPrediction {
  ad::Var pitch;   // T_t x 1, standardized log-Hz
  ad::Var energy;  // T_t x 1, standardized energy
};

/// Bucket boundaries for the prosody embeddings: pitch in log-Hz, energy linear.
struct ProsodyBuckets {
  std::vector<double> pitch;
  std::vector<double> energy;

  static ProsodyBuckets from_standardizer(const train::Standardizer& s, int buckets);
};

class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t init_seed);

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  /// Deep copy: same config, parameter values, statistics and flags.
  std::unique_ptr<Model> clone() const;

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  const train::Standardizer& standardizer() const { return standardizer_; }
  const ProsodyBuckets& buckets() const { return buckets_; }
  /// Installs corpus statistics and derives the bucket boundaries from them.
  void set_standardizer(const train::Standardizer& s);

  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }

  SpeakerVector speaker(int index) const;

  EncoderOutput encode_text(std::span<const int> tokens, int speaker) const;
  ProsodyPrediction predict_prosody(const ad::Var& hidden, int speaker) const;
  /// hidden + pitch embedding + energy embedding, with values given in Hz and
  /// linear energy respectively.
  ad::Var add_prosody(const ad::Var& hidden, std::span<const double> pitch_hz,
                      std::span<const double> energy) const;

  /// Duration-predictor vector field over T_t x 1 states in log(1 + d).
  ad::Var duration_field(const ad::Var& x, double t, const ad::Var& hidden_prosody, int speaker) const;
  /// Joint decoder vector field over T_f x joint_dim states. `cond` is the
  /// length-regulated hidden state with the speaker columns appended.
  ad::Var decoder_field(const ad::Var& x, double t, const ad::Var& cond) const;

  /// Frame-level decoder conditioning: repeat rows by durations, append speaker.
  ad::Var decoder_condition(const ad::Var& hidden_prosody, std::span<const int> durations, int speaker) const;

  std::vector<int> sample_durations(const Mat& hidden_prosody, int speaker, const cfm::ODESolverConfig& solver) const;
  /// Euler-integrates the decoder from N(0, I) noise; output in standardized units.
  Mat decode_joint(const Mat& cond_frames, int speaker, const cfm::ODESolverConfig& solver) const;

  const nn::Embedding& pitch_embedding() const { return pitch_emb_; }
  const nn::Embedding& energy_embedding() const { return energy_emb_; }

 private:
  struct ResBlock {
    nn::Conv1d conv1, conv2;
    nn::LayerNorm norm;
    nn::Linear time_proj;
    nn::Linear skip;
    ad::Var operator()(const ad::Var& x, const ad::Var& temb) const;
  };

  ResBlock make_resblock(const std::string& name, Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  ModelConfig config_;
  nn::ParamStore params_;
  train::Standardizer standardizer_;
  ProsodyBuckets buckets_;
  bool trained_ = false;

  // text encoder
  nn::Embedding token_emb_;
  nn::Linear prenet_;
  std::vector<nn::TransformerBlock> encoder_;
  nn::LayerNorm encoder_norm_;
  nn::Linear mu_proj_;
  // prosody
  nn::VariancePredictor pitch_pred_, energy_pred_;
  nn::Embedding pitch_emb_, energy_emb_;
  // durations
  nn::VariancePredictor duration_pred_;
  nn::Linear duration_gain_;
  // decoder
  nn::Linear time_mlp1_, time_mlp2_;
  ResBlock down0_, down1_, mid_, up1_, up0_;
  nn::TransformerBlock bottleneck_;
  nn::Linear out_proj_;
  nn::Linear x_gain_;  // time-dependent per-channel gain on the state
};

/// Rows of `hidden` repeated durations[i] times, in order.
ad::Var length_regulate(const ad::Var& hidden, std::span<const int> durations);
Mat length_regulate(const Mat& hidden, std::span<const int> durations);

/// Table rows selected by bucketizing each value.
ad::Var embed_prosody(std::span<const double> values, std::span<const double> boundaries,
                      const nn::Embedding& table);

/// First n_mels columns become the mel, the remaining 45 the motion; both at
/// `frame_rate`.
std::pair<features::MelSpectrogram, features::MotionSequence> split_output(const Mat& joint, int n_mels,
                                                                           double frame_rate);

/// Checkpoint directory: model.json (config, statistics, parameter manifest)
/// and params.mtf (MTF/1 float64 records in manifest order).
void save_model(const std::filesystem::path& dir, const Model& model);
std::unique_ptr<Model> load_model(const std::filesystem::path& dir);

}  // namespace magi::net
