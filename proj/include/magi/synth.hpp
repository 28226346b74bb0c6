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

// Inference: text -> (mel, motion) with optional prosody scaling.
#pragma once

#include "magi/net.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace magi::synth {

struct ProsodyControls {
  double pitch_scale = 1.0;
  double energy_scale = 1.0;

  /// InvalidInput unless both scales are finite and positive.
  void validate() const;
};

struct ScaledProsody {
  std::vector<double> pitch_hz;
  std::vector<double> energy;
};

/// Multiplies token pitch (Hz) and energy by the control scales.
ScaledProsody apply_controls(std::span<const double> pitch_hz, std::span<const double> energy,
                             const ProsodyControls& controls);

/// Duration noise and decoder noise use independent streams.
struct SynthesisSeeds {
  std::uint64_t duration = 0;
  std::uint64_t joint = 0;

  static SynthesisSeeds from(std::uint64_t seed);
};

struct SynthesisOptions {
  int nfe_joint = 100;
  int nfe_dur = 10;
  /// Skip duration sampling and use these (one per token, each >= 1).
  std::optional<std::vector<int>> durations;
  /// Permit an untrained model.
  bool allow_untrained = false;
};

struct SynthesisResult {
  std::string text;
  std::vector<int> tokens;
  int speaker = 0;
  SynthesisSeeds seeds;
  int nfe_joint = 0;
  int nfe_dur = 0;
  std::vector<int> durations;
  std::vector<double> pitch_hz;  // token level, after controls
  std::vector<double> energy;    // token level, after controls
  Mat joint_standardized;        // decoder output before destandardization
  features::MelSpectrogram mel;      // float32-representable values
  features::MotionSequence motion;   // float32-representable values

  Eigen::Index num_frames() const { return mel.num_frames(); }
};

SynthesisResult synthesize(const net::Model& model, const std::string& text, int speaker,
                           const ProsodyControls& controls, const SynthesisSeeds& seeds,
                           const SynthesisOptions& options = {});
SynthesisResult synthesize(const net::Model& model, const std::string& text, int speaker,
                           const SynthesisSeeds& seeds, const SynthesisOptions& options = {});

/// Writes mel.mtf, motion.mtf (float32 MTF/1), synthesis.json (durations,
/// prosody, seeds) and motion.csv (time_s + 45 channels).
void export_result(const SynthesisResult& result, const std::filesystem::path& dir);

}  // namespace magi::synth
