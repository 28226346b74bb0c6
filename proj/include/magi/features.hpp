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

// Acoustic and motion feature extraction, frame-rate conversion and
// token-level aggregation.

#pragma once

#include "magi/common.hpp"
#include "magi/wav.hpp"

#include <optional>
#include <span>
#include <vector>

namespace magi::features {

inline constexpr int kMotionDim = 45;

/// Analysis settings shared by the mel and pitch extractors. The frame grid of
/// both is identical, so their frame counts always agree.
struct MelConfig {
  int sample_rate = 22050;
  int hop_length = 256;
  int win_length = 1024;
  int n_fft = 1024;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-5;

  double frame_rate() const { return static_cast<double>(sample_rate) / hop_length; }
};

struct PitchConfig {
  double f_min = 60.0;
  double f_max = 400.0;
  double voicing_threshold = 0.3;
};

struct MelSpectrogram {
  Mat frames;  // T_f x n_mels, natural-log energies
  double frame_rate = 0.0;

  Eigen::Index num_frames() const { return frames.rows(); }
};

struct MotionSequence {
  Mat frames;  // T_f x 45 exponential-map rotations
  double fps = 0.0;

  Eigen::Index num_frames() const { return frames.rows(); }
  double duration_s() const { return static_cast<double>(frames.rows()) / fps; }
};

struct PitchContour {
  std::vector<double> values;  // Hz, 0 where unvoiced (before interpolation)
  std::vector<bool> voiced;
};

struct EnergyContour {
  std::vector<double> values;
};

struct FeatureBundle {
  std::vector<int> tokens;
  MelSpectrogram mel;
  MotionSequence motion;
  PitchContour pitch;  // interpolated
  EnergyContour energy;
  std::optional<std::vector<int>> durations;
  int speaker = 0;

  Eigen::Index num_frames() const { return mel.num_frames(); }
  /// Throws InvalidInput if any of the bundle invariants is violated.
  void validate() const;
};

/// Slaney-style mel filterbank, n_mels x (n_fft/2 + 1), area-normalised.
Mat mel_filterbank(const MelConfig& config);
/// Number of analysis frames for a waveform of `num_samples` samples.
Eigen::Index frame_count(std::size_t num_samples, const MelConfig& config);

MelSpectrogram extract_mel(const io::Waveform& waveform, const MelConfig& config);
EnergyContour extract_energy(const MelSpectrogram& mel);
PitchContour extract_pitch(const io::Waveform& waveform, const MelConfig& framing,
                           const PitchConfig& config = {});
PitchContour interpolate_unvoiced(const PitchContour& contour);

MotionSequence resample_motion(const MotionSequence& motion, double target_fps);
/// Like resample_motion but forces exactly `num_frames` output frames (used to
/// lock motion onto the mel grid; differs from the rounded count by at most 1).
MotionSequence resample_motion_to(const MotionSequence& motion, double target_fps,
                                  Eigen::Index num_frames);

std::vector<double> token_average(std::span<const double> contour, std::span<const int> durations);

/// Index of the bucket containing `value`: the number of boundaries <= value.
int bucketize(double value, std::span<const double> boundaries);
/// `count`-1 boundaries evenly spaced strictly inside (lo, hi).
std::vector<double> linear_boundaries(double lo, double hi, int count);

/// Full extraction path for one utterance. Motion is resampled onto the mel
/// frame grid; pitch is interpolated through unvoiced regions.
FeatureBundle extract_bundle(const io::Waveform& waveform, const MotionSequence& motion,
                             std::vector<int> tokens, int speaker, const MelConfig& mel_config,
                             const PitchConfig& pitch_config = {});

}  // namespace magi::features
