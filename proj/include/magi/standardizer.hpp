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

#include "magi/features.hpp"

#include <nlohmann/json_fwd.hpp>

#include <span>
#include <vector>

namespace magi::train {

/// Pitch below this is treated as this value before taking logs.
inline constexpr double kPitchFloorHz = 1.0;

/// Per-channel statistics mapping corpus features to zero mean, unit variance.
/// Joint channels are [mel | motion]. Pitch statistics are over log-Hz,
/// energy statistics over linear energy. Min/max ranges seed the prosody
/// bucket boundaries.
struct Standardizer {
  RowVec joint_mean;
  RowVec joint_std;
  double log_pitch_mean = 0.0;
  double log_pitch_std = 1.0;
  double energy_mean = 0.0;
  double energy_std = 1.0;
  double log_pitch_min = 0.0;
  double log_pitch_max = 1.0;
  double energy_min = 0.0;
  double energy_max = 1.0;

  /// Identity statistics for an untrained model.
  static Standardizer identity(int joint_dim);
  /// Population statistics over every frame of every bundle. Constant
  /// channels get std 1.
  static Standardizer fit(std::span<const features::FeatureBundle> corpus);

  int joint_dim() const { return static_cast<int>(joint_mean.size()); }

  Mat joint(const features::FeatureBundle& b) const;  // standardized [mel | motion]
  Mat standardize_joint(const Mat& raw) const;
  Mat destandardize_joint(const Mat& z) const;

  double pitch_to_z(double hz) const;
  double z_to_pitch(double z) const;
  double energy_to_z(double e) const;
  double z_to_energy(double z) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
};

}  // namespace magi::train
