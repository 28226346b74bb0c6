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

#include "magi/standardizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace magi::train {

namespace {

std::vector<double> to_std_vector(const RowVec& v) { return {v.data(), v.data() + v.size()}; }

RowVec from_std_vector(const std::vector<double>& v) {
  RowVec r(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) r(static_cast<Eigen::Index>(i)) = v[i];
  return r;
}

}  // namespace

Standardizer Standardizer::identity(int joint_dim) {
  Standardizer s;
  s.joint_mean = RowVec::Zero(joint_dim);
  s.joint_std = RowVec::Ones(joint_dim);
  // Speech-range defaults: 60-400 Hz around ~150 Hz.
  s.log_pitch_min = std::log(60.0);
  s.log_pitch_max = std::log(400.0);
  s.log_pitch_mean = std::log(150.0);
  s.log_pitch_std = 0.3;
  s.energy_min = 0.0;
  s.energy_max = 10.0;
  s.energy_mean = 1.0;
  s.energy_std = 1.0;
  return s;
}

Standardizer Standardizer::fit(std::span<const features::FeatureBundle> corpus) {
  if (corpus.empty()) throw InvalidInput("Standardizer::fit: empty corpus");
  const Eigen::Index dim = corpus.front().mel.frames.cols() + corpus.front().motion.frames.cols();
  RowVec sum = RowVec::Zero(dim), sq = RowVec::Zero(dim);
  double n = 0.0;
  double lp = 0.0, lp2 = 0.0, en = 0.0, en2 = 0.0;
  Standardizer s;
  s.log_pitch_min = s.energy_min = std::numeric_limits<double>::infinity();
  s.log_pitch_max = s.energy_max = -std::numeric_limits<double>::infinity();
  // Two passes: means first, then centred sums, to keep the variance exact.
  for (const auto& b : corpus) {
    if (b.mel.frames.cols() + b.motion.frames.cols() != dim) throw InvalidInput("Standardizer::fit: channel mismatch");
    for (Eigen::Index j = 0; j < b.num_frames(); ++j) {
      sum.head(b.mel.frames.cols()) += b.mel.frames.row(j);
      sum.tail(b.motion.frames.cols()) += b.motion.frames.row(j);
      const double l = std::log(std::max(b.pitch.values[static_cast<std::size_t>(j)], kPitchFloorHz));
      const double e = b.energy.values[static_cast<std::size_t>(j)];
      lp += l;
      en += e;
      s.log_pitch_min = std::min(s.log_pitch_min, l);
      s.log_pitch_max = std::max(s.log_pitch_max, l);
      s.energy_min = std::min(s.energy_min, e);
      s.energy_max = std::max(s.energy_max, e);
      n += 1.0;
    }
  }
  s.joint_mean = sum / n;
  s.log_pitch_mean = lp / n;
  s.energy_mean = en / n;
  for (const auto& b : corpus) {
    for (Eigen::Index j = 0; j < b.num_frames(); ++j) {
      RowVec row(dim);
      row.head(b.mel.frames.cols()) = b.mel.frames.row(j);
      row.tail(b.motion.frames.cols()) = b.motion.frames.row(j);
      sq += (row - s.joint_mean).array().square().matrix();
      const double l = std::log(std::max(b.pitch.values[static_cast<std::size_t>(j)], kPitchFloorHz)) - s.log_pitch_mean;
      const double e = b.energy.values[static_cast<std::size_t>(j)] - s.energy_mean;
      lp2 += l * l;
      en2 += e * e;
    }
  }
  s.joint_std = (sq / n).array().sqrt().matrix();
  for (Eigen::Index c = 0; c < dim; ++c) {
    if (!(s.joint_std(c) > 1e-12)) s.joint_std(c) = 1.0;
  }
  s.log_pitch_std = std::sqrt(lp2 / n);
  if (!(s.log_pitch_std > 1e-12)) s.log_pitch_std = 1.0;
  s.energy_std = std::sqrt(en2 / n);
  if (!(s.energy_std > 1e-12)) s.energy_std = 1.0;
  return s;
}

Mat Standardizer::joint(const features::FeatureBundle& b) const {
  Mat raw(b.num_frames(), b.mel.frames.cols() + b.motion.frames.cols());
  raw.leftCols(b.mel.frames.cols()) = b.mel.frames;
  raw.rightCols(b.motion.frames.cols()) = b.motion.frames;
  if (joint_std.size() == 0) return raw;
  return standardize_joint(raw);
}

Mat Standardizer::standardize_joint(const Mat& raw) const {
  if (raw.cols() != joint_mean.size()) throw InvalidInput("standardize_joint: channel count mismatch");
  Mat z = raw.rowwise() - joint_mean;
  return (z.array().rowwise() / joint_std.array()).matrix();
}

Mat Standardizer::destandardize_joint(const Mat& z) const {
  if (z.cols() != joint_mean.size()) throw InvalidInput("destandardize_joint: channel count mismatch");
  Mat raw = (z.array().rowwise() * joint_std.array()).matrix();
  return raw.rowwise() + joint_mean;
}

double Standardizer::pitch_to_z(double hz) const {
  return (std::log(std::max(hz, kPitchFloorHz)) - log_pitch_mean) / log_pitch_std;
}
double Standardizer::z_to_pitch(double z) const { return std::exp(log_pitch_mean + log_pitch_std * z); }
double Standardizer::energy_to_z(double e) const { return (e - energy_mean) / energy_std; }
double Standardizer::z_to_energy(double z) const { return energy_mean + energy_std * z; }

nlohmann::json Standardizer::to_json() const {
  return {{"joint_mean", to_std_vector(joint_mean)},
          {"joint_std", to_std_vector(joint_std)},
          {"log_pitch_mean", log_pitch_mean},
          {"log_pitch_std", log_pitch_std},
          {"energy_mean", energy_mean},
          {"energy_std", energy_std},
          {"log_pitch_min", log_pitch_min},
          {"log_pitch_max", log_pitch_max},
          {"energy_min", energy_min},
          {"energy_max", energy_max}};
}

Standardizer Standardizer::from_json(const nlohmann::json& j) {
  Standardizer s;
  s.joint_mean = from_std_vector(j.at("joint_mean").get<std::vector<double>>());
  s.joint_std = from_std_vector(j.at("joint_std").get<std::vector<double>>());
  s.log_pitch_mean = j.at("log_pitch_mean").get<double>();
  s.log_pitch_std = j.at("log_pitch_std").get<double>();
  s.energy_mean = j.at("energy_mean").get<double>();
  s.energy_std = j.at("energy_std").get<double>();
  s.log_pitch_min = j.at("log_pitch_min").get<double>();
  s.log_pitch_max = j.at("log_pitch_max").get<double>();
  s.energy_min = j.at("energy_min").get<double>();
  s.energy_max = j.at("energy_max").get<double>();
  return s;
}

}  // namespace magi::train
