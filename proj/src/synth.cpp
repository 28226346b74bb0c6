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

#include "magi/synth.hpp"

#include "magi/tensor_io.hpp"
#include "magi/text.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>

namespace magi::synth {

namespace {

Mat to_float_precision(const Mat& m) { return m.cast<float>().cast<double>(); }

std::vector<double> column_values(const Mat& m) {
  return std::vector<double>(m.data(), m.data() + m.size());
}

void require_finite(const Mat& m, const char* stage) {
  if (!m.allFinite()) throw NumericalFailure(stage, -1, "non-finite values");
}

template <typename F>
auto run_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(stage, e.step(), e.what());
  }
}

}  // namespace

void ProsodyControls::validate() const {
  if (!(std::isfinite(pitch_scale) && pitch_scale > 0.0)) throw InvalidInput("pitch_scale must be positive");
  if (!(std::isfinite(energy_scale) && energy_scale > 0.0)) throw InvalidInput("energy_scale must be positive");
}

ScaledProsody apply_controls(std::span<const double> pitch_hz, std::span<const double> energy,
                             const ProsodyControls& controls) {
  controls.validate();
  ScaledProsody out;
  out.pitch_hz.reserve(pitch_hz.size());
  out.energy.reserve(energy.size());
  for (double p : pitch_hz) out.pitch_hz.push_back(controls.pitch_scale * p);
  for (double e : energy) out.energy.push_back(controls.energy_scale * e);
  return out;
}

SynthesisSeeds SynthesisSeeds::from(std::uint64_t seed) {
  return {seed * 2 + 0x51ED27ULL, seed * 2 + 0x51ED28ULL};
}

SynthesisResult synthesize(const net::Model& model, const std::string& text, int speaker,
                           const ProsodyControls& controls, const SynthesisSeeds& seeds,
                           const SynthesisOptions& options) {
  controls.validate();
  const auto& cfg = model.config();
  if (speaker < 0 || speaker >= cfg.speakers) {
    throw InvalidInput("speaker " + std::to_string(speaker) + " outside [0, " + std::to_string(cfg.speakers) + ")");
  }
  if (options.nfe_joint < 1 || options.nfe_dur < 1) throw InvalidInput("nfe settings must be >= 1");
  if (!model.trained() && !options.allow_untrained) throw InvalidInput("model is untrained");

  if (text::normalize_words(text).empty()) throw InvalidInput("text is empty after normalization");

  SynthesisResult r;
  r.text = text;
  r.tokens = text::tokenize(text);
  r.speaker = speaker;
  r.seeds = seeds;
  r.nfe_joint = options.nfe_joint;
  r.nfe_dur = options.nfe_dur;

  ad::NoGradGuard no_grad;
  const auto& st = model.standardizer();
  const net::EncoderOutput enc = model.encode_text(r.tokens, speaker);
  const net::ProsodyPrediction pros = model.predict_prosody(enc.hidden, speaker);
  require_finite(pros.pitch.value(), "prosody prediction");
  require_finite(pros.energy.value(), "prosody prediction");
  std::vector<double> pitch_hz, energy;
  for (double z : column_values(pros.pitch.value())) pitch_hz.push_back(st.z_to_pitch(z));
  for (double z : column_values(pros.energy.value())) energy.push_back(std::max(0.0, st.z_to_energy(z)));
  ScaledProsody scaled = apply_controls(pitch_hz, energy, controls);
  r.pitch_hz = std::move(scaled.pitch_hz);
  r.energy = std::move(scaled.energy);

  const Mat hp = model.add_prosody(enc.hidden, r.pitch_hz, r.energy).value();
  if (options.durations) {
    if (options.durations->size() != r.tokens.size()) throw InvalidInput("durations must match the token count");
    for (int d : *options.durations) {
      if (d < 1) throw InvalidInput("durations must be >= 1");
    }
    r.durations = *options.durations;
  } else {
    r.durations = run_stage("duration sampling", [&] {
      return model.sample_durations(hp, speaker, {options.nfe_dur, seeds.duration});
    });
  }

  const Mat cond = net::length_regulate(hp, r.durations);
  r.joint_standardized = run_stage("joint decoding", [&] {
    return model.decode_joint(cond, speaker, {options.nfe_joint, seeds.joint});
  });
  require_finite(r.joint_standardized, "joint decoding");
  auto [mel, motion] =
      net::split_output(st.destandardize_joint(r.joint_standardized), cfg.n_mels, cfg.frame_rate);
  mel.frames = to_float_precision(mel.frames);
  motion.frames = to_float_precision(motion.frames);
  r.mel = std::move(mel);
  r.motion = std::move(motion);
  return r;
}

SynthesisResult synthesize(const net::Model& model, const std::string& text, int speaker,
                           const SynthesisSeeds& seeds, const SynthesisOptions& options) {
  return synthesize(model, text, speaker, ProsodyControls{}, seeds, options);
}

void export_result(const SynthesisResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  io::save_matrix(dir / "mel.mtf", result.mel.frames);
  io::save_matrix(dir / "motion.mtf", result.motion.frames);

  nlohmann::ordered_json j;
  j["text"] = result.text;
  j["tokens"] = result.tokens;
  j["speaker"] = result.speaker;
  j["duration_seed"] = result.seeds.duration;
  j["joint_seed"] = result.seeds.joint;
  j["nfe_joint"] = result.nfe_joint;
  j["nfe_dur"] = result.nfe_dur;
  j["frame_rate"] = result.mel.frame_rate;
  j["frames"] = result.num_frames();
  j["durations"] = result.durations;
  j["pitch_hz"] = result.pitch_hz;
  j["energy"] = result.energy;
  const auto json_path = dir / "synthesis.json";
  std::ofstream js(json_path, std::ios::binary | std::ios::trunc);
  if (!js) throw IoError("cannot write " + json_path.string());
  js << j.dump(2) << '\n';
  if (!js) throw IoError("failed writing " + json_path.string());

  const auto csv_path = dir / "motion.csv";
  std::ofstream csv(csv_path, std::ios::binary | std::ios::trunc);
  if (!csv) throw IoError("cannot write " + csv_path.string());
  static const char* axes = "xyz";
  csv << "time_s";
  for (int c = 0; c < features::kMotionDim; ++c) csv << ",j" << c / 3 << '_' << axes[c % 3];
  csv << '\n';
  char buf[32];
  for (Eigen::Index f = 0; f < result.motion.frames.rows(); ++f) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(f) / result.motion.fps);
    csv << buf;
    for (Eigen::Index c = 0; c < result.motion.frames.cols(); ++c) {
      std::snprintf(buf, sizeof buf, ",%.9g", result.motion.frames(f, c));
      csv << buf;
    }
    csv << '\n';
  }
  if (!csv) throw IoError("failed writing " + csv_path.string());
}

}  // namespace magi::synth
