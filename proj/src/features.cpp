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

#include "magi/features.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>

namespace magi::features {

namespace {

// Slaney mel scale: linear below 1 kHz, logarithmic above.
constexpr double kMinLogHz = 1000.0;
constexpr double kLinearStep = 200.0 / 3.0;
const double kMinLogMel = kMinLogHz / kLinearStep;
const double kLogStep = std::log(6.4) / 27.0;

double hz_to_mel(double hz) {
  return hz < kMinLogHz ? hz / kLinearStep : kMinLogMel + std::log(hz / kMinLogHz) / kLogStep;
}

double mel_to_hz(double mel) {
  return mel < kMinLogMel ? mel * kLinearStep : kMinLogHz * std::exp(kLogStep * (mel - kMinLogMel));
}

// Reflection index into [0, n) that works for any offset.
std::size_t reflect(long i, std::size_t n) {
  if (n == 1) return 0;
  const long period = 2 * static_cast<long>(n) - 2;
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < static_cast<long>(n) ? m : period - m);
}

// Frame j of the analysis grid covers original samples
// [j*hop - pad, j*hop - pad + n_fft), with pad = (n_fft - hop) / 2, reflected at
// the edges.
std::vector<double> frame_at(std::span<const double> x, Eigen::Index j, const MelConfig& c) {
  const long pad = (c.n_fft - c.hop_length) / 2;
  const long start = static_cast<long>(j) * c.hop_length - pad;
  std::vector<double> buf(static_cast<std::size_t>(c.n_fft));
  const std::size_t n = x.size();
  for (int k = 0; k < c.n_fft; ++k) {
    const long idx = start + k;
    buf[static_cast<std::size_t>(k)] = (idx >= 0 && idx < static_cast<long>(n)) ? x[static_cast<std::size_t>(idx)]
                                                                                  : x[reflect(idx, n)];
  }
  return buf;
}

std::vector<double> hann(int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  for (int i = 0; i < length; ++i) {
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex g_plan_mutex;

struct FftPlan {
  int n;
  double* in;
  fftw_complex* out;
  fftw_plan plan;

  explicit FftPlan(int size) : n(size) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    in = fftw_alloc_real(static_cast<std::size_t>(n));
    out = fftw_alloc_complex(static_cast<std::size_t>(n / 2 + 1));
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  ~FftPlan() {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;
};

void check_config(const MelConfig& c) {
  if (c.hop_length <= 0 || c.n_fft <= 0 || c.win_length <= 0 || c.win_length > c.n_fft || c.n_mels <= 0 ||
      c.f_max <= c.f_min || c.f_max > c.sample_rate / 2.0) {
    throw ConfigError("invalid mel analysis configuration");
  }
}

}  // namespace

void FeatureBundle::validate() const {
  const Eigen::Index t = mel.num_frames();
  if (t < 1) throw InvalidInput("feature bundle has no frames");
  if (motion.num_frames() != t) throw InvalidInput("motion frame count differs from mel");
  if (motion.frames.cols() != kMotionDim) throw InvalidInput("motion must have 45 channels");
  if (static_cast<Eigen::Index>(pitch.values.size()) != t || static_cast<Eigen::Index>(energy.values.size()) != t) {
    throw InvalidInput("contour length differs from mel frame count");
  }
  if (tokens.empty()) throw InvalidInput("feature bundle has no tokens");
  if (durations) {
    if (durations->size() != tokens.size()) throw InvalidInput("durations/tokens length mismatch");
    long total = 0;
    for (int d : *durations) {
      if (d < 1) throw InvalidInput("durations must be positive");
      total += d;
    }
    if (total != t) throw InvalidInput("durations do not sum to frame count");
  }
  if (!mel.frames.allFinite() || !motion.frames.allFinite()) throw InvalidInput("non-finite features");
}

Mat mel_filterbank(const MelConfig& c) {
  check_config(c);
  const int bins = c.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(c.f_min);
  const double mel_hi = hz_to_mel(c.f_max);
  std::vector<double> edges(static_cast<std::size_t>(c.n_mels + 2));
  for (int m = 0; m < c.n_mels + 2; ++m) {
    edges[static_cast<std::size_t>(m)] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * m / (c.n_mels + 1));
  }
  Mat fb = Mat::Zero(c.n_mels, bins);
  for (int m = 0; m < c.n_mels; ++m) {
    const double lo = edges[static_cast<std::size_t>(m)];
    const double mid = edges[static_cast<std::size_t>(m + 1)];
    const double hi = edges[static_cast<std::size_t>(m + 2)];
    const double norm = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * c.sample_rate / c.n_fft;
      const double w = std::max(0.0, std::min((f - lo) / (mid - lo), (hi - f) / (hi - mid)));
      fb(m, k) = w * norm;
    }
  }
  return fb;
}

Eigen::Index frame_count(std::size_t num_samples, const MelConfig& c) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(num_samples / static_cast<std::size_t>(c.hop_length)));
}

MelSpectrogram extract_mel(const io::Waveform& waveform, const MelConfig& c) {
  check_config(c);
  if (waveform.samples.empty()) throw InvalidInput("extract_mel: empty waveform");
  if (waveform.sample_rate != c.sample_rate) {
    throw ConfigError("extract_mel: sample rate " + std::to_string(waveform.sample_rate) +
                      " does not match configured " + std::to_string(c.sample_rate));
  }
  const Mat fb = mel_filterbank(c);
  const Eigen::Index frames = frame_count(waveform.samples.size(), c);
  const int bins = c.n_fft / 2 + 1;
  // Window is centred inside the FFT frame when win_length < n_fft.
  std::vector<double> window(static_cast<std::size_t>(c.n_fft), 0.0);
  {
    const auto w = hann(c.win_length);
    const int off = (c.n_fft - c.win_length) / 2;
    std::copy(w.begin(), w.end(), window.begin() + off);
  }
  FftPlan fft(c.n_fft);
  MelSpectrogram mel;
  mel.frame_rate = c.frame_rate();
  mel.frames.resize(frames, c.n_mels);
  Vec mag(bins);
  const double floor_log = std::log(c.log_floor);
  for (Eigen::Index j = 0; j < frames; ++j) {
    const auto buf = frame_at(waveform.samples, j, c);
    for (int k = 0; k < c.n_fft; ++k) fft.in[k] = buf[static_cast<std::size_t>(k)] * window[static_cast<std::size_t>(k)];
    fftw_execute(fft.plan);
    for (int k = 0; k < bins; ++k) mag(k) = std::hypot(fft.out[k][0], fft.out[k][1]);
    const Vec energies = fb * mag;
    for (int m = 0; m < c.n_mels; ++m) {
      mel.frames(j, m) = energies(m) > c.log_floor ? std::log(energies(m)) : floor_log;
    }
  }
  return mel;
}

EnergyContour extract_energy(const MelSpectrogram& mel) {
  if (mel.frames.rows() < 1 || !mel.frames.allFinite()) throw InvalidInput("extract_energy: invalid mel");
  EnergyContour e;
  e.values.resize(static_cast<std::size_t>(mel.frames.rows()));
  for (Eigen::Index j = 0; j < mel.frames.rows(); ++j) {
    e.values[static_cast<std::size_t>(j)] = mel.frames.row(j).array().exp().matrix().norm();
  }
  return e;
}

PitchContour extract_pitch(const io::Waveform& waveform, const MelConfig& framing, const PitchConfig& pc) {
  check_config(framing);
  if (pc.f_min <= 0 || pc.f_max <= pc.f_min) throw ConfigError("extract_pitch: invalid f0 range");
  if (waveform.samples.empty()) throw InvalidInput("extract_pitch: empty waveform");
  if (waveform.sample_rate != framing.sample_rate) throw ConfigError("extract_pitch: sample rate mismatch");
  const Eigen::Index frames = frame_count(waveform.samples.size(), framing);
  const double sr = waveform.sample_rate;
  const int lag_min = std::max(2, static_cast<int>(std::floor(sr / pc.f_max)));
  const int lag_max = std::min(framing.n_fft / 2, static_cast<int>(std::ceil(sr / pc.f_min)));
  PitchContour out;
  out.values.assign(static_cast<std::size_t>(frames), 0.0);
  out.voiced.assign(static_cast<std::size_t>(frames), false);
  const int n = framing.n_fft;
  std::vector<double> r(static_cast<std::size_t>(lag_max + 2), 0.0);
  for (Eigen::Index j = 0; j < frames; ++j) {
    auto x = frame_at(waveform.samples, j, framing);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    for (auto& v : x) v -= mean;
    double total = 0.0;
    for (double v : x) total += v * v;
    if (total < 1e-12) continue;
    // Prefix sums of squared samples give each lag's window energies in O(1).
    std::vector<double> sq(static_cast<std::size_t>(n) + 1, 0.0);
    for (int i = 0; i < n; ++i) sq[static_cast<std::size_t>(i) + 1] = sq[static_cast<std::size_t>(i)] + x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    double best = -1.0;
    for (int lag = lag_min - 1; lag <= lag_max + 1; ++lag) {
      double acc = 0.0;
      for (int i = 0; i + lag < n; ++i) acc += x[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i + lag)];
      const double e0 = sq[static_cast<std::size_t>(n - lag)];
      const double e1 = sq[static_cast<std::size_t>(n)] - sq[static_cast<std::size_t>(lag)];
      const double denom = std::sqrt(e0 * e1);
      r[static_cast<std::size_t>(lag)] = denom > 0.0 ? acc / denom : 0.0;
      if (lag >= lag_min && lag <= lag_max) best = std::max(best, r[static_cast<std::size_t>(lag)]);
    }
    if (best < pc.voicing_threshold) continue;
    // First local maximum reaching 90% of the global peak avoids octave errors.
    int pick = -1;
    for (int lag = lag_min; lag <= lag_max; ++lag) {
      const double v = r[static_cast<std::size_t>(lag)];
      if (v >= 0.9 * best && v >= r[static_cast<std::size_t>(lag - 1)] && v >= r[static_cast<std::size_t>(lag + 1)]) {
        pick = lag;
        break;
      }
    }
    if (pick < 0) continue;
    const double a = r[static_cast<std::size_t>(pick - 1)];
    const double b = r[static_cast<std::size_t>(pick)];
    const double c = r[static_cast<std::size_t>(pick + 1)];
    const double curv = a - 2.0 * b + c;
    const double shift = std::abs(curv) > 1e-12 ? std::clamp(0.5 * (a - c) / curv, -0.5, 0.5) : 0.0;
    const double f0 = std::clamp(sr / (pick + shift), pc.f_min, pc.f_max);
    out.values[static_cast<std::size_t>(j)] = f0;
    out.voiced[static_cast<std::size_t>(j)] = true;
  }
  return out;
}

PitchContour interpolate_unvoiced(const PitchContour& contour) {
  PitchContour out = contour;
  const std::size_t n = contour.values.size();
  if (contour.voiced.size() != n) throw InvalidInput("interpolate_unvoiced: mask length mismatch");
  std::vector<std::size_t> voiced_idx;
  for (std::size_t i = 0; i < n; ++i) {
    if (contour.voiced[i]) voiced_idx.push_back(i);
  }
  if (voiced_idx.empty()) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < voiced_idx.front(); ++i) out.values[i] = contour.values[voiced_idx.front()];
  for (std::size_t i = voiced_idx.back() + 1; i < n; ++i) out.values[i] = contour.values[voiced_idx.back()];
  for (std::size_t k = 0; k + 1 < voiced_idx.size(); ++k) {
    const std::size_t a = voiced_idx[k], b = voiced_idx[k + 1];
    const double va = contour.values[a], vb = contour.values[b];
    for (std::size_t i = a + 1; i < b; ++i) {
      out.values[i] = va + (vb - va) * static_cast<double>(i - a) / static_cast<double>(b - a);
    }
  }
  return out;
}

namespace {

// Catmull-Rom evaluation at fractional position s with linear ghost points at
// both ends, so constant and linear channels are reproduced exactly.
RowVec cubic_at(const Mat& p, double s) {
  const Eigen::Index n = p.rows();
  auto point = [&](Eigen::Index i) -> RowVec {
    if (i < 0) return p.row(0) + static_cast<double>(i) * (p.row(1) - p.row(0));
    if (i >= n) return p.row(n - 1) + static_cast<double>(i - n + 1) * (p.row(n - 1) - p.row(n - 2));
    return p.row(i);
  };
  Eigen::Index i = static_cast<Eigen::Index>(std::floor(s));
  i = std::clamp<Eigen::Index>(i, -1, n - 1);
  const double u = s - static_cast<double>(i);
  const RowVec p0 = point(i - 1), p1 = point(i), p2 = point(i + 1), p3 = point(i + 2);
  const double u2 = u * u, u3 = u2 * u;
  return 0.5 * ((2.0 * p1) + (-p0 + p2) * u + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * u2 +
                (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * u3);
}

}  // namespace

MotionSequence resample_motion_to(const MotionSequence& motion, double target_fps, Eigen::Index num_frames) {
  if (motion.frames.rows() < 4) throw InvalidInput("resample_motion: need at least 4 frames for cubic support");
  if (!(target_fps > 0.0) || !(motion.fps > 0.0)) throw InvalidInput("resample_motion: fps must be positive");
  if (num_frames < 1) throw InvalidInput("resample_motion: empty output");
  MotionSequence out;
  out.fps = target_fps;
  out.frames.resize(num_frames, motion.frames.cols());
  const double ratio = motion.fps / target_fps;
  for (Eigen::Index k = 0; k < num_frames; ++k) {
    const double s = static_cast<double>(k) * ratio;
    if (s == std::floor(s) && s < static_cast<double>(motion.frames.rows())) {
      out.frames.row(k) = motion.frames.row(static_cast<Eigen::Index>(s));
    } else {
      out.frames.row(k) = cubic_at(motion.frames, s);
    }
  }
  return out;
}

MotionSequence resample_motion(const MotionSequence& motion, double target_fps) {
  if (!(target_fps > 0.0) || !(motion.fps > 0.0)) throw InvalidInput("resample_motion: fps must be positive");
  const auto n = static_cast<Eigen::Index>(std::llround(motion.duration_s() * target_fps));
  return resample_motion_to(motion, target_fps, std::max<Eigen::Index>(n, 1));
}

std::vector<double> token_average(std::span<const double> contour, std::span<const int> durations) {
  long total = 0;
  for (int d : durations) {
    if (d < 1) throw InvalidInput("token_average: durations must be >= 1");
    total += d;
  }
  if (total != static_cast<long>(contour.size())) {
    throw InvalidInput("token_average: durations sum " + std::to_string(total) + " != contour length " +
                       std::to_string(contour.size()));
  }
  std::vector<double> out;
  out.reserve(durations.size());
  std::size_t pos = 0;
  for (int d : durations) {
    double acc = 0.0;
    for (int k = 0; k < d; ++k) acc += contour[pos++];
    out.push_back(acc / d);
  }
  return out;
}

int bucketize(double value, std::span<const double> boundaries) {
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (!(boundaries[i - 1] < boundaries[i])) throw ConfigError("bucketize: boundaries not strictly increasing");
  }
  return static_cast<int>(std::upper_bound(boundaries.begin(), boundaries.end(), value) - boundaries.begin());
}

std::vector<double> linear_boundaries(double lo, double hi, int count) {
  if (count < 1) throw ConfigError("linear_boundaries: need at least one bucket");
  if (!(hi > lo)) hi = lo + 1.0;
  std::vector<double> b(static_cast<std::size_t>(count - 1));
  for (int i = 1; i < count; ++i) b[static_cast<std::size_t>(i - 1)] = lo + (hi - lo) * i / count;
  return b;
}

FeatureBundle extract_bundle(const io::Waveform& waveform, const MotionSequence& motion, std::vector<int> tokens,
                             int speaker, const MelConfig& mel_config, const PitchConfig& pitch_config) {
  FeatureBundle b;
  b.tokens = std::move(tokens);
  b.speaker = speaker;
  b.mel = extract_mel(waveform, mel_config);
  b.energy = extract_energy(b.mel);
  b.pitch = interpolate_unvoiced(extract_pitch(waveform, mel_config, pitch_config));
  b.motion = resample_motion_to(motion, mel_config.frame_rate(), b.mel.num_frames());
  b.validate();
  return b;
}

}  // namespace magi::features
