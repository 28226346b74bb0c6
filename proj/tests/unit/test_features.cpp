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

#include "doctest.h"

#include "magi/features.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace magi;
using namespace magi::features;

namespace {

io::Waveform sine(double hz, double seconds, double amp = 0.5) {
  io::Waveform w;
  const auto n = static_cast<std::size_t>(seconds * w.sample_rate);
  for (std::size_t i = 0; i < n; ++i) w.samples.push_back(amp * std::sin(2.0 * std::numbers::pi * hz * i / w.sample_rate));
  return w;
}

// Slaney mel scale, written out independently of the library.
double slaney_mel(double hz) {
  return hz < 1000.0 ? hz / (200.0 / 3.0) : 15.0 + 27.0 * std::log(hz / 1000.0) / std::log(6.4);
}
double slaney_hz(double mel) {
  return mel < 15.0 ? mel * 200.0 / 3.0 : 1000.0 * std::exp((mel - 15.0) * std::log(6.4) / 27.0);
}

}  // namespace

TEST_CASE("mel of silence sits on the log floor") {
  io::Waveform w;
  w.samples.assign(22050, 0.0);
  const auto mel = extract_mel(w, {});
  CHECK(mel.num_frames() == 86);
  CHECK(mel.frames.cols() == 80);
  CHECK((mel.frames.array() == std::log(1e-5)).all());
}

TEST_CASE("frame rate and frame count") {
  MelConfig c;
  CHECK(c.frame_rate() == 86.1328125);
  CHECK(extract_mel(sine(300, 0.5), c).frame_rate == 86.1328125);
  CHECK(frame_count(22050, c) == 86);
  CHECK(frame_count(10, c) == 1);
}

TEST_CASE("sine at a band centre peaks in that band") {
  const double lo = slaney_mel(0.0), hi = slaney_mel(8000.0);
  for (int band : {10, 20, 35}) {
    const double centre = slaney_hz(lo + (hi - lo) * (band + 1) / 81.0);
    const auto mel = extract_mel(sine(centre, 0.5), {});
    for (Eigen::Index f = 0; f < mel.num_frames(); ++f) {
      Eigen::Index arg;
      mel.frames.row(f).maxCoeff(&arg);
      CHECK(arg == band);
    }
  }
}

TEST_CASE("filterbank shape and coverage") {
  const Mat fb = mel_filterbank({});
  CHECK(fb.rows() == 80);
  CHECK(fb.cols() == 513);
  CHECK((fb.array() >= 0.0).all());
  for (Eigen::Index m = 0; m < fb.rows(); ++m) CHECK(fb.row(m).sum() > 0.0);
}

TEST_CASE("energy is the norm of the linear mel frame") {
  MelSpectrogram mel;
  mel.frames = Mat::Constant(2, 80, std::log(1e-5));
  mel.frames(1, 7) = std::log(3.0);
  const auto e = extract_energy(mel);
  CHECK(e.values[0] == doctest::Approx(std::sqrt(80.0) * 1e-5).epsilon(1e-12));
  CHECK(e.values[1] == doctest::Approx(3.0).epsilon(1e-8));
  MelSpectrogram doubled = mel;
  doubled.frames.array() += std::log(2.0);
  const auto e2 = extract_energy(doubled);
  for (std::size_t i = 0; i < 2; ++i) CHECK(e2.values[i] == doctest::Approx(2.0 * e.values[i]).epsilon(1e-12));
}

TEST_CASE("pitch of a 220 Hz sine") {
  const auto w = sine(220.0, 1.0);
  const auto p = extract_pitch(w, {});
  CHECK(static_cast<Eigen::Index>(p.values.size()) == frame_count(w.samples.size(), {}));
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    CHECK(p.voiced[i]);
    CHECK(std::abs(p.values[i] - 220.0) <= 5.0);
  }
}

TEST_CASE("pitch of noise and of silence") {
  io::Waveform noise;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int i = 0; i < 22050; ++i) noise.samples.push_back(n(rng));
  const auto pn = extract_pitch(noise, {});
  const double voiced = std::count(pn.voiced.begin(), pn.voiced.end(), true);
  CHECK(voiced / pn.voiced.size() < 0.2);

  io::Waveform zero;
  zero.samples.assign(22050, 0.0);
  const auto pz = extract_pitch(zero, {});
  CHECK(std::none_of(pz.voiced.begin(), pz.voiced.end(), [](bool v) { return v; }));
}

TEST_CASE("unvoiced interpolation") {
  auto fill = [](std::vector<double> v, std::vector<bool> m) { return interpolate_unvoiced({v, m}).values; };
  CHECK(fill({100, 0, 0, 160}, {true, false, false, true}) == std::vector<double>{100, 120, 140, 160});
  CHECK(fill({0, 0, 150}, {false, false, true}) == std::vector<double>{150, 150, 150});
  CHECK(fill({5, 6, 7}, {false, false, false}) == std::vector<double>{0, 0, 0});
  CHECK_THROWS_AS(interpolate_unvoiced({{1, 2}, {true}}), InvalidInput);

  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    PitchContour c;
    for (int i = 0; i < 30; ++i) {
      const bool v = rng() % 3 == 0;
      c.voiced.push_back(v);
      c.values.push_back(v ? 80.0 + static_cast<double>(rng() % 200) : 0.0);
    }
    const auto once = interpolate_unvoiced(c);
    CHECK(interpolate_unvoiced(once).values == once.values);
  }
}

TEST_CASE("motion resampling") {
  MotionSequence m;
  m.fps = 120.0;
  m.frames.resize(120, kMotionDim);
  for (Eigen::Index f = 0; f < 120; ++f) {
    for (Eigen::Index c = 0; c < kMotionDim; ++c) m.frames(f, c) = 0.3 + 0.01 * c * static_cast<double>(f) - 0.2 * c;
  }
  SUBCASE("linear ramps stay exact") {
    const auto r = resample_motion(m, 22050.0 / 256.0);
    CHECK((r.num_frames() == 86 || r.num_frames() == 87));
    for (Eigen::Index f = 0; f < r.num_frames(); ++f) {
      const double src = static_cast<double>(f) * 120.0 / r.fps;
      for (Eigen::Index c = 0; c < kMotionDim; ++c) {
        CHECK(r.frames(f, c) == doctest::Approx(0.3 + 0.01 * c * src - 0.2 * c).epsilon(1e-12));
      }
    }
  }
  SUBCASE("constant pose") {
    MotionSequence k = m;
    k.frames.rowwise() = m.frames.row(5);
    const auto r = resample_motion(k, 86.1328125);
    for (Eigen::Index f = 0; f < r.num_frames(); ++f) CHECK(r.frames.row(f).isApprox(m.frames.row(5), 1e-12));
  }
  SUBCASE("identity rate") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n;
    for (Eigen::Index i = 0; i < m.frames.size(); ++i) m.frames.data()[i] = n(rng);
    const auto r = resample_motion(m, 120.0);
    CHECK(r.num_frames() == 120);
    CHECK((r.frames - m.frames).cwiseAbs().maxCoeff() <= 1e-9);
  }
  SUBCASE("integer positions copy source frames") {
    const auto r = resample_motion(m, 60.0);
    for (Eigen::Index f = 0; f < r.num_frames(); ++f) CHECK(r.frames.row(f) == m.frames.row(2 * f));
  }
  SUBCASE("too short") {
    MotionSequence s;
    s.fps = 30;
    s.frames = Mat::Zero(3, kMotionDim);
    CHECK_THROWS_AS(resample_motion(s, 60.0), InvalidInput);
  }
}

TEST_CASE("token averaging") {
  const std::vector<double> c = {1, 2, 3, 4, 5};
  CHECK(token_average(c, std::vector<int>{2, 3}) == std::vector<double>{1.5, 4.0});
  CHECK(token_average(c, std::vector<int>{1, 1, 1, 1, 1}) == c);
  CHECK_THROWS_AS(token_average(c, std::vector<int>{2, 2}), InvalidInput);
  CHECK_THROWS_AS(token_average(c, std::vector<int>{5, 0}), InvalidInput);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> d;
    std::vector<double> x;
    const int tokens = 1 + static_cast<int>(rng() % 6);
    for (int t = 0; t < tokens; ++t) d.push_back(1 + static_cast<int>(rng() % 5));
    for (int t = 0; t < tokens; ++t) {
      for (int k = 0; k < d[t]; ++k) x.push_back(u(rng));
    }
    const auto avg = token_average(x, d);
    std::size_t pos = 0;
    for (int t = 0; t < tokens; ++t) {
      double sum = 0.0;
      for (int k = 0; k < d[t]; ++k) sum += x[pos + k];
      CHECK(avg[t] == doctest::Approx(sum / d[t]).epsilon(1e-14));
      // Broadcasting the token mean back keeps the span mean.
      double back = 0.0;
      for (int k = 0; k < d[t]; ++k) back += avg[t];
      CHECK(back / d[t] == doctest::Approx(sum / d[t]).epsilon(1e-14));
      pos += d[t];
    }
  }
}

TEST_CASE("bucketize") {
  const std::vector<double> b = {1.0, 2.0, 3.0};
  CHECK(bucketize(0.5, b) == 0);
  CHECK(bucketize(1.0, b) == 1);
  CHECK(bucketize(2.0, b) == 2);
  CHECK(bucketize(2.5, b) == 2);
  CHECK(bucketize(3.0, b) == 3);
  CHECK(bucketize(99.0, b) == 3);
  CHECK_THROWS_AS(bucketize(1.0, std::vector<double>{2.0, 1.0}), ConfigError);

  const auto lin = linear_boundaries(0.0, 1.0, 4);
  REQUIRE(lin.size() == 3);
  CHECK(lin[0] == 0.25);
  CHECK(lin[1] == 0.5);
  CHECK(lin[2] == 0.75);

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  const auto bounds = linear_boundaries(0.0, 1.0, 256);
  int prev = -1;
  double prev_v = -10.0;
  std::vector<double> values;
  for (int i = 0; i < 10000; ++i) values.push_back(u(rng));
  for (double v : values) {
    int scan = 0;
    for (double x : bounds) scan += x <= v ? 1 : 0;
    CHECK(bucketize(v, bounds) == scan);
  }
  std::sort(values.begin(), values.end());
  for (double v : values) {
    const int k = bucketize(v, bounds);
    CHECK(k >= prev);
    CHECK(v >= prev_v);
    prev = k;
    prev_v = v;
  }
}

TEST_CASE("bundle extraction keeps every stream on one grid") {
  const auto w = sine(180.0, 0.75);
  MotionSequence m;
  m.fps = 120.0;
  m.frames = Mat::Random(90, kMotionDim);
  const auto b = extract_bundle(w, m, {1, 2, 0, 3}, 0, {});
  CHECK(b.motion.num_frames() == b.num_frames());
  CHECK(b.pitch.values.size() == static_cast<std::size_t>(b.num_frames()));
  CHECK(b.energy.values.size() == static_cast<std::size_t>(b.num_frames()));
  CHECK(b.motion.fps == b.mel.frame_rate);
  CHECK_NOTHROW(b.validate());

  auto bad = b;
  bad.energy.values.pop_back();
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
  bad = b;
  bad.durations = std::vector<int>{1, 1, 1, 1};
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}
