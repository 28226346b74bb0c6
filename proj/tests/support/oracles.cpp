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

#include "oracles.hpp"

#include "magi/cfm.hpp"
#include "magi/eval.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace magi::oracles {

namespace {

void compositions(int remaining, int parts, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& f) {
  if (parts == 1) {
    cur.push_back(remaining);
    f(cur);
    cur.pop_back();
    return;
  }
  for (int d = 1; d <= remaining - (parts - 1); ++d) {
    cur.push_back(d);
    compositions(remaining - d, parts - 1, cur, f);
    cur.pop_back();
  }
}

std::size_t edit_rec(const std::vector<std::string>& a, std::size_t i, const std::vector<std::string>& b, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = edit_rec(a, i + 1, b, j + 1) + (a[i] == b[j] ? 0 : 1);
  const std::size_t del = edit_rec(a, i + 1, b, j) + 1;
  const std::size_t ins = edit_rec(a, i, b, j + 1) + 1;
  return std::min({sub, del, ins});
}

std::vector<std::vector<std::string>> all_sequences(int max_len, const std::vector<std::string>& alphabet) {
  std::vector<std::vector<std::string>> out{{}};
  std::size_t begin = 0;
  for (int len = 1; len <= max_len; ++len) {
    const std::size_t end = out.size();
    for (std::size_t k = begin; k < end; ++k) {
      for (const auto& w : alphabet) {
        auto s = out[k];
        s.push_back(w);
        out.push_back(std::move(s));
      }
    }
    begin = end;
  }
  return out;
}

}  // namespace

double brute_force_mas_score(const Mat& loglik) {
  const int tt = static_cast<int>(loglik.rows());
  const int tf = static_cast<int>(loglik.cols());
  double best = -std::numeric_limits<double>::infinity();
  if (tt < 1 || tt > tf) return best;
  std::vector<int> cur;
  compositions(tf, tt, cur, [&](const std::vector<int>& durations) {
    best = std::max(best, align::alignment_score(loglik, align::Alignment{durations}));
  });
  return best;
}

std::size_t brute_force_edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return edit_rec(a, 0, b, 0);
}

double euler_decay_closed_form(int nfe) { return std::pow(1.0 - 1.0 / nfe, nfe); }

double t_cdf_by_quadrature(double t, double df) {
  const double log_norm = std::lgamma(0.5 * (df + 1.0)) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi);
  auto density = [&](double x) { return std::exp(log_norm - 0.5 * (df + 1.0) * std::log1p(x * x / df)); };
  const double a = std::abs(t);
  const int n = 200000;
  const double h = a / n;
  double acc = density(0.0) + density(a);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) * density(i * h);
  const double half = acc * h / 3.0;
  return t >= 0 ? 0.5 + half : 0.5 - half;
}

SuiteResult mas_suite(int cases, std::uint64_t seed) {
  SuiteResult r{"mas", true, {}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  int mismatches = 0;
  for (int c = 0; c < cases; ++c) {
    const int tt = 1 + static_cast<int>(rng() % 4);
    const int tf = tt + static_cast<int>(rng() % static_cast<std::uint64_t>(8 - tt));
    Mat ll(tt, tf);
    for (Eigen::Index k = 0; k < ll.size(); ++k) ll.data()[k] = n(rng);
    const align::Alignment a = align::mas(ll);
    const bool valid = static_cast<int>(a.durations.size()) == tt && a.total_frames() == tf &&
                       std::all_of(a.durations.begin(), a.durations.end(), [](int d) { return d >= 1; });
    if (!valid || align::alignment_score(ll, a) != brute_force_mas_score(ll)) ++mismatches;
  }
  r.passed = mismatches == 0;
  r.detail = std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches";
  return r;
}

SuiteResult cfm_identity_suite(int draws, std::uint64_t seed) {
  SuiteResult r{"cfm_identities", true, {}};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int failures = 0;
  for (int k = 0; k < draws; ++k) {
    const double sigma = k % 2 ? 0.0 : cfm::kDefaultSigmaMin;
    const Mat x1 = cfm::standard_normal(3, 4, rng);
    const auto s = cfm::make_flow_sample(x1, rng, u(rng), sigma);
    const Mat xt = s.t * s.x1 + (1.0 - (1.0 - sigma) * s.t) * s.x0;
    const Mat ut = s.x1 - (1.0 - sigma) * s.x0;
    if (s.xt != xt || s.ut != ut || s.x1 != x1) ++failures;
  }
  const Mat x1 = cfm::standard_normal(2, 3, rng);
  const Mat x0 = cfm::standard_normal(2, 3, rng);
  const auto at0 = cfm::make_flow_sample(x1, x0, 0.0, 0.0);
  const auto at1 = cfm::make_flow_sample(x1, x0, 1.0, 0.0);
  const bool endpoints = at0.xt == x0 && at1.xt == x1 && at0.ut == x1 - x0;
  r.passed = failures == 0 && endpoints;
  r.detail = std::to_string(draws) + " draws, " + std::to_string(failures) + " failures, endpoints " +
             (endpoints ? "exact" : "inexact");
  return r;
}

double euler_error_slope() {
  const cfm::Field decay = [](const Mat& x, double, const Mat&) -> Mat { return -x; };
  std::vector<double> lx, ly;
  for (int nfe = 4; nfe <= 256; nfe *= 2) {
    const Mat out = cfm::euler_solve(decay, Mat::Ones(1, 1), Mat(), {nfe, 0});
    lx.push_back(std::log(static_cast<double>(nfe)));
    ly.push_back(std::log(std::abs(out(0, 0) - std::exp(-1.0))));
  }
  const double n = static_cast<double>(lx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sx += lx[i];
    sy += ly[i];
    sxx += lx[i] * lx[i];
    sxy += lx[i] * ly[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

SuiteResult euler_suite() {
  SuiteResult r{"euler", true, {}};
  const cfm::Field decay = [](const Mat& x, double, const Mat&) -> Mat { return -x; };
  double worst = 0.0;
  for (int nfe : {1, 2, 3, 10, 100}) {
    const Mat out = cfm::euler_solve(decay, Mat::Ones(1, 1), Mat(), {nfe, 0});
    worst = std::max(worst, std::abs(out(0, 0) - euler_decay_closed_form(nfe)));
  }
  const double slope = euler_error_slope();
  r.passed = worst < 1e-12 && slope >= -1.2 && slope <= -0.8;
  std::ostringstream d;
  d << "closed-form deviation " << worst << ", error slope " << slope;
  r.detail = d.str();
  return r;
}

SuiteResult wer_suite(int max_len) {
  SuiteResult r{"wer", true, {}};
  const auto seqs = all_sequences(max_len, {"a", "b", "c"});
  std::size_t mismatches = 0, pairs = 0;
  for (const auto& a : seqs) {
    for (const auto& b : seqs) {
      ++pairs;
      const std::size_t fast = eval::edit_distance(a, b);
      if (fast != brute_force_edit_distance(a, b)) ++mismatches;
      if (!a.empty() && eval::wer_words(a, b) != static_cast<double>(fast) / static_cast<double>(a.size())) {
        ++mismatches;
      }
    }
  }
  const bool example = eval::wer("a b c", "a x c d") == 2.0 / 3.0;
  r.passed = mismatches == 0 && example;
  r.detail = std::to_string(pairs) + " pairs, " + std::to_string(mismatches) + " mismatches, example " +
             (example ? "exact" : "wrong");
  return r;
}

SuiteResult linear_gradient_suite(std::uint64_t seed) {
  SuiteResult r{"gradients_linear", true, {}};
  std::mt19937_64 rng(seed);
  nn::ParamStore store;
  const ad::Var w = store.add("w", cfm::standard_normal(4, 2, rng));
  const ad::Var b = store.add("b", cfm::standard_normal(1, 2, rng));
  const Mat x = cfm::standard_normal(6, 4, rng);
  const Mat y = cfm::standard_normal(6, 2, rng);
  const auto res = train::check_gradients(
      store, [&] { return ad::mse(ad::add_row(ad::matmul(ad::constant(x), w), b), y); }, 1e-3);
  r.passed = res.max_rel_error < 1e-8;
  std::ostringstream d;
  d << "max relative error " << res.max_rel_error << " over " << res.checked << " entries";
  r.detail = d.str();
  return r;
}

SuiteResult model_gradient_suite(std::uint64_t seed, double eps) {
  SuiteResult r{"gradients_model", true, {}};
  const auto cfg = tiny_model_config();
  net::Model model(cfg, seed);
  const auto batch = tiny_batch(cfg, 2, seed + 1);
  const auto res = train::check_gradients(model, batch, {}, eps, seed + 2);
  r.passed = res.max_rel_error < 1e-4;
  std::ostringstream d;
  d << "max relative error " << res.max_rel_error << " at " << res.worst_parameter << "[" << res.worst_index
    << "] over " << res.checked << " entries";
  r.detail = d.str();
  return r;
}

net::ModelConfig tiny_model_config(int speakers) {
  net::ModelConfig c;
  c.hidden = 8;
  c.encoder_layers = 1;
  c.encoder_heads = 2;
  c.encoder_ff = 8;
  c.prosody_width = 4;
  c.duration_width = 4;
  c.buckets = 4;
  c.n_mels = 3;
  c.speakers = speakers;
  c.decoder_channels = 4;
  c.decoder_heads = 2;
  c.time_dim = 4;
  return c;
}

std::vector<train::Example> tiny_batch(const net::ModelConfig& config, int utterances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<train::Example> batch;
  for (int b = 0; b < utterances; ++b) {
    train::Example e;
    e.tokens = {1 + b, 0, 2, 5};
    e.speaker = b % config.speakers;
    const Eigen::Index frames = 7 + b;
    e.joint = cfm::standard_normal(frames, config.joint_dim(), rng);
    const Mat p = cfm::standard_normal(frames, 2, rng);
    for (Eigen::Index i = 0; i < frames; ++i) {
      e.pitch_z.push_back(p(i, 0));
      e.energy_z.push_back(p(i, 1));
    }
    batch.push_back(std::move(e));
  }
  return batch;
}

std::vector<features::FeatureBundle> toy_corpus(const std::filesystem::path& dir,
                                                const std::vector<std::string>& voices, int phrases,
                                                std::size_t chars, std::uint64_t seed) {
  datapipe::PipelineConfig pc;
  pc.out_dir = dir;
  pc.n_phrases = phrases;
  pc.voices = voices;
  pc.seed = seed;
  auto backends = datapipe::mock_backends();
  backends.text = std::make_shared<datapipe::MockTextGenerator>(chars);
  const auto result = datapipe::run_pipeline(pc, backends);
  return datapipe::load_bundles(result.manifest_path);
}

net::ModelConfig toy_model_config(int d, int speakers) {
  net::ModelConfig c;
  c.hidden = d;
  c.encoder_ff = 2 * d;
  c.prosody_width = d;
  c.duration_width = d;
  c.decoder_channels = d;
  c.speakers = speakers;
  return c;
}

}  // namespace magi::oracles
