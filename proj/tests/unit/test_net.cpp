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

#include "magi/net.hpp"
#include "magi/train.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <map>

#include <nlohmann/json.hpp>

using namespace magi;

namespace {

net::ModelConfig small_config(int speakers = 3) {
  net::ModelConfig c = oracles::tiny_model_config(speakers);
  c.hidden = 16;
  c.n_mels = 80;
  return c;
}

const std::vector<int> kTokens = {3, 9, 0, 14, 22, 5, 7};

}  // namespace

TEST_CASE("encoder and decoder shapes") {
  const auto cfg = small_config();
  net::Model model(cfg, 1);
  const auto enc = model.encode_text(kTokens, 0);
  CHECK(enc.hidden.rows() == 7);
  CHECK(enc.hidden.cols() == 16);
  CHECK(enc.mu.rows() == 7);
  CHECK(enc.mu.cols() == 125);
  const auto pros = model.predict_prosody(enc.hidden, 0);
  CHECK(pros.pitch.rows() == 7);
  CHECK(pros.energy.cols() == 1);
  const Mat cond = [] { std::mt19937_64 r(2); return cfm::standard_normal(30, 16, r); }();
  const Mat joint = model.decode_joint(cond, 1, {4, 9});
  CHECK(joint.rows() == 30);
  CHECK(joint.cols() == 125);
  CHECK(joint.allFinite());
}

TEST_CASE("speaker and token order change every output") {
  const auto cfg = small_config();
  net::Model model(cfg, 2);
  const auto a = model.encode_text(kTokens, 0);
  const auto b = model.encode_text(kTokens, 1);
  std::vector<int> swapped = kTokens;
  std::swap(swapped[0], swapped[1]);
  const auto c = model.encode_text(swapped, 0);
  CHECK((a.hidden.value() - b.hidden.value()).norm() > 1e-6);
  CHECK((a.hidden.value() - c.hidden.value()).norm() > 1e-6);
  CHECK((model.predict_prosody(a.hidden, 0).pitch.value() - model.predict_prosody(a.hidden, 2).pitch.value()).norm() >
        1e-9);
  const ad::Var x = ad::constant(Mat::Constant(7, 1, 0.3));
  CHECK((model.duration_field(x, 0.5, a.hidden, 0).value() - model.duration_field(x, 0.5, a.hidden, 1).value())
            .norm() > 1e-9);
  std::mt19937_64 rng(3);
  const Mat cond = cfm::standard_normal(12, 16, rng);
  CHECK((model.decode_joint(cond, 0, {3, 1}) - model.decode_joint(cond, 2, {3, 1})).norm() > 1e-9);
}

TEST_CASE("speaker conditioning adds few parameters") {
  net::ModelConfig c1;
  c1.speakers = 1;
  net::ModelConfig c16 = c1;
  c16.speakers = 16;
  const auto p1 = net::Model(c1, 0).parameter_count();
  const auto p16 = net::Model(c16, 0).parameter_count();
  CHECK(p16 > p1);
  CHECK(p16 - p1 < 10000);
}

TEST_CASE("config validation") {
  net::ModelConfig c = small_config();
  c.motion_dim = 44;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  c.speakers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config();
  CHECK(net::ModelConfig::from_json(c.to_json()).to_json() == c.to_json());
  net::Model model(small_config(), 0);
  CHECK_THROWS_AS(model.encode_text(std::vector<int>{}, 0), InvalidInput);
  CHECK_THROWS_AS(model.encode_text(std::vector<int>{999}, 0), InvalidInput);
  CHECK_THROWS(model.encode_text(kTokens, 3));
}

TEST_CASE("prosody quantization") {
  net::Model model(small_config(), 4);
  auto s = train::Standardizer::identity(125);
  s.log_pitch_min = std::log(50.0);
  s.log_pitch_max = std::log(400.0);
  s.energy_min = 0.0;
  s.energy_max = 4.0;
  model.set_standardizer(s);
  const ad::Var zero = ad::constant(Mat::Zero(3, 16));
  const std::vector<double> energy = {0.1, 0.1, 0.1};

  // 120 and 121 Hz fall in the same bucket, 30 Hz is below the lowest boundary.
  const Mat h = model.add_prosody(zero, std::vector<double>{120.0, 121.0, 30.0}, energy).value();
  CHECK(h.row(0) == h.row(1));
  const Mat& ptab = model.pitch_embedding().table.value();
  const Mat& etab = model.energy_embedding().table.value();
  CHECK(h.row(2).isApprox(ptab.row(0) + etab.row(0), 1e-14));
  const Mat hi = model.add_prosody(zero, std::vector<double>{1000.0, 1000.0, 1000.0}, energy).value();
  CHECK(hi.row(0).isApprox(ptab.row(ptab.rows() - 1) + etab.row(0), 1e-14));
  CHECK_THROWS_AS(model.add_prosody(zero, std::vector<double>{100.0}, energy), InvalidInput);
}

TEST_CASE("duration samples are positive integers fixed by the seed") {
  net::Model model(small_config(), 5);
  const Mat hp = model.encode_text(kTokens, 0).hidden.value();
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto d = model.sample_durations(hp, 0, {2, seed});
    REQUIRE(d.size() == 7);
    for (int v : d) REQUIRE(v >= 1);
  }
  CHECK(model.sample_durations(hp, 1, {10, 42}) == model.sample_durations(hp, 1, {10, 42}));
  CHECK(model.decode_joint(hp, 0, {5, 7}) == model.decode_joint(hp, 0, {5, 7}));
  CHECK(model.decode_joint(hp, 0, {5, 7}) != model.decode_joint(hp, 0, {5, 8}));
}

TEST_CASE("length regulation") {
  Mat h(3, 2);
  h << 1, 2, 3, 4, 5, 6;
  const Mat out = net::length_regulate(h, std::vector<int>{2, 1, 3});
  Mat expected(6, 2);
  expected << 1, 2, 1, 2, 3, 4, 5, 6, 5, 6, 5, 6;
  CHECK(out == expected);
  CHECK_THROWS_AS(net::length_regulate(h, std::vector<int>{0, 1, 0}), InvalidInput);
  CHECK_THROWS_AS(net::length_regulate(h, std::vector<int>{1, 1}), InvalidInput);
  CHECK_THROWS_AS(net::length_regulate(h, std::vector<int>{1, -1, 1}), InvalidInput);

  std::mt19937_64 rng(6);
  nn::ParamStore store;
  const ad::Var v = store.add("h", cfm::standard_normal(3, 2, rng));
  const auto r = train::check_gradients(
      store, [&] { return ad::mean(ad::mul(net::length_regulate(v, std::vector<int>{2, 1, 3}), ad::constant(expected))); },
      1e-6);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("joint output splits into mel and motion") {
  std::mt19937_64 rng(7);
  const Mat joint = cfm::standard_normal(11, 125, rng);
  const auto [mel, motion] = net::split_output(joint, 80, 22050.0 / 256.0);
  CHECK(mel.frames.cols() == 80);
  CHECK(motion.frames.cols() == 45);
  CHECK(mel.frame_rate == 22050.0 / 256.0);
  CHECK(motion.fps == 22050.0 / 256.0);
  Mat back(11, 125);
  back << mel.frames, motion.frames;
  CHECK(back == joint);
  CHECK_THROWS(net::split_output(joint, 81, 86.0));
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "magi_test_net_ckpt";
  std::filesystem::remove_all(dir);
  net::Model model(small_config(), 8);
  model.set_trained(true);
  net::save_model(dir, model);
  const auto loaded = net::load_model(dir);
  CHECK(loaded->trained());
  CHECK(loaded->config().to_json() == model.config().to_json());
  REQUIRE(loaded->params().size() == model.params().size());
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    CHECK(loaded->params().name(i) == model.params().name(i));
    CHECK(loaded->params().var(i).value() == model.params().var(i).value());
  }
  const Mat hp = model.encode_text(kTokens, 1).hidden.value();
  CHECK(loaded->decode_joint(hp, 1, {3, 2}) == model.decode_joint(hp, 1, {3, 2}));
  CHECK_THROWS_AS(net::load_model(dir / "missing"), IoError);
}

TEST_CASE("clone is independent") {
  net::Model model(small_config(), 9);
  auto copy = model.clone();
  copy->params().var(0).mutable_value().array() += 1.0;
  CHECK(copy->params().var(0).value() != model.params().var(0).value());
}

TEST_CASE("duration flow learns a constant duration") {
  auto cfg = oracles::tiny_model_config(1);
  cfg.duration_width = 16;
  cfg.time_dim = 16;
  net::Model model(cfg, 10);
  std::vector<train::Example> batch(2);
  std::vector<align::Alignment> fixed;
  std::mt19937_64 rng(11);
  for (int b = 0; b < 2; ++b) {
    batch[b].tokens = {1 + b, 4, 7, 0, 9};
    batch[b].joint = cfm::standard_normal(20, cfg.joint_dim(), rng);
    batch[b].pitch_z.assign(20, 0.0);
    batch[b].energy_z.assign(20, 0.0);
    fixed.push_back({{4, 4, 4, 4, 4}});
  }
  train::LossWeights w{0.0, 1.0, 0.0, 0.0, 0.0};
  train::Adam adam(3e-3);
  for (int step = 0; step < 3000; ++step) {
    model.params().zero_grad();
    train::compute_losses(model, batch, w, train::step_seed(12, step), &fixed).total.backward();
    adam.step(model.params());
  }
  std::map<int, int> counts;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Mat hp = model.encode_text(batch[0].tokens, 0).hidden.value();
    for (int d : model.sample_durations(hp, 0, {10, seed})) ++counts[d];
  }
  const auto mode = std::max_element(counts.begin(), counts.end(), [](auto& a, auto& b) { return a.second < b.second; });
  CHECK(mode->first == 4);
}
