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

#include "magi/datapipe.hpp"
#include "magi/tensor_io.hpp"
#include "magi/text.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

using namespace magi;
using namespace magi::datapipe;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

UtteranceRecord record(const std::string& text, const std::string& voice = "v") {
  UtteranceRecord r;
  r.id = "p0000_v00";
  r.prompt_text = text;
  r.voice = voice;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class SpyAligner : public ForcedAligner {
 public:
  std::vector<std::string> seen;
  std::optional<std::vector<WordTiming>> align(std::string_view id, const io::Waveform& audio,
                                               std::span<const std::string> words, std::uint64_t seed) override {
    seen.assign(words.begin(), words.end());
    return MockAligner().align(id, audio, words, seed);
  }
};

class FlakyText : public TextGenerator {
 public:
  int failures = 0;
  std::string generate(int index, std::span<const std::string>, std::uint64_t) override {
    if (failures-- > 0) throw std::runtime_error("flaky");
    return "phrase " + std::to_string(index);
  }
};

}  // namespace

TEST_CASE("status names round trip") {
  for (Status s : {Status::kPending, Status::kOk, Status::kDiscardedTooLong, Status::kDiscardedTokenCap,
                   Status::kDiscardedAlignFail, Status::kError}) {
    CHECK(parse_status(status_name(s)) == s);
  }
  CHECK_THROWS(parse_status("bogus"));
}

TEST_CASE("terminal statuses are immutable") {
  auto r = record("x");
  CHECK_FALSE(r.terminal());
  r.set_status(Status::kDiscardedTooLong);
  CHECK(r.terminal());
  CHECK_THROWS_AS(r.set_status(Status::kOk), PipelineError);
  CHECK_THROWS_AS(r.set_status(Status::kPending), PipelineError);
  CHECK(r.status() == Status::kDiscardedTooLong);
  filter_duration(r, 0.0);
  CHECK(r.status() == Status::kDiscardedTooLong);
}

TEST_CASE("record json round trip") {
  auto r = record("Hello there", "alto");
  r.duration_s = 1.25;
  r.token_count = 11;
  r.asr_text = "hello there";
  r.word_timings = {{"hello", 0.0, 0.5}, {"there", 0.5, 1.25}};
  r.set_status(Status::kOk);
  const auto back = UtteranceRecord::from_json(r.to_json());
  CHECK(back.to_json() == r.to_json());
  CHECK(back.status() == Status::kOk);
  CHECK(back.word_timings[1].end_s == 1.25);
}

TEST_CASE("phrase cap") {
  std::string words;
  while (words.size() < 400) words += "abcdefg ";
  const auto capped = cap_phrase(words);
  CHECK(capped.size() <= 300);
  CHECK(capped.back() != ' ');
  CHECK(words.substr(0, capped.size()) == capped);
  CHECK(words[capped.size()] == ' ');
  CHECK(cap_phrase("short") == "short");
  CHECK(cap_phrase(std::string(310, 'x')).size() == 300);
  std::string wide;
  for (int i = 0; i < 200; ++i) wide += "\xC3\xA9";
  const auto w = cap_phrase(wide);
  CHECK(w.size() == 300);
  CHECK(cap_phrase(std::string("a") + wide).size() == 299);
}

TEST_CASE("text generation is seeded, capped and retried") {
  MockTextGenerator gen(600);
  const auto a = generate_texts(5, {}, gen, 4);
  CHECK(a == generate_texts(5, {}, gen, 4));
  CHECK(a != generate_texts(5, {}, gen, 5));
  for (const auto& t : a) CHECK(t.size() <= 300);
  CHECK(generate_texts(0, {}, gen, 4).empty());

  FlakyText flaky;
  flaky.failures = 2;
  CHECK(generate_texts(1, {}, flaky, 0) == std::vector<std::string>{"phrase 0"});
  flaky.failures = 3;
  CHECK_THROWS_AS(generate_texts(1, {}, flaky, 0), PipelineError);
}

TEST_CASE("token cap is inclusive at 400") {
  MockSpeechSynthesizer tts;
  tts.token_overrides["at cap"] = 400;
  tts.token_overrides["over cap"] = 401;
  auto keep = record("at cap");
  CHECK(synthesize_speech(keep, tts, 1).has_value());
  CHECK_FALSE(keep.terminal());
  CHECK(keep.token_count == 400);
  auto drop = record("over cap");
  CHECK_FALSE(synthesize_speech(drop, tts, 1).has_value());
  CHECK(drop.status() == Status::kDiscardedTokenCap);
}

TEST_CASE("speech retries then records an error") {
  MockSpeechSynthesizer tts;
  tts.transient_failures["flaky"] = 2;
  tts.transient_failures["broken"] = 3;
  auto ok = record("flaky");
  CHECK(synthesize_speech(ok, tts, 1).has_value());
  auto bad = record("broken");
  CHECK_FALSE(synthesize_speech(bad, tts, 1).has_value());
  CHECK(bad.status() == Status::kError);
  CHECK_FALSE(bad.error.empty());
}

TEST_CASE("duration cap is strict at 25 s") {
  auto a = record("a");
  a.duration_s = 25.0;
  filter_duration(a);
  CHECK_FALSE(a.terminal());
  auto b = record("b");
  b.duration_s = 25.01;
  filter_duration(b);
  CHECK(b.status() == Status::kDiscardedTooLong);
}

TEST_CASE("recognizer output prevails downstream") {
  MockSpeechSynthesizer tts;
  auto r = record("Well, um, hello there!");
  const auto audio = *synthesize_speech(r, tts, 2);

  MockRecognizer identity;
  retranscribe(r, audio, identity, 3);
  CHECK(r.asr_text == r.prompt_text);

  auto r2 = record("Well, um, hello there!");
  r2.duration_s = r.duration_s;
  MockRecognizer no_fillers(true);
  retranscribe(r2, audio, no_fillers, 3);
  CHECK(r2.asr_text != r2.prompt_text);
  SpyAligner spy;
  force_align(r2, audio, spy, 4);
  CHECK(spy.seen == text::normalize_words(r2.asr_text));
  CHECK(spy.seen == std::vector<std::string>{"well", "hello", "there"});
  REQUIRE(r2.word_timings.size() == 3);
  CHECK(r2.word_timings[0].word == "well");
}

TEST_CASE("uniform aligner timings") {
  io::Waveform audio;
  audio.samples.assign(22050 * 3, 0.0);
  const std::vector<std::string> words = {"a", "b", "c", "d"};
  const auto t = *MockAligner().align("x", audio, words, 0);
  REQUIRE(t.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(t[i].start_s == doctest::Approx(3.0 * i / 4).epsilon(1e-12));
    CHECK(t[i].end_s == doctest::Approx(3.0 * (i + 1) / 4).epsilon(1e-12));
  }
  MockAligner failing;
  failing.failing.insert("p0000_v00");
  auto r = record("a b");
  r.asr_text = "a b";
  force_align(r, audio, failing, 0);
  CHECK(r.status() == Status::kDiscardedAlignFail);
}

TEST_CASE("gesture generation") {
  io::Waveform audio;
  audio.samples.assign(static_cast<std::size_t>(22050 * 2.5), 0.0);
  auto r = record("x");
  CHECK_THROWS_AS(generate_gestures(r, audio, *std::make_shared<MockGestureGenerator>(), 0), PipelineError);

  r.word_timings = {{"one", 0.2, 0.6}, {"two", 0.9, 1.4}, {"three", 1.7, 2.3}};
  MockGestureGenerator zero(MockGestureGenerator::Mode::kZero, 120.0);
  const auto z = *generate_gestures(r, audio, zero, 0);
  CHECK(z.frames.rows() == 300);
  CHECK(z.frames.isZero(0.0));

  MockGestureGenerator pulses(MockGestureGenerator::Mode::kOnsetPulses, 120.0);
  const auto m = *generate_gestures(r, audio, pulses, 0);
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index f = 1; f + 1 < m.frames.rows(); ++f) {
    const double v = m.frames(f, 0);
    if (v > 1e-3 && v >= m.frames(f - 1, 0) && v > m.frames(f + 1, 0)) peaks.push_back(f);
  }
  REQUIRE(peaks.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(static_cast<double>(peaks[i]) - r.word_timings[i].start_s * 120.0) <= 1.0);
}

TEST_CASE("pipeline with crafted discards") {
  const auto dir = fresh_dir("magi_test_pipeline_20");
  PipelineConfig pc;
  pc.out_dir = dir;
  pc.n_phrases = 20;
  pc.voices = {"solo"};
  pc.seed = 7;
  auto backends = mock_backends();
  auto text = std::make_shared<MockTextGenerator>(30);
  auto tts = std::make_shared<MockSpeechSynthesizer>();
  auto aligner = std::make_shared<MockAligner>();
  for (int i = 0; i < 20; ++i) text->fixed[i] = "phrase number " + std::to_string(i) + " is here";
  for (int i : {2, 9, 17}) tts->duration_overrides[text->fixed[i]] = 26.0;
  aligner->failing.insert("p0005_v00");
  backends.text = text;
  backends.speech = tts;
  backends.aligner = aligner;

  const auto res = run_pipeline(pc, backends);
  CHECK(res.stats.total_input == 20);
  CHECK(res.stats.retained() == 16);
  CHECK(res.stats.discarded_too_long == 3);
  CHECK(res.stats.discarded_align_fail == 1);
  CHECK(res.stats.consistent());
  CHECK(res.records[5].status() == Status::kDiscardedAlignFail);
  CHECK_FALSE(std::filesystem::exists(dir / "audio" / "p0002_v00.wav"));

  const auto back = read_manifest(res.manifest_path);
  REQUIRE(back.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) CHECK(back[i].to_json() == res.records[i].to_json());
  for (const auto& r : back) {
    if (r.status() != Status::kOk) continue;
    CHECK(std::filesystem::exists(dir / r.audio_path));
    const Mat motion = io::load_matrix(dir / r.gesture_path);
    CHECK(std::abs(static_cast<double>(motion.rows()) - r.duration_s * r.gesture_fps) <= 1.0);
  }
  CHECK(load_bundles(res.manifest_path).size() == 16);

  const auto first = slurp(res.manifest_path);
  std::filesystem::remove_all(dir);
  for (int i = 0; i < 20; ++i) text->fixed[i] = "phrase number " + std::to_string(i) + " is here";
  const auto again = run_pipeline(pc, backends);
  CHECK(slurp(again.manifest_path) == first);
}

TEST_CASE("empty pipeline input") {
  const auto dir = fresh_dir("magi_test_pipeline_empty");
  PipelineConfig pc;
  pc.out_dir = dir;
  pc.n_phrases = 0;
  pc.voices = {"a"};
  const auto res = run_pipeline(pc, mock_backends());
  CHECK(res.records.empty());
  CHECK(res.stats.total_input == 0);
  CHECK(res.stats.consistent());
  CHECK(slurp(res.manifest_path).empty());
}

TEST_CASE("stats stay consistent under random failures") {
  std::mt19937_64 rng(99);
  for (int run = 0; run < 20; ++run) {
    const auto dir = fresh_dir("magi_test_pipeline_fuzz");
    PipelineConfig pc;
    pc.out_dir = dir;
    pc.n_phrases = 4;
    pc.voices = {"a", "b"};
    pc.seed = rng();
    auto backends = mock_backends();
    auto text = std::make_shared<MockTextGenerator>(20);
    auto tts = std::make_shared<MockSpeechSynthesizer>();
    auto aligner = std::make_shared<MockAligner>();
    std::bernoulli_distribution coin(0.3);
    for (int i = 0; i < 4; ++i) {
      text->fixed[i] = "fuzz phrase " + std::to_string(i);
      if (coin(rng)) tts->duration_overrides[text->fixed[i]] = 30.0;
      if (coin(rng)) tts->token_overrides[text->fixed[i]] = 450;
      if (coin(rng)) tts->transient_failures[text->fixed[i]] = 10;
      if (coin(rng)) aligner->failing.insert("p000" + std::to_string(i) + "_v01");
    }
    backends.text = text;
    backends.speech = tts;
    backends.aligner = aligner;
    const auto res = run_pipeline(pc, backends);
    CHECK(res.stats.total_input == 8);
    CHECK(res.stats.consistent());
    CHECK(res.stats.to_json() == PipelineStats::tally(read_manifest(res.manifest_path)).to_json());
    for (const auto& r : res.records) CHECK(r.terminal());
  }
}

TEST_CASE("pipeline config") {
  PipelineConfig pc;
  pc.voices = {"a"};
  CHECK(PipelineConfig::from_json(pc.to_json()).to_json() == pc.to_json());
  CHECK_THROWS_AS(PipelineConfig::from_json(nlohmann::json{{"bogus", 1}}), ConfigError);
  pc.voices.clear();
  CHECK_THROWS_AS(pc.validate(), ConfigError);
}
