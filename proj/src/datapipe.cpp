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

#include "magi/datapipe.hpp"

#include "magi/tensor_io.hpp"
#include "magi/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace magi::datapipe {

namespace {

using nlohmann::json;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix(mix(mix(seed ^ mix(a)) ^ b) ^ mix(c + 0x632BE59BD9B4E019ULL));
}

std::uint64_t hash_str(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

enum Stage : std::uint64_t { kText = 1, kSpeech, kAsr, kAlign, kGesture };

const std::vector<std::string>& mock_vocabulary() {
  static const std::vector<std::string> words = {
      "the",    "a",      "we",     "you",     "they",    "think",  "know",   "really", "people", "time",
      "world",  "little", "great",  "idea",    "story",   "always", "maybe",  "here",   "there",  "about",
      "city",   "river",  "music",  "morning", "friends", "simple", "change", "every",  "place",  "talk",
      "listen", "learn",  "bright", "quiet",   "road",    "home",   "light",  "water",  "summer", "dream",
      "um",     "uh"};
  return words;
}

}  // namespace

std::string_view status_name(Status s) {
  switch (s) {
    case Status::kPending: return "pending";
    case Status::kOk: return "ok";
    case Status::kDiscardedTooLong: return "discarded_too_long";
    case Status::kDiscardedTokenCap: return "discarded_token_cap";
    case Status::kDiscardedAlignFail: return "discarded_align_fail";
    case Status::kError: return "error";
  }
  return "unknown";
}

Status parse_status(std::string_view name) {
  for (Status s : {Status::kPending, Status::kOk, Status::kDiscardedTooLong, Status::kDiscardedTokenCap,
                   Status::kDiscardedAlignFail, Status::kError}) {
    if (status_name(s) == name) return s;
  }
  throw InvalidInput("unknown record status '" + std::string(name) + "'");
}

void UtteranceRecord::set_status(Status s) {
  if (terminal()) {
    throw PipelineError("record " + id + ": status " + std::string(status_name(status_)) + " is final");
  }
  status_ = s;
}

json UtteranceRecord::to_json() const {
  json j;
  j["id"] = id;
  j["phrase_index"] = phrase_index;
  j["prompt_text"] = prompt_text;
  j["voice"] = voice;
  j["speaker"] = speaker;
  j["audio_path"] = audio_path;
  j["duration_s"] = duration_s;
  j["token_count"] = token_count;
  j["asr_text"] = asr_text;
  json timings = json::array();
  for (const auto& w : word_timings) timings.push_back(json::array({w.word, w.start_s, w.end_s}));
  j["word_timings"] = std::move(timings);
  j["status"] = status_name(status_);
  j["gesture_path"] = gesture_path;
  j["gesture_fps"] = gesture_fps;
  j["error"] = error;
  return j;
}

UtteranceRecord UtteranceRecord::from_json(const json& j) {
  UtteranceRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.phrase_index = j.at("phrase_index").get<int>();
    r.prompt_text = j.at("prompt_text").get<std::string>();
    r.voice = j.at("voice").get<std::string>();
    r.speaker = j.at("speaker").get<int>();
    r.audio_path = j.at("audio_path").get<std::string>();
    r.duration_s = j.at("duration_s").get<double>();
    r.token_count = j.at("token_count").get<int>();
    r.asr_text = j.at("asr_text").get<std::string>();
    for (const auto& t : j.at("word_timings")) {
      r.word_timings.push_back({t.at(0).get<std::string>(), t.at(1).get<double>(), t.at(2).get<double>()});
    }
    r.status_ = parse_status(j.at("status").get<std::string>());
    r.gesture_path = j.at("gesture_path").get<std::string>();
    r.gesture_fps = j.at("gesture_fps").get<double>();
    r.error = j.at("error").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("manifest record: ") + e.what());
  }
  return r;
}

void PipelineBackends::validate() const {
  if (!text || !speech || !recognizer || !aligner || !gestures) {
    throw ConfigError("pipeline: all five backends must be set");
  }
}

// ---- mocks -------------------------------------------------------------------

std::string MockTextGenerator::generate(int index, std::span<const std::string>, std::uint64_t seed) {
  if (auto it = fixed.find(index); it != fixed.end()) return it->second;
  const auto& vocab = mock_vocabulary();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, vocab.size() - 1);
  std::uniform_int_distribution<int> sentence_len(5, 11);
  std::string out;
  int left = sentence_len(rng);
  bool capital = true;
  while (out.size() < target_chars_) {
    std::string w = vocab[pick(rng)];
    if (capital) w[0] = static_cast<char>(w[0] - 'a' + 'A');
    capital = false;
    if (!out.empty()) out += ' ';
    out += w;
    if (--left == 0) {
      out += '.';
      capital = true;
      left = sentence_len(rng);
    } else if (rng() % 9 == 0) {
      out += ',';
    }
  }
  if (!out.empty() && out.back() != '.') out += '.';
  return out;
}

double MockSpeechSynthesizer::voice_f0(std::string_view voice) {
  return 90.0 + static_cast<double>(hash_str(voice) % 161);
}

SpeechOutput MockSpeechSynthesizer::synthesize(std::string_view text, std::string_view voice, std::uint64_t seed) {
  const std::string key(text);
  if (auto it = transient_failures.find(key); it != transient_failures.end()) {
    if (failures_seen_[key]++ < it->second) throw std::runtime_error("mock speech: transient failure");
  }
  if (text.empty()) throw std::runtime_error("mock speech: empty text");
  const double n_chars = static_cast<double>(text.size());
  double seconds = n_chars * seconds_per_char;
  if (auto it = duration_overrides.find(key); it != duration_overrides.end()) seconds = it->second;
  SpeechOutput out;
  out.token_count = static_cast<int>(std::ceil(n_chars * tokens_per_char));
  if (auto it = token_overrides.find(key); it != token_overrides.end()) out.token_count = it->second;
  out.audio.sample_rate = sample_rate;
  const auto total = static_cast<std::size_t>(std::llround(seconds * sample_rate));
  out.audio.samples.assign(total, 0.0);
  const double f0 = voice_f0(voice);
  const double seg = static_cast<double>(total) / n_chars;
  std::mt19937_64 rng(seed);
  double phase = std::uniform_real_distribution<double>(0.0, 2.0 * std::numbers::pi)(rng);
  for (std::size_t n = 0; n < total; ++n) {
    const auto ci = std::min(static_cast<std::size_t>(static_cast<double>(n) / seg), text.size() - 1);
    const auto c = static_cast<unsigned char>(text[ci]);
    const double pos = (static_cast<double>(n) - static_cast<double>(ci) * seg) / seg;
    const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * pos);
    const bool silent = c == ' ' || c == ',' || c == '.';
    const double f = f0 * (1.0 + 0.6 * static_cast<double>((c * 37) % 11) / 11.0);
    phase += 2.0 * std::numbers::pi * f / sample_rate;
    double v = 0.0;
    if (silent) {
      v = 0.01 * std::sin(phase);
    } else {
      const double amp = 0.3 * (0.6 + 0.4 * static_cast<double>((c * 13) % 5) / 5.0);
      for (int h = 1; h <= 4; ++h) v += amp / h * (1.0 + 0.5 * ((c + h) % 3)) / 2.0 * std::sin(h * phase);
      v = 0.01 * std::sin(phase) + env * v;
    }
    out.audio.samples[n] = v;
  }
  return out;
}

std::string MockRecognizer::transcribe(const RecognizerRequest& request) {
  if (!drop_fillers_) return std::string(request.prompt_text);
  static const std::set<std::string> fillers = {"um", "uh", "er", "ah"};
  std::istringstream in{std::string(request.prompt_text)};
  std::string word, out;
  while (in >> word) {
    const auto norm = text::normalize_words(word);
    if (norm.size() == 1 && fillers.count(norm[0])) continue;
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

std::optional<std::vector<WordTiming>> MockAligner::align(std::string_view id, const io::Waveform& audio,
                                                          std::span<const std::string> words, std::uint64_t) {
  if (failing.count(std::string(id)) || words.empty()) return std::nullopt;
  const double d = audio.duration_s();
  const double k = static_cast<double>(words.size());
  std::vector<WordTiming> out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    out.push_back({words[i], static_cast<double>(i) * d / k, static_cast<double>(i + 1) * d / k});
  }
  return out;
}

features::MotionSequence MockGestureGenerator::generate(const io::Waveform& audio,
                                                        std::span<const WordTiming> timings, std::string_view,
                                                        std::uint64_t) {
  features::MotionSequence m;
  m.fps = fps_;
  const auto frames = static_cast<Eigen::Index>(std::llround(audio.duration_s() * fps_));
  m.frames = Mat::Zero(frames, features::kMotionDim);
  if (mode_ == Mode::kZero) return m;
  constexpr double sigma = 3.0;
  for (std::size_t w = 0; w < timings.size(); ++w) {
    const double centre = std::round(timings[w].start_s * fps_);
    const double scale = 0.2 + 0.1 * static_cast<double>(hash_str(timings[w].word) % 5);
    const auto lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(centre - 4 * sigma));
    const auto hi = std::min<Eigen::Index>(frames - 1, static_cast<Eigen::Index>(centre + 4 * sigma));
    for (Eigen::Index f = lo; f <= hi; ++f) {
      const double g = scale * std::exp(-0.5 * std::pow((static_cast<double>(f) - centre) / sigma, 2));
      for (int ch = 0; ch < features::kMotionDim; ++ch) m.frames(f, ch) += g * std::sin(1.0 + ch);
    }
  }
  return m;
}

PipelineBackends mock_backends() {
  return {std::make_shared<MockTextGenerator>(), std::make_shared<MockSpeechSynthesizer>(),
          std::make_shared<MockRecognizer>(), std::make_shared<MockAligner>(),
          std::make_shared<MockGestureGenerator>()};
}

// ---- stages -------------------------------------------------------------------

std::string cap_phrase(std::string_view text, std::size_t max_chars) {
  if (text.size() <= max_chars) return std::string(text);
  std::size_t cut = max_chars;
  while (cut > 0 && text[cut] != ' ') --cut;
  if (cut == 0) {
    cut = max_chars;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
    return std::string(text.substr(0, cut));
  }
  while (cut > 0 && text[cut - 1] == ' ') --cut;
  return std::string(text.substr(0, cut));
}

std::vector<std::string> generate_texts(int n, std::span<const std::string> style_examples, TextGenerator& backend,
                                        std::uint64_t seed, int max_attempts) {
  if (n < 0) throw InvalidInput("generate_texts: n must be >= 0");
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) {
    std::string err;
    bool done = false;
    for (int a = 0; a < max_attempts && !done; ++a) {
      try {
        out.push_back(cap_phrase(backend.generate(i, style_examples, derive(seed, kText, static_cast<std::uint64_t>(i), a))));
        done = true;
      } catch (const std::exception& e) {
        err = e.what();
      }
    }
    if (!done) throw PipelineError("text generation failed for phrase " + std::to_string(i) + ": " + err);
  }
  return out;
}

std::optional<io::Waveform> synthesize_speech(UtteranceRecord& record, SpeechSynthesizer& backend,
                                              std::uint64_t seed, int token_cap, int max_attempts) {
  std::string err;
  for (int a = 0; a < max_attempts; ++a) {
    try {
      SpeechOutput out = backend.synthesize(record.prompt_text, record.voice, mix(seed + static_cast<std::uint64_t>(a)));
      record.token_count = out.token_count;
      record.duration_s = out.audio.duration_s();
      if (out.token_count > token_cap) {
        record.set_status(Status::kDiscardedTokenCap);
        return std::nullopt;
      }
      return std::move(out.audio);
    } catch (const std::exception& e) {
      err = e.what();
    }
  }
  record.error = "speech synthesis: " + err;
  record.set_status(Status::kError);
  return std::nullopt;
}

void filter_duration(UtteranceRecord& record, double max_duration_s) {
  if (!record.terminal() && record.duration_s > max_duration_s) record.set_status(Status::kDiscardedTooLong);
}

void retranscribe(UtteranceRecord& record, const io::Waveform& audio, Recognizer& backend, std::uint64_t seed,
                  int max_attempts) {
  if (record.terminal()) return;
  std::string err;
  for (int a = 0; a < max_attempts; ++a) {
    try {
      record.asr_text = backend.transcribe({&audio, record.prompt_text, mix(seed + static_cast<std::uint64_t>(a))});
      return;
    } catch (const std::exception& e) {
      err = e.what();
    }
  }
  record.error = "recognizer: " + err;
  record.set_status(Status::kError);
}

void force_align(UtteranceRecord& record, const io::Waveform& audio, ForcedAligner& backend, std::uint64_t seed) {
  if (record.terminal()) return;
  const auto words = text::normalize_words(record.asr_text);
  std::optional<std::vector<WordTiming>> timings;
  try {
    timings = backend.align(record.id, audio, words, seed);
  } catch (const std::exception& e) {
    record.error = std::string("aligner: ") + e.what();
  }
  bool valid = timings && timings->size() == words.size();
  if (valid) {
    double prev = 0.0;
    for (const auto& t : *timings) {
      if (t.start_s < prev || t.end_s < t.start_s || t.end_s > record.duration_s + 1e-9) valid = false;
      prev = t.start_s;
    }
  }
  if (!valid) {
    record.set_status(Status::kDiscardedAlignFail);
    return;
  }
  record.word_timings = std::move(*timings);
}

std::optional<features::MotionSequence> generate_gestures(UtteranceRecord& record, const io::Waveform& audio,
                                                          GestureGenerator& backend, std::uint64_t seed,
                                                          int max_attempts) {
  if (record.terminal()) return std::nullopt;
  if (record.word_timings.empty()) throw PipelineError("record " + record.id + ": gestures need word timings");
  std::string err;
  for (int a = 0; a < max_attempts; ++a) {
    try {
      features::MotionSequence m =
          backend.generate(audio, record.word_timings, record.asr_text, mix(seed + static_cast<std::uint64_t>(a)));
      if (m.frames.cols() != features::kMotionDim || !(m.fps > 0.0)) throw std::runtime_error("malformed motion");
      const double expected = audio.duration_s() * m.fps;
      if (std::abs(static_cast<double>(m.frames.rows()) - expected) > 1.0) {
        throw std::runtime_error("motion length does not match the audio");
      }
      record.gesture_fps = m.fps;
      return m;
    } catch (const std::exception& e) {
      err = e.what();
    }
  }
  record.error = "gesture generation: " + err;
  record.set_status(Status::kError);
  return std::nullopt;
}

// ---- config, stats, manifest ----------------------------------------------------

void PipelineConfig::validate() const {
  if (n_phrases < 0) throw ConfigError("pipeline config: n_phrases must be >= 0");
  if (n_phrases > 0 && voices.empty()) throw ConfigError("pipeline config: at least one voice is required");
  if (std::set<std::string>(voices.begin(), voices.end()).size() != voices.size()) {
    throw ConfigError("pipeline config: duplicate voice");
  }
  if (token_cap < 1) throw ConfigError("pipeline config: token_cap must be >= 1");
  if (!(max_duration_s > 0.0)) throw ConfigError("pipeline config: max_duration_s must be positive");
  if (max_attempts < 1) throw ConfigError("pipeline config: max_attempts must be >= 1");
}

json PipelineConfig::to_json() const {
  return {{"out_dir", out_dir.string()},   {"n_phrases", n_phrases},         {"voices", voices},
          {"style_examples", style_examples}, {"seed", seed},               {"token_cap", token_cap},
          {"max_duration_s", max_duration_s}, {"max_attempts", max_attempts}};
}

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base) {
  PipelineConfig c;
  const json defaults = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("pipeline config: unknown key '" + it.key() + "'");
  }
  try {
    c.out_dir = j.value("out_dir", c.out_dir.string());
    c.n_phrases = j.value("n_phrases", c.n_phrases);
    c.voices = j.value("voices", c.voices);
    c.style_examples = j.value("style_examples", c.style_examples);
    c.seed = j.value("seed", c.seed);
    c.token_cap = j.value("token_cap", c.token_cap);
    c.max_duration_s = j.value("max_duration_s", c.max_duration_s);
    c.max_attempts = j.value("max_attempts", c.max_attempts);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("pipeline config: ") + e.what());
  }
  if (c.out_dir.is_relative() && !base.empty()) c.out_dir = base / c.out_dir;
  c.validate();
  return c;
}

json PipelineStats::to_json() const {
  json j;
  j["total_input"] = total_input;
  j["retained"] = ok;
  j["discarded_too_long"] = discarded_too_long;
  j["discarded_token_cap"] = discarded_token_cap;
  j["discarded_align_fail"] = discarded_align_fail;
  j["error"] = error;
  j["retained_hours"] = retained_hours;
  return j;
}

PipelineStats PipelineStats::tally(std::span<const UtteranceRecord> records) {
  PipelineStats s;
  s.total_input = records.size();
  for (const auto& r : records) {
    switch (r.status()) {
      case Status::kOk:
        ++s.ok;
        s.retained_hours += r.duration_s / 3600.0;
        break;
      case Status::kDiscardedTooLong: ++s.discarded_too_long; break;
      case Status::kDiscardedTokenCap: ++s.discarded_token_cap; break;
      case Status::kDiscardedAlignFail: ++s.discarded_align_fail; break;
      case Status::kError:
      case Status::kPending: ++s.error; break;
    }
  }
  return s;
}

void write_manifest(const std::filesystem::path& path, std::span<const UtteranceRecord> records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  for (const auto& r : records) {
    out << r.to_json().dump() << '\n';
  }
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<UtteranceRecord> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      records.push_back(UtteranceRecord::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return records;
}

PipelineResult run_pipeline(const PipelineConfig& config, const PipelineBackends& backends) {
  config.validate();
  backends.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(config.out_dir / "audio", ec);
  if (!ec) fs::create_directories(config.out_dir / "motion", ec);
  if (ec) throw IoError("cannot create " + config.out_dir.string() + ": " + ec.message());

  const auto phrases =
      generate_texts(config.n_phrases, config.style_examples, *backends.text, config.seed, config.max_attempts);
  PipelineResult result;
  for (std::size_t p = 0; p < phrases.size(); ++p) {
    for (std::size_t v = 0; v < config.voices.size(); ++v) {
      UtteranceRecord r;
      char id[64];
      std::snprintf(id, sizeof id, "p%04zu_v%02zu", p, v);
      r.id = id;
      r.phrase_index = static_cast<int>(p);
      r.prompt_text = phrases[p];
      r.voice = config.voices[v];
      r.speaker = static_cast<int>(v);
      try {
        auto audio = synthesize_speech(r, *backends.speech, derive(config.seed, kSpeech, p, v), config.token_cap,
                                       config.max_attempts);
        filter_duration(r, config.max_duration_s);
        if (audio && !r.terminal()) {
          r.audio_path = "audio/" + r.id + ".wav";
          io::write_wav(config.out_dir / r.audio_path, *audio);
          retranscribe(r, *audio, *backends.recognizer, derive(config.seed, kAsr, p, v), config.max_attempts);
          force_align(r, *audio, *backends.aligner, derive(config.seed, kAlign, p, v));
          auto motion = generate_gestures(r, *audio, *backends.gestures, derive(config.seed, kGesture, p, v),
                                          config.max_attempts);
          if (motion) {
            r.gesture_path = "motion/" + r.id + ".mtf";
            io::save_matrix(config.out_dir / r.gesture_path, motion->frames);
            r.set_status(Status::kOk);
          }
        }
      } catch (const std::exception& e) {
        r.error = e.what();
        if (!r.terminal()) r.set_status(Status::kError);
      }
      result.records.push_back(std::move(r));
    }
  }
  result.stats = PipelineStats::tally(result.records);
  result.manifest_path = config.out_dir / "manifest.jsonl";
  write_manifest(result.manifest_path, result.records);
  return result;
}

std::vector<features::FeatureBundle> load_bundles(const std::filesystem::path& manifest_path,
                                                  const features::MelConfig& mel_config) {
  const auto base = manifest_path.parent_path();
  std::vector<features::FeatureBundle> out;
  for (const auto& r : read_manifest(manifest_path)) {
    if (r.status() != Status::kOk) continue;
    const io::Waveform audio = io::read_wav(base / r.audio_path);
    features::MotionSequence motion;
    motion.frames = io::load_matrix(base / r.gesture_path);
    motion.fps = r.gesture_fps;
    out.push_back(features::extract_bundle(audio, motion, text::tokenize(r.asr_text), r.speaker, mel_config));
  }
  return out;
}

}  // namespace magi::datapipe
