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

// Synthetic multimodal corpus pipeline:
//
//   text generator -> speech synthesizer -> token cap -> duration cap
//     -> recognizer (asr_text replaces the prompt) -> forced aligner
//     -> gesture generator
//
// Every backend sits behind a single-call interface with an explicit seed.
// The mocks below are deterministic and need no network or models.
#pragma once

#include "magi/features.hpp"
#include "magi/wav.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace magi::datapipe {

inline constexpr int kTokenCap = 400;
inline constexpr double kMaxDurationS = 25.0;
inline constexpr std::size_t kMaxPhraseChars = 300;
inline constexpr int kMaxAttempts = 3;

enum class Status { kPending, kOk, kDiscardedTooLong, kDiscardedTokenCap, kDiscardedAlignFail, kError };

std::string_view status_name(Status s);
Status parse_status(std::string_view name);

struct WordTiming {
  std::string word;
  double start_s = 0.0;
  double end_s = 0.0;
};

struct UtteranceRecord {
  std::string id;
  int phrase_index = 0;
  std::string prompt_text;
  std::string voice;
  int speaker = 0;
  std::string audio_path;  // relative to the pipeline output directory
  double duration_s = 0.0;
  int token_count = 0;
  std::string asr_text;
  std::vector<WordTiming> word_timings;
  std::string gesture_path;  // relative, MTF/1 T x 45
  double gesture_fps = 0.0;
  std::string error;

  Status status() const { return status_; }
  bool terminal() const { return status_ != Status::kPending; }
  /// Pending records may move to any status; terminal ones never change
  /// (PipelineError).
  void set_status(Status s);

  nlohmann::json to_json() const;
  static UtteranceRecord from_json(const nlohmann::json& j);

 private:
  Status status_ = Status::kPending;
};

// ---- backend interfaces ----------------------------------------------------

class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string generate(int index, std::span<const std::string> style_examples, std::uint64_t seed) = 0;
};

struct SpeechOutput {
  io::Waveform audio;
  int token_count = 0;
};

class SpeechSynthesizer {
 public:
  virtual ~SpeechSynthesizer() = default;
  virtual SpeechOutput synthesize(std::string_view text, std::string_view voice, std::uint64_t seed) = 0;
};

struct RecognizerRequest {
  const io::Waveform* audio = nullptr;
  std::string_view prompt_text;  // visible to reference/mock recognizers only
  std::uint64_t seed = 0;
};

class Recognizer {
 public:
  virtual ~Recognizer() = default;
  virtual std::string transcribe(const RecognizerRequest& request) = 0;
};

class ForcedAligner {
 public:
  virtual ~ForcedAligner() = default;
  /// One timing per word, or nullopt when alignment fails.
  virtual std::optional<std::vector<WordTiming>> align(std::string_view id, const io::Waveform& audio,
                                                       std::span<const std::string> words, std::uint64_t seed) = 0;
};

class GestureGenerator {
 public:
  virtual ~GestureGenerator() = default;
  virtual features::MotionSequence generate(const io::Waveform& audio, std::span<const WordTiming> timings,
                                            std::string_view text, std::uint64_t seed) = 0;
};

struct PipelineBackends {
  std::shared_ptr<TextGenerator> text;
  std::shared_ptr<SpeechSynthesizer> speech;
  std::shared_ptr<Recognizer> recognizer;
  std::shared_ptr<ForcedAligner> aligner;
  std::shared_ptr<GestureGenerator> gestures;

  /// Throws ConfigError if any backend is missing.
  void validate() const;
};

// ---- mocks -------------------------------------------------------------------

/// Pseudo-random phrases of roughly `target_chars` characters from a fixed
/// vocabulary. `fixed` pins the phrase for given indices.
class MockTextGenerator : public TextGenerator {
 public:
  explicit MockTextGenerator(std::size_t target_chars = 250) : target_chars_(target_chars) {}
  std::map<int, std::string> fixed;
  std::string generate(int index, std::span<const std::string> style_examples, std::uint64_t seed) override;

 private:
  std::size_t target_chars_;
};

/// Renders each character as a short harmonic tone whose pitch depends on the
/// character and the voice, over a quiet carrier; the seed sets the phase. Duration is chars * seconds_per_char; the token
/// count is chars * tokens_per_char unless overridden per text.
class MockSpeechSynthesizer : public SpeechSynthesizer {
 public:
  double seconds_per_char = 0.08;
  double tokens_per_char = 1.0;
  int sample_rate = 22050;
  std::map<std::string, double> duration_overrides;
  std::map<std::string, int> token_overrides;
  /// Texts whose synthesis throws on the first `n` calls.
  std::map<std::string, int> transient_failures;

  SpeechOutput synthesize(std::string_view text, std::string_view voice, std::uint64_t seed) override;
  /// Base f0 of a voice, 90..250 Hz.
  static double voice_f0(std::string_view voice);

 private:
  std::map<std::string, int> failures_seen_;
};

/// Returns the prompt text, optionally without filler words (um, uh, er, ah).
class MockRecognizer : public Recognizer {
 public:
  explicit MockRecognizer(bool drop_fillers = false) : drop_fillers_(drop_fillers) {}
  std::string transcribe(const RecognizerRequest& request) override;

 private:
  bool drop_fillers_;
};

/// Word i of k spans [iD/k, (i+1)D/k]. Ids in `failing` fail to align.
class MockAligner : public ForcedAligner {
 public:
  std::set<std::string> failing;
  std::optional<std::vector<WordTiming>> align(std::string_view id, const io::Waveform& audio,
                                               std::span<const std::string> words, std::uint64_t seed) override;
};

/// Zero pose, or a Gaussian pose pulse (sigma 3 frames) centred on each word
/// onset. round(duration * fps) frames.
class MockGestureGenerator : public GestureGenerator {
 public:
  enum class Mode { kZero, kOnsetPulses };
  explicit MockGestureGenerator(Mode mode = Mode::kOnsetPulses, double fps = 120.0) : mode_(mode), fps_(fps) {}
  features::MotionSequence generate(const io::Waveform& audio, std::span<const WordTiming> timings,
                                    std::string_view text, std::uint64_t seed) override;

 private:
  Mode mode_;
  double fps_;
};

PipelineBackends mock_backends();

// ---- stages -------------------------------------------------------------------

/// Cuts at the last word boundary at or before `max_chars` (hard cut if the
/// first word alone is longer).
std::string cap_phrase(std::string_view text, std::size_t max_chars = kMaxPhraseChars);

std::vector<std::string> generate_texts(int n, std::span<const std::string> style_examples, TextGenerator& backend,
                                        std::uint64_t seed, int max_attempts = kMaxAttempts);

/// Synthesizes audio for a pending record; returns the waveform on success.
/// Sets discarded_token_cap above `token_cap`, error after exhausted retries.
std::optional<io::Waveform> synthesize_speech(UtteranceRecord& record, SpeechSynthesizer& backend,
                                              std::uint64_t seed, int token_cap = kTokenCap,
                                              int max_attempts = kMaxAttempts);
void filter_duration(UtteranceRecord& record, double max_duration_s = kMaxDurationS);
void retranscribe(UtteranceRecord& record, const io::Waveform& audio, Recognizer& backend, std::uint64_t seed,
                  int max_attempts = kMaxAttempts);
void force_align(UtteranceRecord& record, const io::Waveform& audio, ForcedAligner& backend, std::uint64_t seed);
/// Requires word timings (PipelineError otherwise).
std::optional<features::MotionSequence> generate_gestures(UtteranceRecord& record, const io::Waveform& audio,
                                                          GestureGenerator& backend, std::uint64_t seed,
                                                          int max_attempts = kMaxAttempts);

struct PipelineConfig {
  std::filesystem::path out_dir = "corpus";
  int n_phrases = 600;
  std::vector<std::string> voices;
  std::vector<std::string> style_examples;
  std::uint64_t seed = 0;
  int token_cap = kTokenCap;
  double max_duration_s = kMaxDurationS;
  int max_attempts = kMaxAttempts;

  void validate() const;
  /// `base` resolves a relative out_dir.
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

struct PipelineStats {
  std::size_t total_input = 0;
  std::size_t ok = 0;
  std::size_t discarded_too_long = 0;
  std::size_t discarded_token_cap = 0;
  std::size_t discarded_align_fail = 0;
  std::size_t error = 0;
  double retained_hours = 0.0;

  std::size_t retained() const { return ok; }
  bool consistent() const {
    return ok + discarded_too_long + discarded_token_cap + discarded_align_fail + error == total_input;
  }
  nlohmann::json to_json() const;
  static PipelineStats tally(std::span<const UtteranceRecord> records);
};

struct PipelineResult {
  std::vector<UtteranceRecord> records;
  PipelineStats stats;
  std::filesystem::path manifest_path;
};

/// Runs every (phrase, voice) pair through all stages. Writes audio/, motion/
/// and manifest.jsonl under config.out_dir.
PipelineResult run_pipeline(const PipelineConfig& config, const PipelineBackends& backends);

void write_manifest(const std::filesystem::path& path, std::span<const UtteranceRecord> records);
std::vector<UtteranceRecord> read_manifest(const std::filesystem::path& path);

/// Feature bundles for every ok record of a manifest. Tokens come from
/// asr_text; motion is resampled onto the mel grid.
std::vector<features::FeatureBundle> load_bundles(const std::filesystem::path& manifest_path,
                                                  const features::MelConfig& mel_config = {});

}  // namespace magi::datapipe
