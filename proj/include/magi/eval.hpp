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

// Objective evaluation: word error rate, listening-test response encoding,
// confidence intervals, Welch t-tests and mismatched-stimulus construction.
#pragma once

#include "magi/features.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace magi::eval {

/// Levenshtein distance over words (unit costs).
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

/// Word error rate after word normalization. Empty reference: InvalidInput.
double wer(std::string_view reference, std::string_view hypothesis);
double wer_words(std::span<const std::string> reference, std::span<const std::string> hypothesis);

enum class ScaleKind { kMos, kAppropriateness };
enum class Side { kLeft, kRight };

std::string_view scale_name(ScaleKind k);
ScaleKind parse_scale(std::string_view name);
Side parse_side(std::string_view name);

struct ResponseSet {
  std::string condition;
  ScaleKind scale = ScaleKind::kMos;
  std::vector<std::string> participants;
  std::vector<double> values;

  /// InvalidInput if a value lies outside the scale.
  void validate() const;
};

/// MOS labels are the digits 1..5. Appropriateness labels are the five
/// left/right options, resolved against the side holding the matched motion:
/// +2/+1 favour the matched stimulus, -1/-2 the mismatched one.
int encode_label(std::string_view label, ScaleKind scale, std::optional<Side> matched_side = std::nullopt);

ResponseSet encode_responses(std::string condition, std::span<const std::string> labels, ScaleKind scale,
                             std::span<const Side> matched_sides = {});

struct Summary {
  std::size_t n = 0;
  double mean = 0.0;
  double half_width = 0.0;  // 95% t interval

  /// "mean±half_width", e.g. "4.30±0.06".
  std::string format(int decimals = 2) const;
};

Summary summarize(std::span<const double> values);
Summary summarize(const ResponseSet& set);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);
/// Student t cumulative distribution.
double t_cdf(double t, double df);
/// Inverse of t_cdf for p in (0, 1).
double t_quantile(double p, double df);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool significant = false;  // p < 0.05
};

/// Welch two-sample t-test, two-sided.
TTestResult pairwise_ttest(std::span<const double> a, std::span<const double> b);
TTestResult pairwise_ttest(const ResponseSet& a, const ResponseSet& b);

struct StimulusPair {
  std::string audio_ref;
  features::MotionSequence matched;
  features::MotionSequence mismatched;
  Side matched_side = Side::kLeft;
};

/// Time-rescales the donor motion (cubic interpolation) to the audio duration
/// and draws the matched side from a seeded fair coin. The matched motion is
/// brought to the same frame count.
StimulusPair make_mismatch_pair(double audio_dur_s, const features::MotionSequence& matched,
                                const features::MotionSequence& donor, std::uint64_t seed,
                                std::string audio_ref = {});

/// One row of a tab-separated response file with header
/// participant, screen, condition, label[, matched_side][, attention_passed].
struct ResponseRow {
  std::string participant;
  std::string screen;
  std::string condition;
  std::string label;
  std::optional<Side> matched_side;
  bool attention_passed = true;
};

std::vector<ResponseRow> read_responses(const std::filesystem::path& path);
/// Groups rows that passed the attention check by condition, in order of
/// first appearance.
std::vector<ResponseSet> group_responses(std::span<const ResponseRow> rows, ScaleKind scale);

/// Aligned plain-text table: condition, n, mean±hw and, when `reference` names
/// a condition, the Welch p-value against it.
std::string report_table(std::span<const ResponseSet> sets, std::optional<std::string> reference = std::nullopt);

}  // namespace magi::eval
