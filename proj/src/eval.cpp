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

#include "magi/eval.hpp"

#include "magi/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace magi::eval {

namespace {

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double sample_variance(std::span<const double> v, double mean) {
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(v.size() - 1);
}

// Continued fraction for I_x(a, b), modified Lentz.
double beta_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < eps) return h;
  }
  throw NumericalFailure("incomplete_beta", -1, "continued fraction did not converge");
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

}  // namespace

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer_words(std::span<const std::string> reference, std::span<const std::string> hypothesis) {
  if (reference.empty()) throw InvalidInput("wer: empty reference");
  return static_cast<double>(edit_distance(reference, hypothesis)) / static_cast<double>(reference.size());
}

double wer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = text::normalize_words(reference);
  const auto hyp = text::normalize_words(hypothesis);
  return wer_words(ref, hyp);
}

std::string_view scale_name(ScaleKind k) { return k == ScaleKind::kMos ? "mos_1_5" : "appropriateness_m2_2"; }

ScaleKind parse_scale(std::string_view name) {
  if (name == "mos_1_5" || name == "mos") return ScaleKind::kMos;
  if (name == "appropriateness_m2_2" || name == "appropriateness") return ScaleKind::kAppropriateness;
  throw InvalidInput("unknown scale '" + std::string(name) + "'");
}

Side parse_side(std::string_view name) {
  if (name == "left" || name == "Left") return Side::kLeft;
  if (name == "right" || name == "Right") return Side::kRight;
  throw InvalidInput("unknown side '" + std::string(name) + "'");
}

void ResponseSet::validate() const {
  for (double v : values) {
    const bool ok = scale == ScaleKind::kMos ? (v >= 1 && v <= 5 && v == std::round(v))
                                             : (v >= -2 && v <= 2 && v == std::round(v));
    if (!ok) throw InvalidInput("response " + std::to_string(v) + " outside the " + std::string(scale_name(scale)) + " scale");
  }
}

int encode_label(std::string_view label, ScaleKind scale, std::optional<Side> matched_side) {
  if (scale == ScaleKind::kMos) {
    if (label.size() == 1 && label[0] >= '1' && label[0] <= '5') return label[0] - '0';
    throw InvalidInput("unknown MOS label '" + std::string(label) + "'");
  }
  static const std::map<std::string, int, std::less<>> left_positive = {
      {"Left is much better", 2},     {"Left is slightly better", 1}, {"Both are equal", 0},
      {"Right is slightly better", -1}, {"Right is much better", -2}};
  const auto it = left_positive.find(label);
  if (it == left_positive.end()) throw InvalidInput("unknown appropriateness label '" + std::string(label) + "'");
  if (it->second == 0) return 0;
  if (!matched_side) throw InvalidInput("appropriateness label needs the matched side");
  return *matched_side == Side::kLeft ? it->second : -it->second;
}

ResponseSet encode_responses(std::string condition, std::span<const std::string> labels, ScaleKind scale,
                             std::span<const Side> matched_sides) {
  if (scale == ScaleKind::kAppropriateness && matched_sides.size() != labels.size()) {
    throw InvalidInput("encode_responses: one matched side per label required");
  }
  ResponseSet set;
  set.condition = std::move(condition);
  set.scale = scale;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::optional<Side> side;
    if (i < matched_sides.size()) side = matched_sides[i];
    set.values.push_back(encode_label(labels[i], scale, side));
  }
  return set;
}

std::string Summary::format(int decimals) const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, mean, decimals, half_width);
  return buf;
}

Summary summarize(std::span<const double> values) {
  if (values.size() < 2) throw InvalidInput("summarize: need at least 2 responses");
  Summary s;
  s.n = values.size();
  s.mean = mean_of(values);
  const double sd = std::sqrt(sample_variance(values, s.mean));
  const double n = static_cast<double>(s.n);
  s.half_width = sd == 0.0 ? 0.0 : t_quantile(0.975, n - 1.0) * sd / std::sqrt(n);
  return s;
}

Summary summarize(const ResponseSet& set) {
  set.validate();
  return summarize(set.values);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidInput("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw InvalidInput("incomplete_beta: x must lie in [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(a, b, x) / a;
  return 1.0 - front * beta_fraction(b, a, 1.0 - x) / b;
}

double t_cdf(double t, double df) {
  if (!(df > 0.0)) throw InvalidInput("t_cdf: df must be positive");
  if (std::isnan(t)) throw InvalidInput("t_cdf: t is NaN");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double t2 = t * t;
  if (t2 < df) {
    const double centre = 0.5 * incomplete_beta(0.5, 0.5 * df, t2 / (df + t2));
    return t > 0 ? 0.5 + centre : 0.5 - centre;
  }
  const double tail = 0.5 * incomplete_beta(0.5 * df, 0.5, df / (df + t2));
  return t > 0 ? 1.0 - tail : tail;
}

double t_quantile(double p, double df) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("t_quantile: p must lie in (0, 1)");
  if (!(df > 0.0)) throw InvalidInput("t_quantile: df must be positive");
  if (df == 1.0) return std::tan(std::numbers::pi * (p - 0.5));
  if (df == 2.0) {
    const double a = 4.0 * p * (1.0 - p);
    return (2.0 * p - 1.0) * std::sqrt(2.0 / a);
  }
  if (p < 0.5) return -t_quantile(1.0 - p, df);
  double lo = 0.0, hi = 1.0;
  while (t_cdf(hi, df) < p) hi *= 2.0;
  double x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = t_cdf(x, df) - p;
    if (f == 0.0) return x;
    if (f < 0) lo = x; else hi = x;
    const double density = std::exp(std::lgamma(0.5 * (df + 1)) - std::lgamma(0.5 * df) -
                                    0.5 * std::log(df * std::numbers::pi) -
                                    0.5 * (df + 1) * std::log1p(x * x / df));
    double next = x - f / density;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-15 * std::max(1.0, std::abs(x))) return next;
    x = next;
  }
  return x;
}

TTestResult pairwise_ttest(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidInput("pairwise_ttest: each sample needs n >= 2");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean_of(a), mb = mean_of(b);
  const double va = sample_variance(a, ma) / na, vb = sample_variance(b, mb) / nb;
  TTestResult r;
  const double se2 = va + vb;
  if (se2 == 0.0) {
    r.df = na + nb - 2.0;
    if (ma == mb) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = ma > mb ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
  } else {
    r.t = (ma - mb) / std::sqrt(se2);
    r.df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    r.p = std::min(1.0, incomplete_beta(0.5 * r.df, 0.5, r.df / (r.df + r.t * r.t)));
  }
  r.significant = r.p < 0.05;
  return r;
}

TTestResult pairwise_ttest(const ResponseSet& a, const ResponseSet& b) {
  a.validate();
  b.validate();
  return pairwise_ttest(a.values, b.values);
}

StimulusPair make_mismatch_pair(double audio_dur_s, const features::MotionSequence& matched,
                                const features::MotionSequence& donor, std::uint64_t seed, std::string audio_ref) {
  if (!(audio_dur_s > 0.0)) throw InvalidInput("make_mismatch_pair: audio duration must be positive");
  if (donor.frames.rows() < 4) throw InvalidInput("make_mismatch_pair: donor needs at least 4 frames");
  if (!(donor.fps > 0.0) || !(matched.fps > 0.0)) throw InvalidInput("make_mismatch_pair: fps must be positive");
  const auto n = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(audio_dur_s * donor.fps)));
  // Play the donor at the speed that stretches it onto the audio.
  features::MotionSequence stretched = donor;
  if (donor.duration_s() != audio_dur_s) stretched.fps = static_cast<double>(donor.frames.rows()) / audio_dur_s;
  StimulusPair pair;
  pair.audio_ref = std::move(audio_ref);
  pair.mismatched = features::resample_motion_to(stretched, donor.fps, n);
  const auto nm = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(audio_dur_s * matched.fps)));
  pair.matched = matched.frames.rows() == nm ? matched : features::resample_motion_to(matched, matched.fps, nm);
  std::mt19937_64 rng(seed);
  pair.matched_side = std::bernoulli_distribution(0.5)(rng) ? Side::kLeft : Side::kRight;
  return pair;
}

std::vector<ResponseRow> read_responses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open responses " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InvalidInput(path.string() + ": missing header");
  const auto header = split_tabs(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col[header[i]] = i;
  for (const char* required : {"participant", "screen", "condition", "label"}) {
    if (!col.count(required)) throw InvalidInput(path.string() + ": header lacks '" + required + "'");
  }
  std::vector<ResponseRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != header.size()) {
      throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": expected " +
                         std::to_string(header.size()) + " fields");
    }
    ResponseRow r;
    r.participant = cells[col["participant"]];
    r.screen = cells[col["screen"]];
    r.condition = cells[col["condition"]];
    r.label = cells[col["label"]];
    if (col.count("matched_side") && !cells[col["matched_side"]].empty()) {
      r.matched_side = parse_side(cells[col["matched_side"]]);
    }
    if (col.count("attention_passed")) {
      const std::string& v = cells[col["attention_passed"]];
      if (v == "0" || v == "false") r.attention_passed = false;
      else if (v == "1" || v == "true" || v.empty()) r.attention_passed = true;
      else throw InvalidInput(path.string() + ":" + std::to_string(lineno) + ": bad attention_passed '" + v + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ResponseSet> group_responses(std::span<const ResponseRow> rows, ScaleKind scale) {
  std::vector<ResponseSet> sets;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    if (!r.attention_passed) continue;
    auto [it, inserted] = index.emplace(r.condition, sets.size());
    if (inserted) {
      sets.emplace_back();
      sets.back().condition = r.condition;
      sets.back().scale = scale;
    }
    ResponseSet& s = sets[it->second];
    s.participants.push_back(r.participant);
    s.values.push_back(encode_label(r.label, scale, r.matched_side));
  }
  return sets;
}

std::string report_table(std::span<const ResponseSet> sets, std::optional<std::string> reference) {
  const ResponseSet* ref = nullptr;
  if (reference) {
    for (const auto& s : sets) {
      if (s.condition == *reference) ref = &s;
    }
    if (!ref) throw InvalidInput("report: unknown reference condition '" + *reference + "'");
  }
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Condition", "N", "Mean±CI"});
  if (ref) rows.back().push_back("p vs " + ref->condition);
  for (const auto& s : sets) {
    std::vector<std::string> row = {s.condition, std::to_string(s.values.size()), summarize(s).format()};
    if (ref) {
      if (&s == ref) {
        row.push_back("-");
      } else {
        char buf[32];
        const auto t = pairwise_ttest(s, *ref);
        std::snprintf(buf, sizeof buf, "%.4f%s", t.p, t.significant ? " *" : "");
        row.push_back(buf);
      }
    }
    rows.push_back(std::move(row));
  }
  // Display width: count UTF-8 lead bytes only.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> w(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) w[c] = std::max(w[c], width(row[c]));
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) out += "  ";
      out += rows[r][c];
      if (c + 1 < rows[r].size()) out.append(w[c] - width(rows[r][c]), ' ');
    }
    out += '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < w.size(); ++c) total += w[c] + (c ? 2 : 0);
      out.append(total, '-');
      out += '\n';
    }
  }
  return out;
}

}  // namespace magi::eval
