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

#include "magi/eval.hpp"
#include "magi/text.hpp"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#ifdef MAGI_HAVE_BOOST_MATH
#include <boost/math/distributions/students_t.hpp>
#endif

using namespace magi;
using namespace magi::eval;

namespace {


features::MotionSequence ramp(Eigen::Index frames, double fps) {
  features::MotionSequence m;
  m.fps = fps;
  m.frames.resize(frames, features::kMotionDim);
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (int c = 0; c < features::kMotionDim; ++c) m.frames(f, c) = std::sin(0.05 * f * (c + 1));
  }
  return m;
}

}  // namespace

TEST_CASE("word error rate examples") {
  CHECK(wer("the cat sat", "the cat sat") == 0.0);
  CHECK(wer("a b c", "a x c d") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(wer("Hello, World!", "hello world") == 0.0);
  CHECK(wer("a b", "") == 1.0);
  CHECK_THROWS_AS(wer("", "a"), InvalidInput);
  CHECK_THROWS_AS(wer("!!!", "a"), InvalidInput);
}

TEST_CASE("edit distance matches the brute-force oracle") {
  std::mt19937_64 rng(5);
  const std::vector<std::string> alphabet = {"a", "b", "c", "d"};
  std::uniform_int_distribution<int> len(0, 6), sym(0, 3);
  for (int i = 0; i < 300; ++i) {
    std::vector<std::string> a(len(rng)), b(len(rng));
    for (auto& w : a) w = alphabet[sym(rng)];
    for (auto& w : b) w = alphabet[sym(rng)];
    REQUIRE(edit_distance(a, b) == oracles::brute_force_edit_distance(a, b));
  }
}

TEST_CASE("word error rate properties") {
  std::mt19937_64 rng(6);
  const std::vector<std::string> alphabet = {"x", "y", "z"};
  std::uniform_int_distribution<int> len(1, 8), sym(0, 2), k(0, 4);
  for (int i = 0; i < 500; ++i) {
    std::vector<std::string> a(len(rng)), b(len(rng));
    for (auto& w : a) w = alphabet[sym(rng)];
    for (auto& w : b) w = alphabet[sym(rng)];
    CHECK(wer_words(a, b) * a.size() == doctest::Approx(wer_words(b, a) * b.size()).epsilon(1e-12));
    CHECK(wer_words(a, std::vector<std::string>{}) <= 1.0);
    auto longer = a;
    const int extra = k(rng);
    for (int j = 0; j < extra; ++j) longer.push_back(alphabet[sym(rng)]);
    CHECK(wer_words(a, longer) == doctest::Approx(static_cast<double>(extra) / a.size()).epsilon(1e-12));
  }
}

TEST_CASE("label encoding") {
  const auto A = ScaleKind::kAppropriateness;
  CHECK(encode_label("Both are equal", A, Side::kLeft) == 0);
  CHECK(encode_label("Right is much better", A, Side::kRight) == 2);
  CHECK(encode_label("Left is much better", A, Side::kRight) == -2);
  CHECK(encode_label("Left is much better", A, Side::kLeft) == 2);
  CHECK(encode_label("Left is slightly better", A, Side::kLeft) == 1);
  CHECK(encode_label("Right is slightly better", A, Side::kLeft) == -1);
  CHECK_THROWS_AS(encode_label("Left is much better", A), InvalidInput);
  CHECK_THROWS_AS(encode_label("Up is better", A, Side::kLeft), InvalidInput);
  for (int k = 1; k <= 5; ++k) CHECK(encode_label(std::to_string(k), ScaleKind::kMos) == k);
  CHECK_THROWS_AS(encode_label("6", ScaleKind::kMos), InvalidInput);
  CHECK_THROWS_AS(encode_label("0", ScaleKind::kMos), InvalidInput);
  CHECK(parse_scale(scale_name(A)) == A);
  CHECK(parse_side("right") == Side::kRight);
}

TEST_CASE("confidence interval") {
  const auto s = summarize(std::vector<double>{1.0, 5.0});
  CHECK(s.n == 2);
  CHECK(s.mean == 3.0);
  // t_{0.975,1} = tan(0.475 pi); s / sqrt(n) = 2.
  CHECK(s.half_width == doctest::Approx(2.0 * std::tan(0.475 * std::numbers::pi)).epsilon(1e-10));
  CHECK(s.half_width == doctest::Approx(25.4124).epsilon(1e-5));
  CHECK(summarize(std::vector<double>{4.0, 4.0, 4.0}).half_width == 0.0);
  CHECK_THROWS_AS(summarize(std::vector<double>{1.0}), InvalidInput);
  CHECK(Summary{10, 4.3, 0.06}.format() == "4.30\xC2\xB1" "0.06");
  CHECK(Summary{10, -0.125, 0.031}.format() == "-0.12\xC2\xB1" "0.03");
}

TEST_CASE("t quantiles match tabulated critical values") {
  const std::pair<double, double> table[] = {{1, 12.7062}, {2, 4.3027},  {3, 3.1824},  {4, 2.7764},
                                             {5, 2.5706},  {10, 2.2281}, {30, 2.0423}, {100, 1.9840}};
  for (auto [df, crit] : table) {
    CHECK(t_quantile(0.975, df) == doctest::Approx(crit).epsilon(1e-4));
    CHECK(t_cdf(crit, df) == doctest::Approx(0.975).epsilon(1e-4));
  }
  CHECK(t_cdf(0.0, 7.0) == 0.5);
  CHECK(t_cdf(-2.0, 7.0) == doctest::Approx(1.0 - t_cdf(2.0, 7.0)).epsilon(1e-14));
  CHECK(t_quantile(0.5, 4.0) == doctest::Approx(0.0).epsilon(1e-12));
  // Cauchy closed form.
  CHECK(t_cdf(1.0, 1.0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
  // I_x(1, b) = 1 - (1 - x)^b.
  CHECK(incomplete_beta(1.0, 4.0, 0.3) == doctest::Approx(1.0 - std::pow(0.7, 4)).epsilon(1e-12));
}

#ifdef MAGI_HAVE_BOOST_MATH
TEST_CASE("t distribution agrees with Boost.Math") {
  for (double df : {1.0, 2.5, 3.0, 7.0, 19.3, 60.0, 500.0}) {
    const boost::math::students_t dist(df);
    for (double t : {-8.0, -2.5, -0.3, 0.1, 1.0, 3.7, 12.0}) {
      CHECK(t_cdf(t, df) == doctest::Approx(boost::math::cdf(dist, t)).epsilon(1e-10));
    }
    for (double p : {0.01, 0.2, 0.6, 0.975, 0.999}) {
      CHECK(t_quantile(p, df) == doctest::Approx(boost::math::quantile(dist, p)).epsilon(1e-8));
    }
  }
}
#endif

TEST_CASE("Welch t-test") {
  const std::vector<double> a = {3.0, 4.0, 5.0, 4.0}, b = {3.0, 4.0, 5.0, 4.0};
  auto r = pairwise_ttest(a, b);
  CHECK(r.t == 0.0);
  CHECK(r.p == 1.0);
  CHECK_FALSE(r.significant);

  const std::vector<double> zero = {0.0, 1e-3, -1e-3, 0.0}, one = {1.0, 1.001, 0.999, 1.0};
  r = pairwise_ttest(zero, one);
  CHECK(r.p < 0.001);
  CHECK(r.significant);
  CHECK(r.t < 0.0);
  // Direct oracle: two-sided tail at the Welch statistic.
  CHECK(r.p == doctest::Approx(2.0 * t_cdf(-std::abs(r.t), r.df)).epsilon(1e-12));

  const std::vector<double> c = {4.1, 3.2, 5.0, 4.4, 3.9}, d = {2.0, 3.5, 2.9, 3.1};
  const auto cd = pairwise_ttest(c, d), dc = pairwise_ttest(d, c);
  CHECK(cd.t == -dc.t);
  CHECK(cd.p == dc.p);
  CHECK(cd.df == dc.df);

  const std::vector<double> flat0(3, 2.0), flat1(3, 2.0), flat2(3, 3.0);
  r = pairwise_ttest(flat0, flat1);
  CHECK(r.t == 0.0);
  CHECK(r.p == 1.0);
  r = pairwise_ttest(flat0, flat2);
  CHECK(r.p == 0.0);
  CHECK(std::isinf(r.t));
  CHECK_THROWS_AS(pairwise_ttest(std::vector<double>{1.0}, c), InvalidInput);
}

TEST_CASE("half-width shrinks as one over root n") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(3.0, 1.0);
  std::vector<double> lx, ly;
  for (int size : {16, 64, 256, 1024, 4096}) {
    double acc = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> v(static_cast<std::size_t>(size));
      for (auto& x : v) x = n(rng);
      acc += summarize(v).half_width;
    }
    lx.push_back(std::log(size));
    ly.push_back(std::log(acc / 20));
  }
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  CHECK(std::abs(sxy / sxx + 0.5) < 0.1);
}

TEST_CASE("mismatched stimulus pairs") {
  const double fps = 30.0;
  const auto matched = ramp(90, fps);
  const auto same = ramp(90, fps);
  const auto p = make_mismatch_pair(3.0, matched, same, 1);
  CHECK(p.mismatched.frames.rows() == 90);
  CHECK((p.mismatched.frames - same.frames).cwiseAbs().maxCoeff() < 1e-9);

  const auto long_donor = ramp(180, fps);
  const auto q = make_mismatch_pair(3.0, matched, long_donor, 2);
  CHECK(q.mismatched.frames.rows() == 90);
  CHECK(q.mismatched.fps == fps);

  CHECK_THROWS_AS(make_mismatch_pair(3.0, matched, ramp(3, fps), 3), InvalidInput);

  int left = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    if (make_mismatch_pair(3.0, matched, same, seed).matched_side == Side::kLeft) ++left;
  }
  CHECK(left >= 450);
  CHECK(left <= 550);
  CHECK(make_mismatch_pair(3.0, matched, same, 17).matched_side ==
        make_mismatch_pair(3.0, matched, same, 17).matched_side);
}

TEST_CASE("responses file to report table") {
  const auto dir = std::filesystem::temp_directory_path() / "magi_test_eval";
  std::filesystem::create_directories(dir);
  const auto path = dir / "responses.tsv";
  {
    std::ofstream out(path);
    out << "participant\tscreen\tcondition\tlabel\tmatched_side\tattention_passed\n";
    out << "p1\t1\tGT\tLeft is much better\tleft\ttrue\n";
    out << "p2\t1\tGT\tRight is slightly better\tright\ttrue\n";
    out << "p3\t1\tGT\tBoth are equal\tleft\ttrue\n";
    out << "p1\t2\tFT\tLeft is slightly better\tleft\ttrue\n";
    out << "p2\t2\tFT\tLeft is slightly better\tright\ttrue\n";
    out << "p3\t2\tFT\tBoth are equal\tright\ttrue\n";
    out << "p4\t2\tFT\tLeft is much better\tleft\tfalse\n";
  }
  const auto rows = read_responses(path);
  CHECK(rows.size() == 7);
  const auto sets = group_responses(rows, ScaleKind::kAppropriateness);
  REQUIRE(sets.size() == 2);
  const auto& gt = sets[0].condition == "GT" ? sets[0] : sets[1];
  const auto& ft = sets[0].condition == "GT" ? sets[1] : sets[0];
  CHECK(gt.values == std::vector<double>{2.0, 1.0, 0.0});
  CHECK(ft.values == std::vector<double>{1.0, -1.0, 0.0});

  const std::string table = report_table(sets, std::string("GT"));
  CHECK(table.find("GT") != std::string::npos);
  CHECK(table.find("1.00\xC2\xB1") != std::string::npos);
  CHECK(table.find("p vs GT") != std::string::npos);
  CHECK_THROWS_AS(report_table(sets, std::string("nope")), InvalidInput);

  std::ofstream(dir / "bad.tsv") << "participant\tcondition\n";
  CHECK_THROWS(read_responses(dir / "bad.tsv"));
  CHECK_THROWS_AS(read_responses(dir / "missing.tsv"), IoError);
}
