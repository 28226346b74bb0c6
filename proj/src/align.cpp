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

#include "magi/align.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace magi::align {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_alignment(const Alignment& a, Eigen::Index tokens, Eigen::Index frames) {
  if (static_cast<Eigen::Index>(a.durations.size()) != tokens) {
    throw InvalidInput("alignment has " + std::to_string(a.durations.size()) + " tokens, expected " +
                       std::to_string(tokens));
  }
  long total = 0;
  for (int d : a.durations) {
    if (d < 1) throw InvalidInput("alignment durations must be >= 1");
    total += d;
  }
  if (total != frames) {
    throw InvalidInput("alignment covers " + std::to_string(total) + " frames, expected " + std::to_string(frames));
  }
}

}  // namespace

int Alignment::total_frames() const {
  int t = 0;
  for (int d : durations) t += d;
  return t;
}

std::vector<int> Alignment::frame_to_token() const {
  std::vector<int> map;
  map.reserve(static_cast<std::size_t>(total_frames()));
  for (std::size_t i = 0; i < durations.size(); ++i) map.insert(map.end(), static_cast<std::size_t>(durations[i]), static_cast<int>(i));
  return map;
}

Mat loglik_matrix(const Mat& means, const Mat& frames) {
  if (means.cols() != frames.cols()) {
    throw InvalidInput("loglik_matrix: feature dimension " + std::to_string(means.cols()) + " vs " +
                       std::to_string(frames.cols()));
  }
  const double d = static_cast<double>(means.cols());
  // ||x - mu||^2 = ||x||^2 - 2 mu.x + ||mu||^2
  const Vec mu_sq = means.rowwise().squaredNorm();
  const Vec x_sq = frames.rowwise().squaredNorm();
  Mat ll = 2.0 * means * frames.transpose();
  ll.colwise() -= mu_sq;
  ll.rowwise() -= x_sq.transpose();
  ll *= 0.5;
  ll.array() -= d * kHalfLog2Pi;
  return ll;
}

Alignment mas(const Mat& ll) {
  const Eigen::Index tt = ll.rows();
  const Eigen::Index tf = ll.cols();
  if (tt < 1) throw InvalidInput("mas: no tokens");
  if (tt > tf) {
    throw InfeasibleAlignment("mas: " + std::to_string(tt) + " tokens cannot cover " + std::to_string(tf) + " frames");
  }
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Mat q = Mat::Constant(tt, tf, kNegInf);
  q(0, 0) = ll(0, 0);
  for (Eigen::Index j = 1; j < tf; ++j) {
    // Token i is reachable at frame j only if i <= j and enough frames remain.
    const Eigen::Index lo = std::max<Eigen::Index>(0, tt - (tf - j));
    const Eigen::Index hi = std::min(j, tt - 1);
    for (Eigen::Index i = lo; i <= hi; ++i) {
      const double stay = q(i, j - 1);
      const double advance = i > 0 ? q(i - 1, j - 1) : kNegInf;
      q(i, j) = ll(i, j) + std::max(stay, advance);
    }
  }
  Alignment a;
  a.durations.assign(static_cast<std::size_t>(tt), 0);
  Eigen::Index i = tt - 1;
  for (Eigen::Index j = tf - 1; j >= 0; --j) {
    ++a.durations[static_cast<std::size_t>(i)];
    if (j == 0) break;
    if (i > 0 && (i == j || q(i - 1, j - 1) > q(i, j - 1))) --i;
  }
  return a;
}

double alignment_score(const Mat& ll, const Alignment& a) {
  check_alignment(a, ll.rows(), ll.cols());
  double s = 0.0;
  Eigen::Index j = 0;
  for (std::size_t i = 0; i < a.durations.size(); ++i) {
    for (int k = 0; k < a.durations[i]; ++k) s += ll(static_cast<Eigen::Index>(i), j++);
  }
  return s;
}

PriorLoss prior_loss(const Alignment& a, const Mat& means, const Mat& frames) {
  if (means.cols() != frames.cols()) throw InvalidInput("prior_loss: feature dimension mismatch");
  check_alignment(a, means.rows(), frames.rows());
  const double tf = static_cast<double>(frames.rows());
  const double d = static_cast<double>(frames.cols());
  PriorLoss out;
  out.grad_means = Mat::Zero(means.rows(), means.cols());
  double acc = 0.0;
  Eigen::Index j = 0;
  for (Eigen::Index i = 0; i < means.rows(); ++i) {
    for (int k = 0; k < a.durations[static_cast<std::size_t>(i)]; ++k, ++j) {
      const RowVec diff = frames.row(j) - means.row(i);
      acc += 0.5 * diff.squaredNorm();
      out.grad_means.row(i) -= diff;
    }
  }
  out.value = acc / tf + d * kHalfLog2Pi;
  out.grad_means /= tf;
  return out;
}

}  // namespace magi::align
