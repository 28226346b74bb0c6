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

// Monotonic alignment search between per-token Gaussian means and output
// frames, and the matching prior loss.

#pragma once

#include "magi/common.hpp"

#include <vector>

namespace magi::align {

/// Frames per token. Every entry is >= 1 and the sum is the frame count.
struct Alignment {
  std::vector<int> durations;

  int total_frames() const;
  /// Token index of each frame, length total_frames().
  std::vector<int> frame_to_token() const;
};

/// Unit-variance isotropic Gaussian log-density of every frame under every
/// token mean: entry (i, j) = log N(frames_j; means_i, I).
Mat loglik_matrix(const Mat& means, const Mat& frames);

/// Best monotonic, surjective alignment of T_f frames onto T_t tokens.
/// Ties prefer staying on the current token while backtracking.
Alignment mas(const Mat& loglik);

/// Sum of loglik entries along an alignment.
double alignment_score(const Mat& loglik, const Alignment& alignment);

struct PriorLoss {
  double value = 0.0;
  Mat grad_means;  // d value / d means
};

/// Mean over frames of the negative aligned log-likelihood, with its gradient
/// with respect to the token means.
PriorLoss prior_loss(const Alignment& alignment, const Mat& means, const Mat& frames);

}  // namespace magi::align
