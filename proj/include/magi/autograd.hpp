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

// Minimal reverse-mode automatic differentiation over 2-D double matrices.
//
// A `Var` is a handle to a graph node. Operations on Vars record a backward
// closure when at least one input requires a gradient and gradient recording
// is enabled on the calling thread (see `NoGradGuard`). `backward()` on a 1x1
// result accumulates d(result)/d(node) into every reachable node's `grad()`.

#pragma once

#include "magi/common.hpp"

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace magi::ad {

struct Node {
  Mat value;
  Mat grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Mat&)> backward_fn;

  void accumulate(const Mat& g);
};

class Var {
 public:
  Var() = default;
  explicit Var(Mat value, bool requires_grad = false);
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  /// Gradient accumulated by the last backward pass; zeros if none reached this node.
  Mat grad() const;
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double scalar() const;
  bool defined() const { return static_cast<bool>(node_); }

  void zero_grad() { node_->grad.resize(0, 0); }
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

Var constant(Mat value);
Var parameter(Mat value);

bool grad_enabled();

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds a result node from an explicitly computed value and a closure that
/// maps the output gradient to parent gradients. Used by ops in other modules
/// whose derivative is easier to write by hand than to compose.
Var make_op(Mat value, std::vector<Var> parents,
            std::function<void(const Mat& grad_out, std::span<const std::shared_ptr<Node>> parents)>
                backward);

Var detach(const Var& a);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
/// Adds a 1xC row to every row of a TxC matrix.
Var add_row(const Var& a, const Var& row);
Var transpose(const Var& a);

Var relu(const Var& a);
Var silu(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
/// out.row(i) = a.row(index[i]); gradients scatter-add back.
Var gather_rows(const Var& a, std::span<const int> index);

/// Same-padded 1-D convolution over rows. `weight` is (kernel*Cin) x Cout with
/// tap-major layout, `bias` is 1 x Cout. Kernel must be odd.
Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel);

Var sum(const Var& a);
Var mean(const Var& a);
/// Mean squared error against a constant target over rows whose mask entry is
/// true. Throws InvalidInput when no row is selected.
Var masked_mse(const Var& pred, const Mat& target, const std::vector<bool>& row_mask);
Var mse(const Var& pred, const Mat& target);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace magi::ad
