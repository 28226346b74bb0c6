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

#include "magi/autograd.hpp"

#include <unordered_set>

namespace magi::ad {

namespace {

thread_local bool g_grad_enabled = true;

using Parents = std::span<const std::shared_ptr<Node>>;

}  // namespace

void Node::accumulate(const Mat& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

Var::Var(Mat value, bool requires_grad) : node_(std::make_shared<Node>()) {
  node_->value = std::move(value);
  node_->requires_grad = requires_grad;
}

Mat Var::grad() const {
  if (node_->grad.size() == 0) return Mat::Zero(rows(), cols());
  return node_->grad;
}

double Var::scalar() const {
  if (rows() != 1 || cols() != 1) throw InvalidInput("scalar() on a non-1x1 value");
  return node_->value(0, 0);
}

void Var::backward() const {
  if (rows() != 1 || cols() != 1) throw InvalidInput("backward() requires a 1x1 root");
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Mat::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() != 0) n->backward_fn(n->grad);
  }
}

Var constant(Mat value) { return Var(std::move(value), false); }
Var parameter(Mat value) { return Var(std::move(value), true); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Var make_op(Mat value, std::vector<Var> parents,
            std::function<void(const Mat&, Parents)> backward) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!g_grad_enabled || !any) return Var(std::move(node));
  node->requires_grad = true;
  node->parents.reserve(parents.size());
  for (const auto& p : parents) node->parents.push_back(p.node());
  // The closure must not own `node` itself; it receives the parent list.
  Node* raw = node.get();
  node->backward_fn = [raw, fn = std::move(backward)](const Mat& g) { fn(g, raw->parents); };
  return Var(std::move(node));
}

namespace {

void acc(const std::shared_ptr<Node>& n, const Mat& g) {
  if (n->requires_grad) n->accumulate(g);
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidInput(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()));
  }
}

}  // namespace

Var detach(const Var& a) { return constant(a.value()); }

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw InvalidInput("matmul: inner dimension mismatch");
  Mat out = a.value() * b.value();
  return make_op(std::move(out), {a, b}, [av = a.value(), bv = b.value()](const Mat& g, Parents p) {
    if (p[0]->requires_grad) p[0]->accumulate(g * bv.transpose());
    if (p[1]->requires_grad) p[1]->accumulate(av.transpose() * g);
  });
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  return make_op(a.value() + b.value(), {a, b}, [](const Mat& g, Parents p) {
    acc(p[0], g);
    acc(p[1], g);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  return make_op(a.value() - b.value(), {a, b}, [](const Mat& g, Parents p) {
    acc(p[0], g);
    if (p[1]->requires_grad) p[1]->accumulate(-g);
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Mat out = a.value().cwiseProduct(b.value());
  return make_op(std::move(out), {a, b}, [av = a.value(), bv = b.value()](const Mat& g, Parents p) {
    if (p[0]->requires_grad) p[0]->accumulate(g.cwiseProduct(bv));
    if (p[1]->requires_grad) p[1]->accumulate(g.cwiseProduct(av));
  });
}

Var scale(const Var& a, double s) {
  return make_op(a.value() * s, {a}, [s](const Mat& g, Parents p) { p[0]->accumulate(g * s); });
}

Var add_row(const Var& a, const Var& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw InvalidInput("add_row: row shape mismatch");
  Mat out = a.value().rowwise() + RowVec(row.value());
  return make_op(std::move(out), {a, row}, [](const Mat& g, Parents p) {
    acc(p[0], g);
    if (p[1]->requires_grad) p[1]->accumulate(g.colwise().sum());
  });
}

Var transpose(const Var& a) {
  return make_op(a.value().transpose(), {a},
                 [](const Mat& g, Parents p) { p[0]->accumulate(g.transpose()); });
}

Var relu(const Var& a) {
  Mat out = a.value().cwiseMax(0.0);
  return make_op(out, {a}, [av = a.value()](const Mat& g, Parents p) {
    p[0]->accumulate((av.array() > 0.0).select(g, 0.0));
  });
}

Var silu(const Var& a) {
  Mat sig = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  Mat out = a.value().cwiseProduct(sig);
  return make_op(std::move(out), {a}, [av = a.value(), sig](const Mat& g, Parents p) {
    Mat d = (sig.array() * (1.0 + av.array() * (1.0 - sig.array()))).matrix();
    p[0]->accumulate(g.cwiseProduct(d));
  });
}

Var softmax_rows(const Var& a) {
  Mat out(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    RowVec r = a.value().row(i);
    r.array() -= r.maxCoeff();
    r = r.array().exp().matrix();
    out.row(i) = r / r.sum();
  }
  return make_op(out, {a}, [out](const Mat& g, Parents p) {
    Mat gy = g.cwiseProduct(out);
    Vec s = gy.rowwise().sum();
    Mat d = gy - (out.array().colwise() * s.array()).matrix();
    p[0]->accumulate(d);
  });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
  const Eigen::Index n = a.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 || beta.cols() != n) {
    throw InvalidInput("layer_norm_rows: affine shape mismatch");
  }
  Mat xhat(a.rows(), n);
  Vec inv_std(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double m = a.value().row(i).mean();
    RowVec c = a.value().row(i).array() - m;
    const double var = c.squaredNorm() / static_cast<double>(n);
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = c * inv_std(i);
  }
  Mat out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  out.rowwise() += RowVec(beta.value());
  return make_op(std::move(out), {a, gamma, beta},
                 [xhat, inv_std, gv = gamma.value()](const Mat& g, Parents p) {
                   const double nn = static_cast<double>(xhat.cols());
                   if (p[0]->requires_grad) {
                     Mat dxhat = (g.array().rowwise() * gv.row(0).array()).matrix();
                     Mat dx(g.rows(), g.cols());
                     for (Eigen::Index i = 0; i < g.rows(); ++i) {
                       const double s1 = dxhat.row(i).sum();
                       const double s2 = dxhat.row(i).dot(xhat.row(i));
                       dx.row(i) = (inv_std(i) / nn) *
                                   (nn * dxhat.row(i).array() - s1 - xhat.row(i).array() * s2).matrix();
                     }
                     p[0]->accumulate(dx);
                   }
                   if (p[1]->requires_grad) p[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
                   if (p[2]->requires_grad) p[2]->accumulate(g.colwise().sum());
                 });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw InvalidInput("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& v : parts) {
    if (v.rows() != rows) throw InvalidInput("concat_cols: row count mismatch");
    cols += v.cols();
  }
  Mat out(rows, cols);
  std::vector<Eigen::Index> widths;
  Eigen::Index c = 0;
  for (const auto& v : parts) {
    out.middleCols(c, v.cols()) = v.value();
    widths.push_back(v.cols());
    c += v.cols();
  }
  return make_op(std::move(out), parts, [widths](const Mat& g, Parents p) {
    Eigen::Index off = 0;
    for (size_t k = 0; k < p.size(); ++k) {
      if (p[k]->requires_grad) p[k]->accumulate(g.middleCols(off, widths[k]));
      off += widths[k];
    }
  });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw InvalidInput("slice_cols: out of range");
  Mat out = a.value().middleCols(start, count);
  return make_op(std::move(out), {a}, [start, count, r = a.rows(), c = a.cols()](const Mat& g, Parents p) {
    Mat d = Mat::Zero(r, c);
    d.middleCols(start, count) = g;
    p[0]->accumulate(d);
  });
}

Var gather_rows(const Var& a, std::span<const int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), a.cols());
  for (size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= a.rows()) throw InvalidInput("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = a.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_op(std::move(out), {a}, [idx, r = a.rows()](const Mat& g, Parents p) {
    Mat d = Mat::Zero(r, g.cols());
    for (size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    p[0]->accumulate(d);
  });
}

namespace {

Mat im2col(const Mat& x, int kernel) {
  const Eigen::Index t = x.rows();
  const Eigen::Index cin = x.cols();
  const int pad = kernel / 2;
  Mat col = Mat::Zero(t, kernel * cin);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
    if (hi > lo) col.block(lo, k * cin, hi - lo, cin) = x.middleRows(lo + shift, hi - lo);
  }
  return col;
}

Mat col2im(const Mat& col, Eigen::Index t, Eigen::Index cin, int kernel) {
  const int pad = kernel / 2;
  Mat x = Mat::Zero(t, cin);
  for (int k = 0; k < kernel; ++k) {
    const Eigen::Index shift = k - pad;
    const Eigen::Index lo = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index hi = std::min<Eigen::Index>(t, t - shift);
    if (hi > lo) x.middleRows(lo + shift, hi - lo) += col.block(lo, k * cin, hi - lo, cin);
  }
  return x;
}

}  // namespace

Var conv1d(const Var& x, const Var& weight, const Var& bias, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidInput("conv1d: kernel must be odd");
  if (weight.rows() != kernel * x.cols()) throw InvalidInput("conv1d: weight rows != kernel*Cin");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) throw InvalidInput("conv1d: bias shape");
  Mat col = im2col(x.value(), kernel);
  Mat out = col * weight.value();
  out.rowwise() += RowVec(bias.value());
  return make_op(std::move(out), {x, weight, bias},
                 [col, wv = weight.value(), t = x.rows(), cin = x.cols(), kernel](const Mat& g, Parents p) {
                   if (p[0]->requires_grad) p[0]->accumulate(col2im(g * wv.transpose(), t, cin, kernel));
                   if (p[1]->requires_grad) p[1]->accumulate(col.transpose() * g);
                   if (p[2]->requires_grad) p[2]->accumulate(g.colwise().sum());
                 });
}

Var sum(const Var& a) {
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  return make_op(std::move(out), {a}, [r = a.rows(), c = a.cols()](const Mat& g, Parents p) {
    p[0]->accumulate(Mat::Constant(r, c, g(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var masked_mse(const Var& pred, const Mat& target, const std::vector<bool>& row_mask) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw InvalidInput("masked_mse: shape mismatch");
  }
  if (static_cast<Eigen::Index>(row_mask.size()) != pred.rows()) {
    throw InvalidInput("masked_mse: mask length mismatch");
  }
  Mat diff = pred.value() - target;
  Eigen::Index rows_on = 0;
  for (Eigen::Index i = 0; i < diff.rows(); ++i) {
    if (row_mask[static_cast<size_t>(i)]) {
      ++rows_on;
    } else {
      diff.row(i).setZero();
    }
  }
  if (rows_on == 0 || pred.cols() == 0) throw InvalidInput("masked_mse: empty mask");
  const double n = static_cast<double>(rows_on * pred.cols());
  Mat out(1, 1);
  out(0, 0) = diff.squaredNorm() / n;
  return make_op(std::move(out), {pred}, [diff, n](const Mat& g, Parents p) {
    p[0]->accumulate(diff * (2.0 * g(0, 0) / n));
  });
}

Var mse(const Var& pred, const Mat& target) {
  return masked_mse(pred, target, std::vector<bool>(static_cast<size_t>(pred.rows()), true));
}

}  // namespace magi::ad
