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

#include "magi/layers.hpp"

#include <cmath>

namespace magi::nn {

ad::Var ParamStore::add(const std::string& name, Mat init) {
  for (const auto& n : names_) {
    if (n == name) throw ConfigError("duplicate parameter name: " + name);
  }
  names_.push_back(name);
  vars_.push_back(ad::parameter(std::move(init)));
  return vars_.back();
}

std::size_t ParamStore::count() const {
  std::size_t n = 0;
  for (const auto& v : vars_) n += static_cast<std::size_t>(v.value().size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& v : vars_) v.zero_grad();
}

std::map<std::string, Mat> ParamStore::state() const {
  std::map<std::string, Mat> s;
  for (std::size_t i = 0; i < vars_.size(); ++i) s.emplace(names_[i], vars_[i].value());
  return s;
}

void ParamStore::load_state(const std::map<std::string, Mat>& state) {
  for (std::size_t i = 0; i < vars_.size(); ++i) {
    auto it = state.find(names_[i]);
    if (it == state.end()) throw ConfigError("missing parameter in state: " + names_[i]);
    const Mat& m = it->second;
    if (m.rows() != vars_[i].rows() || m.cols() != vars_[i].cols()) {
      throw ConfigError("shape mismatch for parameter " + names_[i] + ": expected " +
                        std::to_string(vars_[i].rows()) + "x" + std::to_string(vars_[i].cols()) +
                        ", got " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
    }
    vars_[i].mutable_value() = m;
  }
  if (state.size() != vars_.size()) throw ConfigError("state has parameters the model does not");
}

Mat init_uniform(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(fan_in, 1)));
  std::uniform_real_distribution<double> u(-bound, bound);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               std::mt19937_64& rng)
    : weight(store.add(name + ".weight", init_uniform(rng, in, out, in))),
      bias(store.add(name + ".bias", init_uniform(rng, 1, out, in))) {}

ad::Var Linear::operator()(const ad::Var& x) const { return ad::add_row(ad::matmul(x, weight), bias); }

Conv1d::Conv1d(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out,
               int k, std::mt19937_64& rng)
    : weight(store.add(name + ".weight", init_uniform(rng, k * in, out, k * in))),
      bias(store.add(name + ".bias", init_uniform(rng, 1, out, k * in))),
      kernel(k) {}

ad::Var Conv1d::operator()(const ad::Var& x) const { return ad::conv1d(x, weight, bias, kernel); }

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dim)
    : gamma(store.add(name + ".gamma", Mat::Ones(1, dim))),
      beta(store.add(name + ".beta", Mat::Zero(1, dim))) {}

ad::Var LayerNorm::operator()(const ad::Var& x) const { return ad::layer_norm_rows(x, gamma, beta); }

Embedding::Embedding(ParamStore& store, const std::string& name, Eigen::Index rows, Eigen::Index dim,
                     std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Mat t(rows, dim);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  table = store.add(name + ".table", std::move(t));
}

ad::Var Embedding::operator()(std::span<const int> ids) const { return ad::gather_rows(table, ids); }

MultiHeadAttention::MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index dim,
                                       int h, std::mt19937_64& rng)
    : q(store, name + ".q", dim, dim, rng),
      k(store, name + ".k", dim, dim, rng),
      v(store, name + ".v", dim, dim, rng),
      o(store, name + ".o", dim, dim, rng),
      heads(h) {
  if (h < 1 || dim % h != 0) throw ConfigError("attention width must be divisible by head count");
}

ad::Var MultiHeadAttention::operator()(const ad::Var& x) const {
  const Eigen::Index dh = x.cols() / heads;
  ad::Var qx = q(x), kx = k(x), vx = v(x);
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  const double s = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int h = 0; h < heads; ++h) {
    ad::Var qh = ad::slice_cols(qx, h * dh, dh);
    ad::Var kh = ad::slice_cols(kx, h * dh, dh);
    ad::Var vh = ad::slice_cols(vx, h * dh, dh);
    ad::Var att = ad::softmax_rows(ad::scale(ad::matmul(qh, ad::transpose(kh)), s));
    outs.push_back(ad::matmul(att, vh));
  }
  return o(heads == 1 ? outs.front() : ad::concat_cols(outs));
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, Eigen::Index dim,
                                   int heads, Eigen::Index ff_dim, std::mt19937_64& rng)
    : ln1(store, name + ".ln1", dim),
      ln2(store, name + ".ln2", dim),
      attn(store, name + ".attn", dim, heads, rng),
      ff1(store, name + ".ff1", dim, ff_dim, rng),
      ff2(store, name + ".ff2", ff_dim, dim, rng) {}

ad::Var TransformerBlock::operator()(const ad::Var& x) const {
  ad::Var h = ad::add(x, attn(ln1(x)));
  return ad::add(h, ff2(ad::relu(ff1(ln2(h)))));
}

VariancePredictor::VariancePredictor(ParamStore& store, const std::string& name, Eigen::Index in,
                                     Eigen::Index width, Eigen::Index out, std::mt19937_64& rng)
    : conv1(store, name + ".conv1", in, width, 3, rng),
      conv2(store, name + ".conv2", width, width, 3, rng),
      ln1(store, name + ".ln1", width),
      ln2(store, name + ".ln2", width),
      head(store, name + ".head", width, out, rng) {}

ad::Var VariancePredictor::operator()(const ad::Var& x) const {
  ad::Var h = ln1(ad::relu(conv1(x)));
  h = ln2(ad::relu(conv2(h)));
  return head(h);
}

Mat sinusoidal_positions(Eigen::Index length, Eigen::Index dim) {
  Mat pe(length, dim);
  for (Eigen::Index p = 0; p < length; ++p) {
    for (Eigen::Index i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      pe(p, i) = (i % 2 == 0) ? std::sin(static_cast<double>(p) * freq) : std::cos(static_cast<double>(p) * freq);
    }
  }
  return pe;
}

Mat time_features(double t, Eigen::Index dim) {
  Mat f(1, dim);
  const Eigen::Index half = dim / 2;
  for (Eigen::Index i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(std::max<Eigen::Index>(half - 1, 1)));
    f(0, i) = std::sin(1000.0 * t * freq);
    f(0, half + i) = std::cos(1000.0 * t * freq);
  }
  if (dim % 2 == 1) f(0, dim - 1) = t;
  return f;
}

}  // namespace magi::nn
