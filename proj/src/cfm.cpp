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

#include "magi/cfm.hpp"

namespace magi::cfm {

Mat standard_normal(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

FlowSample make_flow_sample(const Mat& x1, Mat x0, double t, double sigma_min) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("make_flow_sample: t must lie in [0, 1]");
  if (!(sigma_min >= 0.0 && sigma_min < 1.0)) throw InvalidInput("make_flow_sample: sigma_min must lie in [0, 1)");
  if (x0.rows() != x1.rows() || x0.cols() != x1.cols()) throw InvalidInput("make_flow_sample: noise shape mismatch");
  FlowSample s;
  s.t = t;
  s.x1 = x1;
  s.x0 = std::move(x0);
  const double keep = 1.0 - (1.0 - sigma_min) * t;
  s.xt = t * s.x1 + keep * s.x0;
  s.ut = s.x1 - (1.0 - sigma_min) * s.x0;
  return s;
}

FlowSample make_flow_sample(const Mat& x1, std::mt19937_64& rng, double t, double sigma_min) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("make_flow_sample: t must lie in [0, 1]");
  return make_flow_sample(x1, standard_normal(x1.rows(), x1.cols(), rng), t, sigma_min);
}

FlowSample draw_training_sample(const Mat& x1, std::mt19937_64& rng, double sigma_min) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double t = u(rng);
  return make_flow_sample(x1, rng, t, sigma_min);
}

ad::Var cfm_loss(const DiffField& field, std::span<const FlowSample> batch, const ad::Var& cond,
                 const std::vector<bool>& row_mask) {
  if (batch.empty()) throw InvalidInput("cfm_loss: empty batch");
  long rows_on = 0;
  for (bool b : row_mask) rows_on += b ? 1 : 0;
  if (rows_on == 0) throw InvalidInput("cfm_loss: empty mask");
  ad::Var total;
  for (const auto& s : batch) {
    ad::Var v = field(ad::constant(s.xt), s.t, cond);
    ad::Var l = ad::masked_mse(v, s.ut, row_mask);
    total = total.defined() ? ad::add(total, l) : l;
  }
  return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

Mat euler_solve(const Field& field, const Mat& x_init, const Mat& cond, const ODESolverConfig& config) {
  if (config.nfe < 1) throw InvalidInput("euler_solve: nfe must be >= 1");
  const double h = 1.0 / config.nfe;
  Mat x = x_init;
  for (int k = 0; k < config.nfe; ++k) {
    const Mat v = field(x, static_cast<double>(k) * h, cond);
    if (!v.allFinite()) throw NumericalFailure("euler_solve", k, "vector field returned non-finite values");
    if (v.rows() != x.rows() || v.cols() != x.cols()) throw InvalidInput("euler_solve: field changed state shape");
    x += h * v;
    if (!x.allFinite()) throw NumericalFailure("euler_solve", k, "state became non-finite");
  }
  return x;
}

}  // namespace magi::cfm
