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

#include "magi/train.hpp"

#include "magi/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace magi::train {

namespace {

using nlohmann::json;

Mat column(const std::vector<double>& v) {
  Mat m(static_cast<Eigen::Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
  return m;
}

// Prior loss as a graph op over mu, normalised per feature element.
ad::Var prior_term(const align::Alignment& a, const ad::Var& mu, const Mat& frames) {
  const double dim = static_cast<double>(frames.cols());
  const align::PriorLoss pl = align::prior_loss(a, mu.value(), frames);
  Mat value(1, 1);
  value(0, 0) = pl.value / dim;
  return ad::make_op(std::move(value), {mu}, [grad = pl.grad_means, dim](const Mat& g, auto parents) {
    parents[0]->accumulate(grad * (g(0, 0) / dim));
  });
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train config: learning_rate must be > 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (pretrain_steps < 0 || finetune_steps < 0) throw ConfigError("train config: step counts must be >= 0");
  if (checkpoint_every < 0) throw ConfigError("train config: checkpoint_every must be >= 0");
  for (double w : {weights.cfm, weights.duration, weights.pitch, weights.energy, weights.prior}) {
    if (!(w >= 0.0)) throw ConfigError("train config: loss weights must be >= 0");
  }
}

json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"batch_size", batch_size},
          {"pretrain_steps", pretrain_steps},
          {"finetune_steps", finetune_steps},
          {"weight_cfm", weights.cfm},
          {"weight_duration", weights.duration},
          {"weight_pitch", weights.pitch},
          {"weight_energy", weights.energy},
          {"weight_prior", weights.prior},
          {"seed", seed},
          {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  const json defaults = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("train config: unknown key '" + it.key() + "'");
  }
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
    c.finetune_steps = j.value("finetune_steps", c.finetune_steps);
    c.weights.cfm = j.value("weight_cfm", c.weights.cfm);
    c.weights.duration = j.value("weight_duration", c.weights.duration);
    c.weights.pitch = j.value("weight_pitch", c.weights.pitch);
    c.weights.energy = j.value("weight_energy", c.weights.energy);
    c.weights.prior = j.value("weight_prior", c.weights.prior);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

Example make_example(const features::FeatureBundle& bundle, const Standardizer& s) {
  bundle.validate();
  Example e;
  e.tokens = bundle.tokens;
  e.speaker = bundle.speaker;
  e.joint = s.joint(bundle);
  e.pitch_z.reserve(bundle.pitch.values.size());
  for (double f : bundle.pitch.values) e.pitch_z.push_back(s.pitch_to_z(f));
  e.energy_z.reserve(bundle.energy.values.size());
  for (double v : bundle.energy.values) e.energy_z.push_back(s.energy_to_z(v));
  return e;
}

LossReport LossTerms::report() const {
  return {total.scalar(), cfm.scalar(), duration.scalar(), pitch.scalar(), energy.scalar(), prior.scalar()};
}

LossTerms compute_losses(const net::Model& model, std::span<const Example> batch, const LossWeights& w,
                         std::uint64_t noise_seed, const std::vector<align::Alignment>* fixed) {
  if (batch.empty()) throw InvalidInput("compute_losses: empty batch");
  if (fixed && fixed->size() != batch.size()) throw InvalidInput("compute_losses: alignment count mismatch");
  const auto& cfg = model.config();
  const Standardizer& st = model.standardizer();
  std::mt19937_64 rng(noise_seed);
  LossTerms terms;
  std::vector<ad::Var> cfm_l, dur_l, pitch_l, energy_l, prior_l;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Example& ex = batch[b];
    if (ex.joint.cols() != cfg.joint_dim()) throw InvalidInput("compute_losses: example width mismatch");
    const net::EncoderOutput enc = model.encode_text(ex.tokens, ex.speaker);

    align::Alignment a;
    if (fixed) {
      a = (*fixed)[b];
    } else {
      a = align::mas(align::loglik_matrix(enc.mu.value(), ex.joint));
    }
    prior_l.push_back(prior_term(a, enc.mu, ex.joint));

    const auto pitch_tok = features::token_average(ex.pitch_z, a.durations);
    const auto energy_tok = features::token_average(ex.energy_z, a.durations);
    const net::ProsodyPrediction pros = model.predict_prosody(enc.hidden, ex.speaker);
    pitch_l.push_back(ad::mse(pros.pitch, column(pitch_tok)));
    energy_l.push_back(ad::mse(pros.energy, column(energy_tok)));

    std::vector<double> pitch_hz, energy_lin;
    for (double z : pitch_tok) pitch_hz.push_back(st.z_to_pitch(z));
    for (double z : energy_tok) energy_lin.push_back(st.z_to_energy(z));
    const ad::Var hp = model.add_prosody(enc.hidden, pitch_hz, energy_lin);

    Mat log_dur(static_cast<Eigen::Index>(a.durations.size()), 1);
    for (std::size_t i = 0; i < a.durations.size(); ++i) {
      log_dur(static_cast<Eigen::Index>(i), 0) = std::log1p(static_cast<double>(a.durations[i]));
    }
    const cfm::FlowSample dsample = cfm::draw_training_sample(log_dur, rng, cfg.sigma_min);
    const int spk = ex.speaker;
    cfm::DiffField dfield = [&model, spk](const ad::Var& x, double t, const ad::Var& c) {
      return model.duration_field(x, t, c, spk);
    };
    dur_l.push_back(cfm::cfm_loss(dfield, std::span(&dsample, 1), hp,
                                  std::vector<bool>(a.durations.size(), true)));

    const ad::Var cond = model.decoder_condition(hp, a.durations, ex.speaker);
    const cfm::FlowSample jsample = cfm::draw_training_sample(ex.joint, rng, cfg.sigma_min);
    cfm::DiffField jfield = [&model](const ad::Var& x, double t, const ad::Var& c) {
      return model.decoder_field(x, t, c);
    };
    cfm_l.push_back(cfm::cfm_loss(jfield, std::span(&jsample, 1), cond,
                                  std::vector<bool>(static_cast<std::size_t>(ex.joint.rows()), true)));
    terms.alignments.push_back(std::move(a));
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto average = [inv](const std::vector<ad::Var>& v) {
    ad::Var s = v.front();
    for (std::size_t i = 1; i < v.size(); ++i) s = ad::add(s, v[i]);
    return ad::scale(s, inv);
  };
  terms.cfm = average(cfm_l);
  terms.duration = average(dur_l);
  terms.pitch = average(pitch_l);
  terms.energy = average(energy_l);
  terms.prior = average(prior_l);
  terms.total = ad::add(
      ad::add(ad::add(ad::scale(terms.cfm, w.cfm), ad::scale(terms.duration, w.duration)),
              ad::add(ad::scale(terms.pitch, w.pitch), ad::scale(terms.energy, w.energy))),
      ad::scale(terms.prior, w.prior));
  return terms;
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(nn::ParamStore& params) {
  if (m_.empty()) {
    for (const auto& v : params.vars()) {
      m_.push_back(Mat::Zero(v.rows(), v.cols()));
      v_.push_back(Mat::Zero(v.rows(), v.cols()));
    }
  }
  if (m_.size() != params.size()) throw ConfigError("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ad::Var& p = params.var(i);
    const Mat g = p.grad();
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    const Mat mhat = m_[i] / c1;
    const Mat vhat = v_[i] / c2;
    p.mutable_value() -= (lr_ * mhat.array() / (vhat.array().sqrt() + eps_)).matrix();
  }
}

void Adam::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  Mat header(1, 5);
  header << lr_, beta1_, beta2_, eps_, static_cast<double>(t_);
  io::write_tensor(out, io::from_matrix(header, io::DType::kFloat64));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    io::write_tensor(out, io::from_matrix(m_[i], io::DType::kFloat64));
    io::write_tensor(out, io::from_matrix(v_[i], io::DType::kFloat64));
  }
}

void Adam::load(const std::filesystem::path& path, const nn::ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const Mat header = io::to_matrix(io::read_tensor(in));
  if (header.size() != 5) throw IoError(path.string() + ": bad optimizer header");
  lr_ = header(0, 0);
  beta1_ = header(0, 1);
  beta2_ = header(0, 2);
  eps_ = header(0, 3);
  t_ = static_cast<long>(header(0, 4));
  m_.clear();
  v_.clear();
  if (t_ == 0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(io::to_matrix(io::read_tensor(in)));
    v_.push_back(io::to_matrix(io::read_tensor(in)));
    if (m_.back().rows() != params.var(i).rows() || m_.back().cols() != params.var(i).cols()) {
      throw ConfigError("optimizer state shape mismatch for " + params.name(i));
    }
  }
}

std::uint64_t step_seed(std::uint64_t seed, long step) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(step) + 0x5851F42D4C957F2DULL));
}

std::vector<std::size_t> batch_indices(std::size_t corpus_size, int batch_size, std::uint64_t seed, long step) {
  std::vector<std::size_t> idx(corpus_size);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (static_cast<std::size_t>(batch_size) >= corpus_size) return idx;
  std::mt19937_64 rng(splitmix64(step_seed(seed, step) + 1));
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < static_cast<std::size_t>(batch_size); ++i) {
    std::uniform_int_distribution<std::size_t> u(i, corpus_size - 1);
    std::swap(idx[i], idx[u(rng)]);
  }
  idx.resize(static_cast<std::size_t>(batch_size));
  return idx;
}

LossReport training_step(net::Model& model, Adam& optimizer, std::span<const Example> batch,
                         const TrainConfig& config, std::uint64_t seed) {
  model.params().zero_grad();
  LossTerms terms = compute_losses(model, batch, config.weights, seed);
  const LossReport r = terms.report();
  const std::pair<const char*, double> parts[] = {{"cfm", r.cfm},       {"duration", r.duration},
                                                  {"pitch", r.pitch},   {"energy", r.energy},
                                                  {"prior", r.prior},   {"total", r.total}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericalFailure(std::string("training_step/") + name + " loss", -1, "non-finite value");
  }
  terms.total.backward();
  optimizer.step(model.params());
  model.params().zero_grad();
  return r;
}

std::string MetricRecord::to_line() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["stage"] = stage;
  j["total"] = losses.total;
  j["cfm"] = losses.cfm;
  j["duration"] = losses.duration;
  j["pitch"] = losses.pitch;
  j["energy"] = losses.energy;
  j["prior"] = losses.prior;
  j["wall_time_s"] = wall_time_s;
  return j.dump();
}

void save_training_state(const std::filesystem::path& dir, const net::Model& model, const Adam& optimizer) {
  net::save_model(dir, model);
  optimizer.save(dir / "optimizer.mtf");
}

void load_optimizer_state(const std::filesystem::path& dir, const net::Model& model, Adam& optimizer) {
  optimizer.load(dir / "optimizer.mtf", model.params());
}

ScheduleResult run_schedule(net::Model& model, std::span<const features::FeatureBundle> pretrain,
                            std::span<const features::FeatureBundle> finetune, const TrainConfig& config,
                            const ScheduleOptions& options) {
  config.validate();
  if (config.pretrain_steps > 0 && pretrain.empty()) throw ConfigError("run_schedule: empty pretraining corpus");
  if (config.finetune_steps > 0 && finetune.empty()) throw ConfigError("run_schedule: empty fine-tuning corpus");
  const int speakers = model.config().speakers;
  const int reserved = speakers - 1;
  for (const auto& b : pretrain) {
    if (b.speaker < 0 || b.speaker >= speakers || (speakers > 1 && !finetune.empty() && b.speaker == reserved)) {
      throw ConfigError("run_schedule: pretraining speaker " + std::to_string(b.speaker) +
                        " does not fit the model's " + std::to_string(speakers) +
                        " speaker slots (index " + std::to_string(reserved) + " is reserved for fine-tuning)");
    }
  }
  if (options.standardizer) {
    model.set_standardizer(*options.standardizer);
  } else if (!model.trained()) {
    std::vector<features::FeatureBundle> all(pretrain.begin(), pretrain.end());
    all.insert(all.end(), finetune.begin(), finetune.end());
    if (!all.empty()) model.set_standardizer(Standardizer::fit(all));
  }
  std::vector<Example> pre, fine;
  for (const auto& b : pretrain) pre.push_back(make_example(b, model.standardizer()));
  for (const auto& b : finetune) {
    fine.push_back(make_example(b, model.standardizer()));
    fine.back().speaker = reserved;
  }

  std::ofstream metrics;
  if (options.metrics_path) {
    metrics.open(*options.metrics_path, std::ios::app);
    if (!metrics) throw IoError("cannot open metrics log " + options.metrics_path->string());
  }
  const auto start = std::chrono::steady_clock::now();
  ScheduleResult result;
  long global = 0;
  auto run_stage = [&](const std::vector<Example>& corpus, int steps, const char* stage, LossReport& last) {
    Adam opt(config.learning_rate);
    std::vector<Example> batch;
    for (int s = 0; s < steps; ++s, ++global) {
      batch.clear();
      for (std::size_t i : batch_indices(corpus.size(), config.batch_size, config.seed, global)) batch.push_back(corpus[i]);
      MetricRecord rec;
      rec.step = global;
      rec.stage = stage;
      rec.losses = training_step(model, opt, batch, config, step_seed(config.seed, global));
      rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      last = rec.losses;
      if (metrics.is_open()) metrics << rec.to_line() << '\n';
      result.log.push_back(std::move(rec));
      if (options.checkpoint_dir && config.checkpoint_every > 0 && (global + 1) % config.checkpoint_every == 0) {
        model.set_trained(true);
        save_training_state(*options.checkpoint_dir / ("step_" + std::to_string(global + 1)), model, opt);
      }
    }
    if (steps > 0) model.set_trained(true);
    return opt;
  };
  run_stage(pre, config.pretrain_steps, "pretrain", result.final_pretrain);
  Adam last_opt = run_stage(fine, config.finetune_steps, "finetune", result.final_finetune);
  if (options.checkpoint_dir) save_training_state(*options.checkpoint_dir / "final", model, last_opt);
  return result;
}

GradCheckResult check_gradients(nn::ParamStore& params, const std::function<ad::Var()>& loss, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("check_gradients: eps must be positive");
  params.zero_grad();
  ad::Var l = loss();
  l.backward();
  std::vector<Mat> analytic;
  for (const auto& v : params.vars()) analytic.push_back(v.grad());
  params.zero_grad();
  GradCheckResult r;
  ad::NoGradGuard guard;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Mat& value = params.var(i).mutable_value();
    for (Eigen::Index k = 0; k < value.size(); ++k) {
      const double orig = value.data()[k];
      value.data()[k] = orig + eps;
      const double lp = loss().scalar();
      value.data()[k] = orig - eps;
      const double lm = loss().scalar();
      value.data()[k] = orig;
      const double num = (lp - lm) / (2.0 * eps);
      const double a = analytic[i].data()[k];
      const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), kGradCheckFloor});
      ++r.checked;
      if (rel > r.max_rel_error || r.worst_index < 0) {
        r.max_rel_error = std::max(rel, r.max_rel_error);
        if (rel >= r.max_rel_error) {
          r.worst_parameter = params.name(i);
          r.worst_index = k;
          r.analytic = a;
          r.numeric = num;
        }
      }
    }
  }
  return r;
}

GradCheckResult check_gradients(net::Model& model, std::span<const Example> batch, const LossWeights& weights,
                                double eps, std::uint64_t noise_seed) {
  std::vector<align::Alignment> alignments;
  {
    ad::NoGradGuard guard;
    alignments = compute_losses(model, batch, weights, noise_seed).alignments;
  }
  return check_gradients(
      model.params(), [&] { return compute_losses(model, batch, weights, noise_seed, &alignments).total; }, eps);
}

}  // namespace magi::train
