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

#include "magi/net.hpp"

#include "magi/tensor_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>

namespace magi::net {

namespace {

using nlohmann::json;

Mat broadcast(const Mat& row, Eigen::Index rows) { return row.replicate(rows, 1); }

ad::Var avg_pool2(const ad::Var& x) {
  const auto t = static_cast<int>(x.rows());
  const int half = (t + 1) / 2;
  std::vector<int> even(static_cast<std::size_t>(half)), odd(static_cast<std::size_t>(half));
  for (int i = 0; i < half; ++i) {
    even[static_cast<std::size_t>(i)] = 2 * i;
    odd[static_cast<std::size_t>(i)] = std::min(2 * i + 1, t - 1);
  }
  return ad::scale(ad::add(ad::gather_rows(x, even), ad::gather_rows(x, odd)), 0.5);
}

ad::Var upsample2(const ad::Var& x, Eigen::Index target_rows) {
  std::vector<int> idx(static_cast<std::size_t>(target_rows));
  for (Eigen::Index i = 0; i < target_rows; ++i) {
    idx[static_cast<std::size_t>(i)] = static_cast<int>(std::min<Eigen::Index>(i / 2, x.rows() - 1));
  }
  return ad::gather_rows(x, idx);
}

}  // namespace

void ModelConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("model config: ") + what);
  };
  need(vocab_size >= 1, "vocab_size must be >= 1");
  need(hidden >= 1, "hidden must be >= 1");
  need(encoder_layers >= 0, "encoder_layers must be >= 0");
  need(encoder_heads >= 1 && hidden % encoder_heads == 0, "hidden must be divisible by encoder_heads");
  need(encoder_ff >= 1, "encoder_ff must be >= 1");
  need(prosody_width >= 1 && duration_width >= 1, "predictor widths must be >= 1");
  need(buckets >= 2, "buckets must be >= 2");
  need(n_mels >= 1, "n_mels must be >= 1");
  need(motion_dim == features::kMotionDim, "motion_dim must be 45");
  need(speakers >= 1, "speakers must be >= 1");
  need(sigma_min >= 0.0 && sigma_min < 1.0, "sigma_min must lie in [0, 1)");
  need(decoder_channels >= 1 && decoder_heads >= 1 && decoder_channels % decoder_heads == 0,
       "decoder_channels must be divisible by decoder_heads");
  need(time_dim >= 2, "time_dim must be >= 2");
  need(frame_rate > 0.0, "frame_rate must be positive");
}

json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size},       {"hidden", hidden},
          {"encoder_layers", encoder_layers}, {"encoder_heads", encoder_heads},
          {"encoder_ff", encoder_ff},       {"prosody_width", prosody_width},
          {"duration_width", duration_width}, {"buckets", buckets},
          {"n_mels", n_mels},               {"motion_dim", motion_dim},
          {"speakers", speakers},           {"sigma_min", sigma_min},
          {"decoder_channels", decoder_channels}, {"decoder_heads", decoder_heads},
          {"time_dim", time_dim},           {"frame_rate", frame_rate}};
}

ModelConfig ModelConfig::from_json(const json& j) {
  ModelConfig c;
  const json defaults = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!defaults.contains(it.key())) throw ConfigError("model config: unknown key '" + it.key() + "'");
  }
  auto get_int = [&](const char* k, int& v) {
    if (j.contains(k)) v = j.at(k).get<int>();
  };
  auto get_double = [&](const char* k, double& v) {
    if (j.contains(k)) v = j.at(k).get<double>();
  };
  try {
    get_int("vocab_size", c.vocab_size);
    get_int("hidden", c.hidden);
    get_int("encoder_layers", c.encoder_layers);
    get_int("encoder_heads", c.encoder_heads);
    get_int("encoder_ff", c.encoder_ff);
    get_int("prosody_width", c.prosody_width);
    get_int("duration_width", c.duration_width);
    get_int("buckets", c.buckets);
    get_int("n_mels", c.n_mels);
    get_int("motion_dim", c.motion_dim);
    get_int("speakers", c.speakers);
    get_double("sigma_min", c.sigma_min);
    get_int("decoder_channels", c.decoder_channels);
    get_int("decoder_heads", c.decoder_heads);
    get_int("time_dim", c.time_dim);
    get_double("frame_rate", c.frame_rate);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

SpeakerVector SpeakerVector::make(int index, int speakers) {
  if (index < 0 || index >= speakers) {
    throw InvalidInput("speaker index " + std::to_string(index) + " outside [0, " + std::to_string(speakers) + ")");
  }
  SpeakerVector s;
  s.one_hot = Mat::Zero(1, speakers);
  s.one_hot(0, index) = 1.0;
  return s;
}

int SpeakerVector::index() const {
  Eigen::Index i = 0;
  one_hot.row(0).maxCoeff(&i);
  return static_cast<int>(i);
}

ProsodyBuckets ProsodyBuckets::from_standardizer(const train::Standardizer& s, int buckets) {
  ProsodyBuckets b;
  b.pitch = features::linear_boundaries(s.log_pitch_min, s.log_pitch_max, buckets);
  b.energy = features::linear_boundaries(s.energy_min, s.energy_max, buckets);
  return b;
}

Model::ResBlock Model::make_resblock(const std::string& name, Eigen::Index in, Eigen::Index out,
                                     std::mt19937_64& rng) {
  ResBlock b;
  b.conv1 = nn::Conv1d(params_, name + ".conv1", in, out, 3, rng);
  b.norm = nn::LayerNorm(params_, name + ".norm", out);
  b.time_proj = nn::Linear(params_, name + ".time_proj", out, out, rng);
  b.conv2 = nn::Conv1d(params_, name + ".conv2", out, out, 3, rng);
  b.skip = nn::Linear(params_, name + ".skip", in, out, rng);
  return b;
}

ad::Var Model::ResBlock::operator()(const ad::Var& x, const ad::Var& temb) const {
  ad::Var h = ad::silu(norm(conv1(x)));
  h = ad::add_row(h, time_proj(temb));
  h = ad::silu(conv2(h));
  return ad::add(h, skip(x));
}

Model::Model(const ModelConfig& config, std::uint64_t init_seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const Eigen::Index d = config_.hidden;
  const Eigen::Index s = config_.speakers;
  const Eigen::Index j = config_.joint_dim();
  const Eigen::Index c = config_.decoder_channels;

  token_emb_ = nn::Embedding(params_, "encoder.token_emb", config_.vocab_size, d, rng);
  prenet_ = nn::Linear(params_, "encoder.prenet", d + s, d, rng);
  for (int l = 0; l < config_.encoder_layers; ++l) {
    encoder_.emplace_back(params_, "encoder.block" + std::to_string(l), d, config_.encoder_heads, config_.encoder_ff,
                          rng);
  }
  encoder_norm_ = nn::LayerNorm(params_, "encoder.norm", d);
  mu_proj_ = nn::Linear(params_, "encoder.mu_proj", d, j, rng);

  pitch_pred_ = nn::VariancePredictor(params_, "prosody.pitch", d + s, config_.prosody_width, 1, rng);
  energy_pred_ = nn::VariancePredictor(params_, "prosody.energy", d + s, config_.prosody_width, 1, rng);
  pitch_emb_ = nn::Embedding(params_, "prosody.pitch_emb", config_.buckets, d, rng);
  energy_emb_ = nn::Embedding(params_, "prosody.energy_emb", config_.buckets, d, rng);

  duration_pred_ =
      nn::VariancePredictor(params_, "duration.field", 1 + config_.time_dim + d + s, config_.duration_width, 1, rng);
  duration_gain_ = nn::Linear(params_, "duration.x_gain", config_.time_dim, 1, rng);

  time_mlp1_ = nn::Linear(params_, "decoder.time_mlp1", config_.time_dim, c, rng);
  time_mlp2_ = nn::Linear(params_, "decoder.time_mlp2", c, c, rng);
  down0_ = make_resblock("decoder.down0", j + d + s, c, rng);
  down1_ = make_resblock("decoder.down1", c, c, rng);
  mid_ = make_resblock("decoder.mid", c, c, rng);
  bottleneck_ = nn::TransformerBlock(params_, "decoder.bottleneck", c, config_.decoder_heads, 2 * c, rng);
  up1_ = make_resblock("decoder.up1", 2 * c, c, rng);
  up0_ = make_resblock("decoder.up0", 2 * c, c, rng);
  out_proj_ = nn::Linear(params_, "decoder.out", c, j, rng);
  x_gain_ = nn::Linear(params_, "decoder.x_gain", c, j, rng);

  set_standardizer(train::Standardizer::identity(config_.joint_dim()));
}

std::unique_ptr<Model> Model::clone() const {
  auto m = std::make_unique<Model>(config_, 0);
  m->params_.load_state(params_.state());
  m->standardizer_ = standardizer_;
  m->buckets_ = buckets_;
  m->trained_ = trained_;
  return m;
}

void Model::set_standardizer(const train::Standardizer& s) {
  if (s.joint_dim() != config_.joint_dim()) throw ConfigError("standardizer joint width does not match model");
  standardizer_ = s;
  buckets_ = ProsodyBuckets::from_standardizer(s, config_.buckets);
}

SpeakerVector Model::speaker(int index) const { return SpeakerVector::make(index, config_.speakers); }

EncoderOutput Model::encode_text(std::span<const int> tokens, int speaker_index) const {
  if (tokens.empty()) throw InvalidInput("encode_text: empty token sequence");
  for (int t : tokens) {
    if (t < 0 || t >= config_.vocab_size) throw InvalidInput("encode_text: token id " + std::to_string(t) + " out of vocabulary");
  }
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const Mat spk = broadcast(speaker(speaker_index).one_hot, n);
  ad::Var x = prenet_(ad::concat_cols({token_emb_(tokens), ad::constant(spk)}));
  x = ad::add(x, ad::constant(nn::sinusoidal_positions(n, config_.hidden)));
  for (const auto& block : encoder_) x = block(x);
  EncoderOutput out;
  out.hidden = encoder_norm_(x);
  out.mu = mu_proj_(out.hidden);
  return out;
}

ProsodyPrediction Model::predict_prosody(const ad::Var& hidden, int speaker_index) const {
  if (hidden.cols() != config_.hidden || hidden.rows() < 1) throw InvalidInput("predict_prosody: hidden shape mismatch");
  const Mat spk = broadcast(speaker(speaker_index).one_hot, hidden.rows());
  ad::Var in = ad::concat_cols({hidden, ad::constant(spk)});
  return {pitch_pred_(in), energy_pred_(in)};
}

ad::Var embed_prosody(std::span<const double> values, std::span<const double> boundaries, const nn::Embedding& table) {
  std::vector<int> idx;
  idx.reserve(values.size());
  for (double v : values) idx.push_back(features::bucketize(v, boundaries));
  return table(idx);
}

ad::Var Model::add_prosody(const ad::Var& hidden, std::span<const double> pitch_hz, std::span<const double> energy) const {
  if (static_cast<Eigen::Index>(pitch_hz.size()) != hidden.rows() ||
      static_cast<Eigen::Index>(energy.size()) != hidden.rows()) {
    throw InvalidInput("add_prosody: one value per token required");
  }
  std::vector<double> log_pitch;
  log_pitch.reserve(pitch_hz.size());
  for (double f : pitch_hz) log_pitch.push_back(std::log(std::max(f, train::kPitchFloorHz)));
  ad::Var h = ad::add(hidden, embed_prosody(log_pitch, buckets_.pitch, pitch_emb_));
  return ad::add(h, embed_prosody(energy, buckets_.energy, energy_emb_));
}

ad::Var Model::duration_field(const ad::Var& x, double t, const ad::Var& hidden_prosody, int speaker_index) const {
  const Eigen::Index n = hidden_prosody.rows();
  if (x.rows() != n || x.cols() != 1) throw InvalidInput("duration_field: state must be T_t x 1");
  const Mat temb = broadcast(nn::time_features(t, config_.time_dim), n);
  const Mat spk = broadcast(speaker(speaker_index).one_hot, n);
  const ad::Var field = duration_pred_(ad::concat_cols({x, ad::constant(temb), hidden_prosody, ad::constant(spk)}));
  return ad::add(field, ad::mul(x, duration_gain_(ad::constant(temb))));
}

ad::Var Model::decoder_field(const ad::Var& x, double t, const ad::Var& cond) const {
  if (x.cols() != config_.joint_dim() || cond.rows() != x.rows() ||
      cond.cols() != config_.hidden + config_.speakers) {
    throw InvalidInput("decoder_field: state/condition shape mismatch");
  }
  ad::Var temb = time_mlp2_(ad::silu(time_mlp1_(ad::constant(nn::time_features(t, config_.time_dim)))));
  ad::Var h0 = down0_(ad::concat_cols({x, cond}), temb);
  ad::Var h1 = down1_(avg_pool2(h0), temb);
  ad::Var m = bottleneck_(mid_(avg_pool2(h1), temb));
  ad::Var u1 = up1_(ad::concat_cols({upsample2(m, h1.rows()), h1}), temb);
  ad::Var u0 = up0_(ad::concat_cols({upsample2(u1, h0.rows()), h0}), temb);
  const std::vector<int> rows(static_cast<std::size_t>(x.rows()), 0);
  return ad::add(out_proj_(u0), ad::mul(x, ad::gather_rows(x_gain_(temb), rows)));
}

ad::Var length_regulate(const ad::Var& hidden, std::span<const int> durations) {
  if (static_cast<Eigen::Index>(durations.size()) != hidden.rows()) {
    throw InvalidInput("length_regulate: one duration per row required");
  }
  std::vector<int> idx;
  for (std::size_t i = 0; i < durations.size(); ++i) {
    if (durations[i] < 1) throw InvalidInput("length_regulate: durations must be >= 1");
    idx.insert(idx.end(), static_cast<std::size_t>(durations[i]), static_cast<int>(i));
  }
  return ad::gather_rows(hidden, idx);
}

Mat length_regulate(const Mat& hidden, std::span<const int> durations) {
  ad::NoGradGuard guard;
  return length_regulate(ad::constant(hidden), durations).value();
}

ad::Var Model::decoder_condition(const ad::Var& hidden_prosody, std::span<const int> durations, int speaker_index) const {
  ad::Var frames = length_regulate(hidden_prosody, durations);
  const Mat spk = broadcast(speaker(speaker_index).one_hot, frames.rows());
  return ad::concat_cols({frames, ad::constant(spk)});
}

std::vector<int> Model::sample_durations(const Mat& hidden_prosody, int speaker_index,
                                         const cfm::ODESolverConfig& solver) const {
  if (solver.nfe < 1) throw InvalidInput("sample_durations: nfe must be >= 1");
  speaker(speaker_index);
  ad::NoGradGuard guard;
  std::mt19937_64 rng(solver.seed);
  const Mat x0 = cfm::standard_normal(hidden_prosody.rows(), 1, rng);
  const ad::Var hp = ad::constant(hidden_prosody);
  cfm::Field field = [&](const Mat& x, double t, const Mat&) {
    return duration_field(ad::constant(x), t, hp, speaker_index).value();
  };
  const Mat x1 = cfm::euler_solve(field, x0, hidden_prosody, solver);
  std::vector<int> d(static_cast<std::size_t>(x1.rows()));
  for (Eigen::Index i = 0; i < x1.rows(); ++i) {
    const double frames = std::round(std::max(std::expm1(x1(i, 0)), 0.0));
    d[static_cast<std::size_t>(i)] = static_cast<int>(std::clamp(frames, 1.0, 1e6));
  }
  return d;
}

Mat Model::decode_joint(const Mat& cond_frames, int speaker_index, const cfm::ODESolverConfig& solver) const {
  if (solver.nfe < 1) throw InvalidInput("decode_joint: nfe must be >= 1");
  if (cond_frames.cols() != config_.hidden) throw InvalidInput("decode_joint: conditioning width mismatch");
  ad::NoGradGuard guard;
  Mat cond(cond_frames.rows(), config_.hidden + config_.speakers);
  cond.leftCols(config_.hidden) = cond_frames;
  cond.rightCols(config_.speakers) = broadcast(speaker(speaker_index).one_hot, cond_frames.rows());
  std::mt19937_64 rng(solver.seed);
  const Mat x0 = cfm::standard_normal(cond_frames.rows(), config_.joint_dim(), rng);
  const ad::Var c = ad::constant(cond);
  cfm::Field field = [&](const Mat& x, double t, const Mat&) { return decoder_field(ad::constant(x), t, c).value(); };
  return cfm::euler_solve(field, x0, cond, solver);
}

std::pair<features::MelSpectrogram, features::MotionSequence> split_output(const Mat& joint, int n_mels,
                                                                           double frame_rate) {
  if (joint.cols() != n_mels + features::kMotionDim) {
    throw InvalidInput("split_output: joint width " + std::to_string(joint.cols()) + " != " +
                       std::to_string(n_mels + features::kMotionDim));
  }
  features::MelSpectrogram mel{joint.leftCols(n_mels), frame_rate};
  features::MotionSequence motion{joint.rightCols(features::kMotionDim), frame_rate};
  return {std::move(mel), std::move(motion)};
}

void save_model(const std::filesystem::path& dir, const Model& model) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json manifest;
  manifest["format"] = "magi-checkpoint/1";
  manifest["config"] = model.config().to_json();
  manifest["standardizer"] = model.standardizer().to_json();
  manifest["trained"] = model.trained();
  json params = json::array();
  std::ofstream blob(dir / "params.mtf", std::ios::binary);
  if (!blob) throw IoError("cannot write " + (dir / "params.mtf").string());
  const auto& store = model.params();
  for (std::size_t i = 0; i < store.size(); ++i) {
    const Mat& v = store.var(i).value();
    params.push_back({{"name", store.name(i)}, {"shape", {v.rows(), v.cols()}}});
    io::write_tensor(blob, io::from_matrix(v, io::DType::kFloat64));
  }
  manifest["parameters"] = std::move(params);
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << manifest.dump(1) << '\n';
}

std::unique_ptr<Model> load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open " + (dir / "model.json").string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError((dir / "model.json").string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "magi-checkpoint/1") throw IoError("unsupported checkpoint format");
  auto model = std::make_unique<Model>(ModelConfig::from_json(manifest.at("config")), 0);
  std::ifstream blob(dir / "params.mtf", std::ios::binary);
  if (!blob) throw IoError("cannot open " + (dir / "params.mtf").string());
  std::map<std::string, Mat> state;
  for (const auto& p : manifest.at("parameters")) {
    Mat m = io::to_matrix(io::read_tensor(blob));
    const auto shape = p.at("shape").get<std::vector<Eigen::Index>>();
    if (shape.size() != 2 || shape[0] != m.rows() || shape[1] != m.cols()) {
      throw ConfigError("checkpoint tensor shape disagrees with manifest for " + p.at("name").get<std::string>());
    }
    state.emplace(p.at("name").get<std::string>(), std::move(m));
  }
  model->params().load_state(state);
  model->set_standardizer(train::Standardizer::from_json(manifest.at("standardizer")));
  model->set_trained(manifest.value("trained", false));
  return model;
}

}  // namespace magi::net
