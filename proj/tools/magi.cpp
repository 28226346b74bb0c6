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

// magi: command-line entry point.
//
//   magi pipeline run   build a synthetic corpus with the mock backends
//   magi train          pretrain on one manifest, fine-tune on another
//   magi synth          text -> mel + motion files
//   magi eval wer       word error rate of hypothesis text against a reference
//   magi eval stats     listening-test summary table and t-tests
//   magi verify         oracle suites
//
// Every run ends with one JSON summary line on stdout. Exit codes: 0 success,
// 1 invalid input or configuration, 2 numerical failure.

#include "run_config.hpp"

#include "magi/datapipe.hpp"
#include "magi/eval.hpp"
#include "magi/net.hpp"
#include "magi/synth.hpp"
#include "magi/text.hpp"
#include "magi/train.hpp"
#include "oracles.hpp"

#include <fstream>
#include <iostream>

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using magi::cli::RunConfig;

void summary(json j) { std::cout << j.dump() << std::endl; }

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw magi::IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

magi::datapipe::PipelineBackends make_mock_backends(const json& mock, const magi::datapipe::PipelineConfig& pc) {
  using namespace magi::datapipe;
  PipelineBackends b;
  auto text = std::make_shared<MockTextGenerator>(mock.at("text_chars").get<std::size_t>());
  auto speech = std::make_shared<MockSpeechSynthesizer>();
  speech->seconds_per_char = mock.at("seconds_per_char").get<double>();
  speech->tokens_per_char = mock.at("tokens_per_char").get<double>();
  const json& dur = mock.at("duration_overrides");
  const json& tok = mock.at("token_overrides");
  if (!dur.empty() || !tok.empty()) {
    // Overrides are keyed by phrase index; the mock synthesizer keys them by text.
    const auto phrases = generate_texts(pc.n_phrases, pc.style_examples, *text, pc.seed, pc.max_attempts);
    auto phrase_at = [&](const std::string& key) -> const std::string& {
      std::size_t idx = 0;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw magi::ConfigError("mock overrides: key '" + key + "' is not a phrase index");
      }
      if (idx >= phrases.size()) throw magi::ConfigError("mock overrides: phrase " + key + " out of range");
      return phrases[idx];
    };
    for (auto it = dur.begin(); it != dur.end(); ++it) speech->duration_overrides[phrase_at(it.key())] = it.value().get<double>();
    for (auto it = tok.begin(); it != tok.end(); ++it) speech->token_overrides[phrase_at(it.key())] = it.value().get<int>();
  }
  auto aligner = std::make_shared<MockAligner>();
  for (const auto& id : mock.at("align_fail")) aligner->failing.insert(id.get<std::string>());
  const std::string mode = mock.at("gesture_mode").get<std::string>();
  if (mode != "pulses" && mode != "zero") throw magi::ConfigError("mock.gesture_mode must be 'pulses' or 'zero'");
  b.text = text;
  b.speech = speech;
  b.recognizer = std::make_shared<MockRecognizer>(mock.at("drop_fillers").get<bool>());
  b.aligner = aligner;
  b.gestures = std::make_shared<MockGestureGenerator>(
      mode == "zero" ? MockGestureGenerator::Mode::kZero : MockGestureGenerator::Mode::kOnsetPulses,
      mock.at("gesture_fps").get<double>());
  return b;
}

json run_pipeline_cmd(const RunConfig& cfg) {
  const auto pc = magi::datapipe::PipelineConfig::from_json(cfg.section("pipeline"));
  json mock = cfg.section("mock");
  const auto result = magi::datapipe::run_pipeline(pc, make_mock_backends(mock, pc));
  json j = {{"command", "pipeline run"}, {"status", "ok"}, {"manifest", result.manifest_path.string()}};
  j.update(result.stats.to_json());
  return j;
}

json run_train_cmd(const RunConfig& cfg) {
  const auto mc = magi::net::ModelConfig::from_json(cfg.section("model"));
  const auto tc = magi::train::TrainConfig::from_json(cfg.section("train"));
  std::vector<magi::features::FeatureBundle> pretrain, finetune;
  if (const auto p = cfg.path("data", "pretrain_manifest"); !p.empty()) pretrain = magi::datapipe::load_bundles(p);
  if (const auto p = cfg.path("data", "finetune_manifest"); !p.empty()) finetune = magi::datapipe::load_bundles(p);
  const fs::path dir = cfg.path("data", "checkpoint_dir");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw magi::IoError("cannot create " + dir.string() + ": " + ec.message());
  magi::train::ScheduleOptions opts;
  opts.metrics_path = dir / "metrics.jsonl";
  opts.checkpoint_dir = dir;
  fs::remove(*opts.metrics_path, ec);
  magi::net::Model model(mc, tc.seed);
  const auto result = magi::train::run_schedule(model, pretrain, finetune, tc, opts);
  auto losses = [](const magi::train::LossReport& r) {
    return json{{"total", r.total}, {"cfm", r.cfm},       {"duration", r.duration},
                {"pitch", r.pitch}, {"energy", r.energy}, {"prior", r.prior}};
  };
  return {{"command", "train"},
          {"status", "ok"},
          {"steps", result.log.size()},
          {"pretrain_utterances", pretrain.size()},
          {"finetune_utterances", finetune.size()},
          {"parameters", model.parameter_count()},
          {"final_pretrain", losses(result.final_pretrain)},
          {"final_finetune", losses(result.final_finetune)},
          {"checkpoint", (dir / "final").string()},
          {"metrics", opts.metrics_path->string()}};
}

json run_synth_cmd(const RunConfig& cfg) {
  const json& s = cfg.section("synth");
  const auto seed = s.at("seed").get<std::uint64_t>();
  std::unique_ptr<magi::net::Model> model;
  const fs::path ckpt = cfg.path("synth", "checkpoint");
  if (ckpt.empty()) {
    std::cerr << "magi: warning: no --checkpoint given; using an untrained model initialised from seed " << seed
              << "\n";
    model = std::make_unique<magi::net::Model>(magi::net::ModelConfig::from_json(cfg.section("model")), seed);
  } else {
    model = magi::net::load_model(ckpt);
  }
  magi::synth::ProsodyControls controls{s.at("pitch_scale").get<double>(), s.at("energy_scale").get<double>()};
  magi::synth::SynthesisOptions opts;
  opts.nfe_joint = s.at("nfe_joint").get<int>();
  opts.nfe_dur = s.at("nfe_dur").get<int>();
  opts.allow_untrained = ckpt.empty();
  const auto result = magi::synth::synthesize(*model, s.at("text").get<std::string>(), s.at("speaker").get<int>(),
                                              controls, magi::synth::SynthesisSeeds::from(seed), opts);
  const fs::path out = cfg.path("synth", "out");
  magi::synth::export_result(result, out);
  return {{"command", "synth"},         {"status", "ok"},
          {"tokens", result.tokens.size()}, {"frames", result.num_frames()},
          {"seconds", static_cast<double>(result.num_frames()) / result.mel.frame_rate},
          {"trained", model->trained()},  {"out", out.string()}};
}

json run_wer_cmd(const RunConfig& cfg) {
  const json& e = cfg.section("eval");
  std::vector<std::string> refs, hyps;
  if (const auto rf = cfg.path("eval", "ref_file"); !rf.empty()) {
    const auto hf = cfg.path("eval", "hyp_file");
    if (hf.empty()) throw magi::ConfigError("eval wer: --ref_file needs --hyp_file");
    refs = read_lines(rf);
    hyps = read_lines(hf);
    if (refs.size() != hyps.size()) throw magi::InvalidInput("eval wer: reference and hypothesis line counts differ");
  } else {
    refs.push_back(e.at("ref").get<std::string>());
    hyps.push_back(e.at("hyp").get<std::string>());
  }
  std::size_t edits = 0, words = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto r = magi::text::normalize_words(refs[i]);
    const auto h = magi::text::normalize_words(hyps[i]);
    if (r.empty()) throw magi::InvalidInput("eval wer: empty reference on line " + std::to_string(i + 1));
    edits += magi::eval::edit_distance(r, h);
    words += r.size();
  }
  return {{"command", "eval wer"},
          {"status", "ok"},
          {"wer", static_cast<double>(edits) / static_cast<double>(words)},
          {"edits", edits},
          {"reference_words", words},
          {"lines", refs.size()}};
}

json run_stats_cmd(const RunConfig& cfg) {
  const json& e = cfg.section("eval");
  const auto path = cfg.path("eval", "responses");
  if (path.empty()) throw magi::ConfigError("eval stats: --responses is required");
  const auto scale = magi::eval::parse_scale(e.at("scale").get<std::string>());
  const auto rows = magi::eval::read_responses(path);
  const auto sets = magi::eval::group_responses(rows, scale);
  std::optional<std::string> reference;
  if (const auto r = e.at("reference").get<std::string>(); !r.empty()) reference = r;
  const std::string table = magi::eval::report_table(sets, reference);
  std::cout << table;
  if (const auto out = cfg.path("eval", "report"); !out.empty()) {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f || !(f << table)) throw magi::IoError("cannot write " + out.string());
  }
  json conditions = json::array();
  for (const auto& s : sets) {
    const auto sm = magi::eval::summarize(s);
    conditions.push_back({{"condition", s.condition}, {"n", sm.n}, {"mean", sm.mean}, {"half_width", sm.half_width},
                          {"formatted", sm.format()}});
  }
  return {{"command", "eval stats"}, {"status", "ok"}, {"scale", magi::eval::scale_name(scale)},
          {"conditions", conditions}};
}

json run_verify_cmd(const RunConfig& cfg, int& exit_code) {
  namespace o = magi::oracles;
  const json& v = cfg.section("verify");
  const auto seed = v.at("seed").get<std::uint64_t>();
  std::vector<o::SuiteResult> results;
  results.push_back(o::mas_suite(v.at("mas_cases").get<int>(), seed));
  results.push_back(o::cfm_identity_suite(v.at("cfm_draws").get<int>(), seed + 1));
  results.push_back(o::euler_suite());
  results.push_back(o::wer_suite(v.at("wer_max_len").get<int>()));
  if (v.at("gradients").get<bool>()) {
    results.push_back(o::linear_gradient_suite(seed + 2));
    results.push_back(o::model_gradient_suite(seed + 3));
  }
  bool all = true;
  json suites = json::array();
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    suites.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}});
    all = all && r.passed;
  }
  exit_code = all ? 0 : 1;
  return {{"command", "verify"}, {"status", all ? "ok" : "failed"}, {"passed", all}, {"suites", suites}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"magi: joint speech and gesture synthesis"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string config_path;
  std::string command = "magi";

  auto with_config = [&](CLI::App* sub, const std::vector<std::string>& sections) {
    sub->add_option("--config", config_path, "JSON run configuration");
    cfg.add_flags(*sub, sections);
  };
  auto* pipeline = app.add_subcommand("pipeline", "Synthetic corpus pipeline");
  pipeline->require_subcommand(1);
  auto* pipeline_run = pipeline->add_subcommand("run", "Run every stage with the mock backends");
  with_config(pipeline_run, {"pipeline", "mock"});
  auto* train = app.add_subcommand("train", "Pretrain then fine-tune");
  with_config(train, {"model", "train", "data"});
  auto* synth = app.add_subcommand("synth", "Synthesize mel and motion from text");
  with_config(synth, {"model", "synth"});
  auto* eval = app.add_subcommand("eval", "Objective evaluation");
  eval->require_subcommand(1);
  auto* wer = eval->add_subcommand("wer", "Word error rate");
  with_config(wer, {"eval"});
  auto* stats = eval->add_subcommand("stats", "Listening-test statistics");
  with_config(stats, {"eval"});
  auto* verify = app.add_subcommand("verify", "Run the oracle suites");
  with_config(verify, {"verify"});

  int exit_code = 0;
  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      app.exit(e);
      throw magi::InvalidInput(e.what());
    }
    if (!config_path.empty()) cfg.load(config_path);
    cfg.apply_flags();
    json result;
    if (*pipeline_run) {
      command = "pipeline run";
      result = run_pipeline_cmd(cfg);
    } else if (*train) {
      command = "train";
      result = run_train_cmd(cfg);
    } else if (*synth) {
      command = "synth";
      result = run_synth_cmd(cfg);
    } else if (*wer) {
      command = "eval wer";
      result = run_wer_cmd(cfg);
    } else if (*stats) {
      command = "eval stats";
      result = run_stats_cmd(cfg);
    } else if (*verify) {
      command = "verify";
      result = run_verify_cmd(cfg, exit_code);
    }
    summary(result);
    return exit_code;
  } catch (const magi::Error& e) {
    std::cerr << "magi: error: " << e.what() << "\n";
    summary({{"command", command}, {"status", "error"}, {"exit_code", e.exit_code()}, {"message", e.what()}});
    return e.exit_code();
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "magi: error: configuration: " << e.what() << "\n";
    summary({{"command", command}, {"status", "error"}, {"exit_code", 1}, {"message", e.what()}});
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "magi: error: " << e.what() << "\n";
    summary({{"command", command}, {"status", "error"}, {"exit_code", 1}, {"message", e.what()}});
    return 1;
  }
}
