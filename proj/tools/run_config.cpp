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

#include "run_config.hpp"

#include "magi/common.hpp"
#include "magi/datapipe.hpp"
#include "magi/net.hpp"
#include "magi/train.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace magi::cli {

namespace {

using nlohmann::json;

const std::set<std::string>& path_keys() {
  static const std::set<std::string> keys = {"out_dir",    "pretrain_manifest", "finetune_manifest",
                                             "checkpoint_dir", "checkpoint",    "out",
                                             "ref_file",   "hyp_file",          "responses",
                                             "report"};
  return keys;
}

json parse_flag_value(const std::string& key, const std::string& raw, const json& current) {
  if (current.is_string()) return raw;
  if (current.is_array()) {
    try {
      json v = json::parse(raw);
      if (v.is_array()) return v;
    } catch (const json::exception&) {
    }
    json out = json::array();
    std::istringstream in(raw);
    std::string item;
    while (std::getline(in, item, ',')) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }
  try {
    json v = json::parse(raw);
    if (current.is_boolean() != v.is_boolean() || current.is_number() != v.is_number()) {
      throw ConfigError("--" + key + ": expected a value like " + current.dump());
    }
    return v;
  } catch (const json::exception&) {
    throw ConfigError("--" + key + ": cannot parse '" + raw + "'");
  }
}

}  // namespace

json mock_defaults() {
  return {{"text_chars", 250},
          {"seconds_per_char", 0.08},
          {"tokens_per_char", 1.0},
          {"duration_overrides", json::object()},
          {"token_overrides", json::object()},
          {"align_fail", json::array()},
          {"drop_fillers", false},
          {"gesture_mode", "pulses"},
          {"gesture_fps", 120.0}};
}

RunConfig::RunConfig() {
  data_["model"] = net::ModelConfig{}.to_json();
  data_["train"] = train::TrainConfig{}.to_json();
  data_["pipeline"] = datapipe::PipelineConfig{}.to_json();
  data_["mock"] = mock_defaults();
  data_["data"] = {{"pretrain_manifest", ""}, {"finetune_manifest", ""}, {"checkpoint_dir", "checkpoints"}};
  data_["synth"] = {{"text", ""},        {"speaker", 0},     {"pitch_scale", 1.0}, {"energy_scale", 1.0},
                    {"nfe_joint", 100},  {"nfe_dur", 10},    {"checkpoint", ""},   {"out", "synth_out"},
                    {"seed", 0}};
  data_["eval"] = {{"ref", ""},       {"hyp", ""},          {"ref_file", ""},  {"hyp_file", ""},
                   {"responses", ""}, {"scale", "mos_1_5"}, {"reference", ""}, {"report", ""}};
  data_["verify"] = {{"mas_cases", 1000}, {"cfm_draws", 10000}, {"wer_max_len", 5}, {"gradients", true},
                     {"seed", 0}};
}

void RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": top level must be an object");
  const auto base = path.parent_path();
  for (auto sec = j.begin(); sec != j.end(); ++sec) {
    if (!data_.contains(sec.key())) throw ConfigError(path.string() + ": unknown section '" + sec.key() + "'");
    if (!sec.value().is_object()) throw ConfigError(path.string() + ": section '" + sec.key() + "' must be an object");
    json& target = data_[sec.key()];
    for (auto it = sec.value().begin(); it != sec.value().end(); ++it) {
      if (!target.contains(it.key())) {
        throw ConfigError(path.string() + ": unknown key '" + sec.key() + "." + it.key() + "'");
      }
      json v = it.value();
      if (path_keys().count(it.key()) && v.is_string() && !v.get<std::string>().empty()) {
        const std::filesystem::path p = v.get<std::string>();
        if (p.is_relative()) v = (base / p).lexically_normal().string();
      }
      target[it.key()] = std::move(v);
    }
  }
}

void RunConfig::add_flags(CLI::App& app, const std::vector<std::string>& sections) {
  std::map<std::string, std::vector<std::string>> owners;
  std::map<std::string, std::string> help;
  for (const auto& name : sections) {
    for (auto it = data_.at(name).begin(); it != data_.at(name).end(); ++it) {
      if (it.value().is_object()) continue;
      owners[it.key()].push_back(name);
      help[it.key()] += (help[it.key()].empty() ? "" : ", ") + name + "." + it.key();
    }
  }
  for (const auto& [key, secs] : owners) {
    app.add_option_function<std::string>(
        "--" + key, [this, key = key, secs = secs](const std::string& v) { pending_.push_back({secs, key, v}); },
        "overrides " + help[key]);
  }
}

void RunConfig::apply_flags() {
  for (const auto& o : pending_) {
    for (const auto& sec : o.sections) data_[sec][o.key] = parse_flag_value(o.key, o.raw, data_[sec][o.key]);
  }
  pending_.clear();
}

const json& RunConfig::section(const std::string& name) const { return data_.at(name); }

std::filesystem::path RunConfig::path(const std::string& section, const std::string& key) const {
  return data_.at(section).at(key).get<std::string>();
}

}  // namespace magi::cli
