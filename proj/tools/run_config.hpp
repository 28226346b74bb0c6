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

// Run configuration for the `magi` command line: one JSON document with a
// section per concern. Every scalar or list key can also be set by a
// long-form flag of the same name.
#pragma once

#include "CLI11.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace magi::cli {

class RunConfig {
 public:
  RunConfig();

  /// Merges a config file. Unknown sections or keys raise ConfigError; path
  /// keys are resolved against the file's directory.
  void load(const std::filesystem::path& path);

  /// Registers one string flag per overridable key of `sections`.
  void add_flags(CLI::App& app, const std::vector<std::string>& sections);
  /// Applies the flags given on the command line.
  void apply_flags();

  const nlohmann::json& section(const std::string& name) const;
  std::filesystem::path path(const std::string& section, const std::string& key) const;

 private:
  nlohmann::json data_;
  struct Override {
    std::vector<std::string> sections;
    std::string key;
    std::string raw;
  };
  std::vector<Override> pending_;
};

/// Defaults for the mock backends section.
nlohmann::json mock_defaults();

}  // namespace magi::cli
