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

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace magi::text {

/// Whitespace split, strip leading/trailing Unicode punctuation from each
/// word, lower-case, drop words left empty.
std::vector<std::string> normalize_words(std::string_view text);

/// Character-level symbol inventory. Id 0 is the word-boundary symbol.
const std::string& symbols();
int vocab_size();

/// Lower-cases, maps whitespace runs to a single boundary symbol and drops
/// characters outside the inventory. Throws InvalidInput when nothing is left.
std::vector<int> tokenize(std::string_view text);

}  // namespace magi::text
