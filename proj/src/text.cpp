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

#include "magi/text.hpp"

#include "magi/common.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

namespace magi::text {

namespace {

std::vector<UChar32> decode(std::string_view s) {
  std::vector<UChar32> out;
  int32_t i = 0;
  const auto n = static_cast<int32_t>(s.size());
  while (i < n) {
    UChar32 c;
    U8_NEXT(reinterpret_cast<const uint8_t*>(s.data()), i, n, c);
    out.push_back(c < 0 ? 0xFFFD : c);
  }
  return out;
}

void append_utf8(std::string& out, UChar32 c) {
  uint8_t buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool err = false;
  U8_APPEND(buf, len, U8_MAX_LENGTH, c, err);
  if (!err) out.append(reinterpret_cast<const char*>(buf), static_cast<std::size_t>(len));
}

bool is_space(UChar32 c) { return u_isUWhiteSpace(c) != 0; }

}  // namespace

std::vector<std::string> normalize_words(std::string_view input) {
  const auto cps = decode(input);
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < cps.size()) {
    while (i < cps.size() && is_space(cps[i])) ++i;
    std::size_t j = i;
    while (j < cps.size() && !is_space(cps[j])) ++j;
    std::size_t a = i, b = j;
    while (a < b && u_ispunct(cps[a])) ++a;
    while (b > a && u_ispunct(cps[b - 1])) --b;
    if (a < b) {
      std::string w;
      for (std::size_t k = a; k < b; ++k) append_utf8(w, u_tolower(cps[k]));
      words.push_back(std::move(w));
    }
    i = j;
  }
  return words;
}

const std::string& symbols() {
  static const std::string s = " abcdefghijklmnopqrstuvwxyz0123456789',.?!-";
  return s;
}

int vocab_size() { return static_cast<int>(symbols().size()); }

std::vector<int> tokenize(std::string_view input) {
  const auto& sym = symbols();
  std::vector<int> ids;
  bool pending_space = false;
  for (UChar32 c : decode(input)) {
    if (is_space(c)) {
      pending_space = !ids.empty();
      continue;
    }
    const UChar32 lc = u_tolower(c);
    if (lc > 0x7F) continue;
    const auto pos = sym.find(static_cast<char>(lc), 1);
    if (pos == std::string::npos) continue;
    if (pending_space) ids.push_back(0);
    pending_space = false;
    ids.push_back(static_cast<int>(pos));
  }
  if (ids.empty()) throw InvalidInput("text is empty after normalization");
  return ids;
}

}  // namespace magi::text
