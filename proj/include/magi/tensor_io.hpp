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

// "MTF/1" tensor files: 8-byte magic `MAGITNS1`, 1-byte dtype tag, 1-byte
// rank, rank little-endian u64 dims, then the row-major payload.
// dtype 0 = float32 LE (features, exports); dtype 1 = float64 LE (checkpoints).

#pragma once

#include "magi/common.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace magi::io {

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct Tensor {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> dims;
  std::vector<double> data;  // widened for float32 payloads

  std::uint64_t numel() const;
};

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes);

Tensor from_matrix(const Mat& m, DType dtype = DType::kFloat32);
Tensor from_vector(const std::vector<double>& v, DType dtype = DType::kFloat32);
/// Rank-2 tensors map directly; rank-1 tensors become a single column.
Mat to_matrix(const Tensor& t);

void save_matrix(const std::filesystem::path& path, const Mat& m, DType dtype = DType::kFloat32);
Mat load_matrix(const std::filesystem::path& path);
void save_vector(const std::filesystem::path& path, const std::vector<double>& v,
                 DType dtype = DType::kFloat32);
std::vector<double> load_vector(const std::filesystem::path& path);

}  // namespace magi::io
