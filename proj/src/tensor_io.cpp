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

#include "magi/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace magi::io {

namespace {

constexpr char kMagic[8] = {'M', 'A', 'G', 'I', 'T', 'N', 'S', '1'};
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

static_assert(std::endian::native == std::endian::little, "MTF/1 I/O assumes a little-endian host");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("MTF/1: truncated tensor");
  return v;
}

}  // namespace

std::uint64_t Tensor::numel() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_tensor(std::ostream& out, const Tensor& t) {
  if (t.dims.size() > 255) throw InvalidInput("MTF/1: rank exceeds 255");
  if (t.numel() != t.data.size()) throw InvalidInput("MTF/1: dims do not match payload size");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dtype));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
  for (auto d : t.dims) put<std::uint64_t>(out, d);
  if (t.dtype == DType::kFloat32) {
    for (double v : t.data) put<float>(out, static_cast<float>(v));
  } else {
    for (double v : t.data) put<double>(out, v);
  }
  if (!out) throw IoError("MTF/1: write failed");
}

Tensor read_tensor(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("MTF/1: bad magic");
  Tensor t;
  const auto tag = get<std::uint8_t>(in);
  if (tag > 1) throw IoError("MTF/1: unknown dtype tag " + std::to_string(tag));
  t.dtype = static_cast<DType>(tag);
  const auto rank = get<std::uint8_t>(in);
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get<std::uint64_t>(in);
  const std::uint64_t n = t.numel();
  if (n > kMaxElements) throw IoError("MTF/1: tensor too large");
  t.data.resize(n);
  for (auto& v : t.data) v = t.dtype == DType::kFloat32 ? static_cast<double>(get<float>(in)) : get<double>(in);
  return t;
}

std::string encode_tensor(const Tensor& t) {
  std::ostringstream out(std::ios::binary);
  write_tensor(out, t);
  return out.str();
}

Tensor decode_tensor(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_tensor(in);
}

Tensor from_matrix(const Mat& m, DType dtype) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

Tensor from_vector(const std::vector<double>& v, DType dtype) {
  Tensor t;
  t.dtype = dtype;
  t.dims = {static_cast<std::uint64_t>(v.size())};
  t.data = v;
  return t;
}

Mat to_matrix(const Tensor& t) {
  Eigen::Index rows = 0, cols = 0;
  if (t.dims.size() == 2) {
    rows = static_cast<Eigen::Index>(t.dims[0]);
    cols = static_cast<Eigen::Index>(t.dims[1]);
  } else if (t.dims.size() == 1) {
    rows = static_cast<Eigen::Index>(t.dims[0]);
    cols = 1;
  } else {
    throw InvalidInput("MTF/1: expected rank 1 or 2, got " + std::to_string(t.dims.size()));
  }
  Mat m(rows, cols);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

void save_matrix(const std::filesystem::path& path, const Mat& m, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_tensor(out, from_matrix(m, dtype));
}

Mat load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  try {
    return to_matrix(read_tensor(in));
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

void save_vector(const std::filesystem::path& path, const std::vector<double>& v, DType dtype) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_tensor(out, from_vector(v, dtype));
}

std::vector<double> load_vector(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());
  Tensor t = read_tensor(in);
  if (t.dims.size() != 1) throw IoError(path.string() + ": expected rank-1 tensor");
  return t.data;
}

}  // namespace magi::io
