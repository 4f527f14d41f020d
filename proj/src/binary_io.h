// Copyright 2026 The hdemg Authors.
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

#ifndef HDEMG_SRC_BINARY_IO_H_
#define HDEMG_SRC_BINARY_IO_H_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "hdemg/errors.h"

namespace hdemg::io {

// Little-endian writer into a byte buffer.
class Writer {
 public:
  void Bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void U32(std::uint32_t v) { Le(v); }
  void U64(std::uint64_t v) { Le(v); }
  void F32(float v) { Le(std::bit_cast<std::uint32_t>(v)); }
  void F64(double v) { Le(std::bit_cast<std::uint64_t>(v)); }
  void Str(std::string_view s) {
    U32(static_cast<std::uint32_t>(s.size()));
    Bytes(s);
  }

  const std::vector<char>& buffer() const { return buf_; }

  void Save(const std::filesystem::path& path) const {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!os) throw Error("write failed for " + path.string());
  }

 private:
  template <typename T>
  void Le(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }

  std::vector<char> buf_;
};

// Little-endian reader with truncation checks.
class Reader {
 public:
  Reader(std::vector<char> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  static Reader FromFile(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return Reader(std::move(data), path.string());
  }

  std::string Bytes(std::size_t n) {
    Need(n);
    std::string s(data_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  std::uint32_t U32() { return Le<std::uint32_t>(); }
  std::uint64_t U64() { return Le<std::uint64_t>(); }
  float F32() { return std::bit_cast<float>(Le<std::uint32_t>()); }
  double F64() { return std::bit_cast<double>(Le<std::uint64_t>()); }
  std::string Str() { return Bytes(U32()); }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& origin() const { return origin_; }

  void Need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw LoadError(origin_ + ": truncated payload");
  }

 private:
  template <typename T>
  T Le() {
    Need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::vector<char> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace hdemg::io

#endif  // HDEMG_SRC_BINARY_IO_H_
