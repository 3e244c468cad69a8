// Copyright (c) 2026 The cuctts Authors
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

// Tensor archive: a little-endian binary container of named arrays with
// embedded shapes. Feature files, context caches, mel interchange files and
// checkpoints all use it.
//
//   "CUCTARCH" u32 version u32 count
//   repeated: u32 name_len, name bytes, u8 dtype, u32 ndim, u64 dims[ndim], data
//
// dtype: 0 = float32, 1 = int32, 2 = float64, 3 = utf-8 string (dims = {bytes}).

#ifndef CUCTTS_ARCHIVE_HPP_
#define CUCTTS_ARCHIVE_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "cuctts/autograd.hpp"

namespace cuctts::io {

static_assert(std::endian::native == std::endian::little, "archive format assumes little-endian hosts");

enum class DType : std::uint8_t { kFloat32 = 0, kInt32 = 1, kFloat64 = 2, kString = 3 };

struct ArchiveEntry {
  DType dtype = DType::kFloat32;
  std::vector<std::uint64_t> shape;
  std::vector<char> bytes;

  std::size_t elements() const {
    std::size_t n = 1;
    for (auto d : shape) n *= static_cast<std::size_t>(d);
    return n;
  }
};

class TensorArchive {
 public:
  void put_f32(const std::string& name, const Matrix<float>& m) {
    put_raw(name, DType::kFloat32, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
            m.data(), sizeof(float) * static_cast<std::size_t>(m.size()));
  }
  void put_f64(const std::string& name, const Matrix<double>& m) {
    put_raw(name, DType::kFloat64, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
            m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void put_f32_vec(const std::string& name, const std::vector<float>& v) {
    put_raw(name, DType::kFloat32, {v.size()}, v.data(), sizeof(float) * v.size());
  }
  void put_i32_vec(const std::string& name, const std::vector<int>& v) {
    static_assert(sizeof(int) == 4);
    put_raw(name, DType::kInt32, {v.size()}, v.data(), sizeof(int) * v.size());
  }
  void put_string(const std::string& name, const std::string& s) {
    put_raw(name, DType::kString, {s.size()}, s.data(), s.size());
  }

  /// Stores a matrix in its native precision.
  template <typename S>
  void put_matrix(const std::string& name, const Matrix<S>& m) {
    if constexpr (std::is_same_v<S, float>) {
      put_f32(name, m);
    } else {
      put_f64(name, m);
    }
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const ArchiveEntry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw std::out_of_range("archive has no entry '" + name + "'");
    return it->second;
  }
  const std::map<std::string, ArchiveEntry>& entries() const { return entries_; }

  Matrix<float> get_f32(const std::string& name) const {
    const auto& e = expect(name, DType::kFloat32, 2);
    Matrix<float> m(static_cast<Eigen::Index>(e.shape[0]), static_cast<Eigen::Index>(e.shape[1]));
    std::memcpy(m.data(), e.bytes.data(), e.bytes.size());
    return m;
  }
  Matrix<double> get_f64(const std::string& name) const {
    const auto& e = expect(name, DType::kFloat64, 2);
    Matrix<double> m(static_cast<Eigen::Index>(e.shape[0]), static_cast<Eigen::Index>(e.shape[1]));
    std::memcpy(m.data(), e.bytes.data(), e.bytes.size());
    return m;
  }
  template <typename S>
  Matrix<S> get_matrix(const std::string& name) const {
    const auto& e = entry(name);
    if (e.dtype == DType::kFloat32) {
      if constexpr (std::is_same_v<S, float>) return get_f32(name);
      else return get_f32(name).template cast<S>();
    }
    if constexpr (std::is_same_v<S, double>) return get_f64(name);
    else return get_f64(name).template cast<S>();
  }
  std::vector<float> get_f32_vec(const std::string& name) const {
    const auto& e = expect(name, DType::kFloat32, 1);
    std::vector<float> v(e.elements());
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
  }
  std::vector<int> get_i32_vec(const std::string& name) const {
    const auto& e = expect(name, DType::kInt32, 1);
    std::vector<int> v(e.elements());
    std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
    return v;
  }
  std::string get_string(const std::string& name) const {
    const auto& e = expect(name, DType::kString, 1);
    return std::string(e.bytes.begin(), e.bytes.end());
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os.write("CUCTARCH", 8);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(entries_.size()));
    for (const auto& [name, e] : entries_) {
      write_u32(os, static_cast<std::uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
      const auto dt = static_cast<std::uint8_t>(e.dtype);
      os.write(reinterpret_cast<const char*>(&dt), 1);
      write_u32(os, static_cast<std::uint32_t>(e.shape.size()));
      for (auto d : e.shape) os.write(reinterpret_cast<const char*>(&d), 8);
      os.write(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
    }
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }

  static TensorArchive load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "CUCTARCH", 8) != 0)
      throw std::runtime_error(path.string() + ": not a tensor archive");
    const auto version = read_u32(is);
    if (version != 1) throw std::runtime_error(path.string() + ": unsupported archive version");
    const auto count = read_u32(is);
    TensorArchive a;
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto len = read_u32(is);
      std::string name(len, '\0');
      is.read(name.data(), len);
      std::uint8_t dt = 0;
      is.read(reinterpret_cast<char*>(&dt), 1);
      if (dt > 3) throw std::runtime_error(path.string() + ": bad dtype for " + name);
      ArchiveEntry e;
      e.dtype = static_cast<DType>(dt);
      e.shape.resize(read_u32(is));
      for (auto& d : e.shape) is.read(reinterpret_cast<char*>(&d), 8);
      e.bytes.resize(e.elements() * width(e.dtype));
      is.read(e.bytes.data(), static_cast<std::streamsize>(e.bytes.size()));
      if (!is) throw std::runtime_error(path.string() + ": truncated at entry " + name);
      a.entries_[name] = std::move(e);
    }
    return a;
  }

 private:
  static std::size_t width(DType d) {
    switch (d) {
      case DType::kFloat32:
      case DType::kInt32:
        return 4;
      case DType::kFloat64:
        return 8;
      case DType::kString:
        return 1;
    }
    return 1;
  }
  static void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw std::runtime_error("truncated archive");
    return v;
  }

  void put_raw(const std::string& name, DType dt, std::vector<std::uint64_t> shape, const void* data,
               std::size_t nbytes) {
    ArchiveEntry e;
    e.dtype = dt;
    e.shape = std::move(shape);
    e.bytes.resize(nbytes);
    if (nbytes) std::memcpy(e.bytes.data(), data, nbytes);
    entries_[name] = std::move(e);
  }

  const ArchiveEntry& expect(const std::string& name, DType dt, std::size_t ndim) const {
    const auto& e = entry(name);
    if (e.dtype != dt || e.shape.size() != ndim)
      throw std::runtime_error("archive entry '" + name + "' has unexpected type or rank");
    return e;
  }

  std::map<std::string, ArchiveEntry> entries_;
};

}  // namespace cuctts::io

#endif  // CUCTTS_ARCHIVE_HPP_
