// Copyright 2026 The cvse Authors.
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

#ifndef CVSE_SRC_BINARY_IO_HPP_
#define CVSE_SRC_BINARY_IO_HPP_

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "cvse/error.hpp"

namespace cvse::detail {

// Binary container buffers: little-endian fields, CRC-32 of everything
// before the 4-byte trailer.

class ByteWriter {
 public:
  void put_bytes(const void* data, std::size_t len) {
    buffer_.append(static_cast<const char*>(data), len);
  }
  void put_u16(std::uint16_t v) { put_le(v); }
  void put_u32(std::uint32_t v) { put_le(v); }
  void put_u64(std::uint64_t v) { put_le(v); }
  void put_f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    put_le(bits);
  }
  void put_string(const std::string& s) { buffer_.append(s); }

  // Appends the CRC-32 trailer and writes the file in one shot.
  void write_with_crc(const std::filesystem::path& path) {
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(buffer_.data()),
                static_cast<uInt>(buffer_.size())));
    put_u32(crc);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out) throw DataError("failed writing '" + path.string() + "'");
  }

  const std::string& buffer() const { return buffer_; }

 private:
  template <typename T>
  void put_le(T v) {
    char bytes[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    buffer_.append(bytes, sizeof(T));
  }

  std::string buffer_;
};

class ByteReader {
 public:
  ByteReader(std::string data, std::string label)
      : data_(std::move(data)), label_(std::move(label)) {}

  // Loads a whole file and validates its CRC-32 trailer; the returned reader
  // covers the content without the trailer.
  static ByteReader load_checked(const std::filesystem::path& path, const std::string& label) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(label + ": cannot open '" + path.string() + "'");
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() < 4) throw DataError(label + ": file '" + path.string() + "' is truncated");
    const std::size_t body = data.size() - 4;
    std::uint32_t stored = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[body + i])) << (8 * i);
    }
    std::uint32_t actual = static_cast<std::uint32_t>(::crc32(
        ::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data.data()),
        static_cast<uInt>(body)));
    if (stored != actual) {
      throw DataError(label + ": checksum mismatch in '" + path.string() + "'");
    }
    data.resize(body);
    return ByteReader(std::move(data), label);
  }

  std::string get_bytes(std::size_t len) {
    need(len);
    std::string out = data_.substr(pos_, len);
    pos_ += len;
    return out;
  }
  std::uint16_t get_u16() { return get_le<std::uint16_t>(); }
  std::uint32_t get_u32() { return get_le<std::uint32_t>(); }
  std::uint64_t get_u64() { return get_le<std::uint64_t>(); }
  double get_f64() {
    std::uint64_t bits = get_le<std::uint64_t>();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t len) {
    if (data_.size() - pos_ < len) throw DataError(label_ + ": file is truncated");
  }

  template <typename T>
  T get_le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string data_;
  std::string label_;
  std::size_t pos_ = 0;
};

}  // namespace cvse::detail

#endif  // CVSE_SRC_BINARY_IO_HPP_
