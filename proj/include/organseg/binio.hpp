// Copyright 2026 The OrganSeg Authors.
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

// Little-endian binary helpers for the model file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace organseg::binio {

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

  // Throws IoError.
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<char> buf_;
};

// Reads from an in-memory copy of a file; every read past the end throws
// FormatError naming `what`.
class Reader {
 public:
  // Throws IoError when the file cannot be read.
  static Reader open(const std::filesystem::path& path);

  void expect_magic(std::string_view magic);
  std::uint32_t u32();
  float f32() { return std::bit_cast<float>(u32()); }
  bool at_end() const { return pos_ == buf_.size(); }
  void expect_end();

 private:
  explicit Reader(std::vector<char> buf, std::string name)
      : buf_(std::move(buf)), name_(std::move(name)) {}

  std::vector<char> buf_;
  std::size_t pos_ = 0;
  std::string name_;
};

}  // namespace organseg::binio
