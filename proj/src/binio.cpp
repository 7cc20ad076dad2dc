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

#include "organseg/binio.hpp"

#include <fstream>
#include <iterator>

#include "organseg/error.hpp"

namespace organseg::binio {

void Writer::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

Reader Reader::open(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw IoError("cannot open " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<char> buf{std::istreambuf_iterator<char>(in),
                        std::istreambuf_iterator<char>()};
  return Reader(std::move(buf), path.string());
}

void Reader::expect_magic(std::string_view magic) {
  if (buf_.size() - pos_ < magic.size() ||
      std::string_view(buf_.data() + pos_, magic.size()) != magic)
    throw FormatError(name_ + ": bad magic, expected " + std::string(magic));
  pos_ += magic.size();
}

std::uint32_t Reader::u32() {
  if (buf_.size() - pos_ < 4) throw FormatError(name_ + ": truncated file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i]))
         << (8 * i);
  pos_ += 4;
  return v;
}

void Reader::expect_end() {
  if (!at_end()) throw FormatError(name_ + ": trailing bytes after payload");
}

}  // namespace organseg::binio
