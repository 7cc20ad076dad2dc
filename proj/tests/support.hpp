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

// Shared fixtures for the test binaries.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "organseg/raster.hpp"
#include "organseg/rng.hpp"

namespace organseg::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl =
        (std::filesystem::temp_directory_path() / "organseg-XXXXXX").string();
    if (mkdtemp(tmpl.data()) == nullptr) std::abort();
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline RasterImage random_image(int w, int h, Rng& rng) {
  RasterImage img(w, h);
  for (auto& v : img.bytes()) v = static_cast<std::uint8_t>(rng.uniform_int(0, 255));
  return img;
}

inline BitMask random_mask(int w, int h, double p, Rng& rng) {
  BitMask m(w, h);
  for (auto& v : m.bits()) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

inline BitMask rect_mask(int w, int h, const Rect& r) {
  BitMask m(w, h);
  for (int y = r.y; y < r.bottom(); ++y)
    for (int x = r.x; x < r.right(); ++x) m.set(x, y);
  return m;
}

}  // namespace organseg::testing
