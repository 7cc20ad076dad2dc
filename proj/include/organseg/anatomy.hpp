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

// Anatomical priors: fixed per-organ bounding-box sizes and the region of
// admissible top-left corners, plus the exhaustive candidate scan over that
// region.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "organseg/organs.hpp"
#include "organseg/raster.hpp"

namespace organseg::anatomy {

// Admissible top-left corners: first coordinate (column) in [amin, amax],
// second (row) in [bmin, bmax], canonical-frame pixels.
struct PlausibleRegion {
  int amin = 0, bmin = 0, amax = 0, bmax = 0;
  friend bool operator==(const PlausibleRegion&,
                         const PlausibleRegion&) = default;
};

struct OrganSpec {
  OrganId organ = OrganId::kBrain;
  int box_w = 1, box_h = 1;
  PlausibleRegion region;
  ColorCategory category = ColorCategory::kBackground;
  friend bool operator==(const OrganSpec&, const OrganSpec&) = default;
};

// Exactly one spec per organ, in insertion order.
class Registry {
 public:
  // Throws ValidationError on duplicates, missing organs or out-of-frame
  // values.
  explicit Registry(std::vector<OrganSpec> specs);

  const OrganSpec& at(OrganId id) const;
  std::size_t size() const { return specs_.size(); }
  auto begin() const { return specs_.begin(); }
  auto end() const { return specs_.end(); }

  friend bool operator==(const Registry&, const Registry&) = default;

 private:
  std::vector<OrganSpec> specs_;
};

// The published per-organ priors for the 2000 x 1000 frame.
Registry builtin_registry();

// One line per organ:
//   organ=Brain box=400x400 region=0,400:120,630 category=CAT1
// '#' starts a comment, blank lines are ignored.
Registry parse_registry(std::string_view text);
std::string serialize_registry(const Registry& registry);

// Annotated top-left corner of a true bounding box.
struct Corner {
  double a = 0.0, b = 0.0;
};

// mean +- 3 sample standard deviations per axis; the lower bound is rounded
// down and the upper bound up to a multiple of 10, then clamped to the frame.
PlausibleRegion plausible_region_from_stats(std::span<const Corner> corners);

// Clips a box anchored at (x, y) to the canonical frame. The corner is first
// pulled to at most (width - 1, height - 1) so the result is never empty.
Rect clip_to_frame(int x, int y, int w, int h);

// Scan-order candidate boxes: per axis min, min + stride, ... <= max, plus max
// itself when off-grid; columns vary fastest. Boxes are clipped to the frame
// and duplicates dropped. Throws ArgumentError when stride < 1.
std::vector<Rect> candidate_boxes(const PlausibleRegion& region, int box_w,
                                  int box_h, int stride);

}  // namespace organseg::anatomy
