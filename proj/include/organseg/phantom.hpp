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

// Synthetic whole-body sections with exact ground truth. Organs are placed
// inside their plausible regions and painted in their category colors; small
// same-colored blobs are scattered around each organ's search area as
// distractors.

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "organseg/anatomy.hpp"
#include "organseg/organs.hpp"
#include "organseg/raster.hpp"

namespace organseg::phantom {

inline constexpr Rgb kBackgroundColor{10, 10, 10};
inline constexpr Rgb kBodyColor{90, 80, 90};

// Palette centroid of a color category; BACKGROUND maps to the body color.
Rgb palette(ColorCategory c);

struct PhantomParams {
  std::uint64_t seed = 42;
  int noise = 12;                  // per-channel uniform jitter, +-noise
  double placement_jitter = 1.0;   // fraction of each region's extent used
  std::array<double, 5> presence{1.0, 1.0, 1.0, 1.0, 1.0};
  double clutter_ratio = 0.6;      // distractor area / organ area
};

struct OrganTruth {
  OrganId organ = OrganId::kBrain;
  bool present = false;
  Rect box;      // registry box at the sampled corner, clipped to the frame
  BitMask mask;  // full frame
};

struct PhantomTruth {
  RasterImage image{kCanonicalWidth, kCanonicalHeight};
  std::vector<OrganTruth> organs;  // registry order
  BitMask clutter;                 // distractor pixels, full frame

  const OrganTruth& at(OrganId id) const;
};

// Throws ArgumentError on invalid params and ValidationError when no
// disjoint layout is found.
PhantomTruth generate_phantom(const PhantomParams& params,
                              const anatomy::Registry& registry);

// The same geometry after a raster augmentation draw: the image is resampled
// bilinearly, masks by nearest neighbour, boxes follow their corner.
PhantomTruth augment_truth(const PhantomTruth& truth,
                           const raster::AugmentTransform& t);

struct ManifestRow {
  std::filesystem::path image_path;
  OrganId organ = OrganId::kBrain;
  bool present = false;
  std::filesystem::path mask_path;  // empty when absent
  Rect box{0, 0, 0, 0};
};

// Rows of one image, in manifest order.
struct ManifestImage {
  std::filesystem::path image_path;
  std::vector<ManifestRow> rows;

  const ManifestRow* find(OrganId id) const;
};

// Writes phantom_NNNN.png, phantom_NNNN.<Organ>.png for present organs and
// manifest.csv into `out_dir`; phantom i uses seed params.seed + i. Paths in
// the manifest are relative to it. Returns the manifest path.
std::filesystem::path generate_dataset(int n, const PhantomParams& params,
                                       const anatomy::Registry& registry,
                                       const std::filesystem::path& out_dir);

// Header: image_path,organ,present,mask_path,box_x,box_y,box_w,box_h.
// Relative paths are resolved against the manifest's directory. Throws
// IoError and ParseError.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::filesystem::path& path);

std::vector<ManifestImage> group_by_image(const std::vector<ManifestRow>& rows);

// Image plus full-frame truth masks; absent organs get empty masks.
PhantomTruth load_truth(const ManifestImage& entry,
                        const anatomy::Registry& registry);

}  // namespace organseg::phantom
