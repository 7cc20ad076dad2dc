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

// Pixel color categories and the color filter that turns a candidate box
// into a binary shape image.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "organseg/organs.hpp"
#include "organseg/raster.hpp"

namespace organseg::chroma {

struct PixelSample {
  std::uint8_t r = 0, g = 0, b = 0;
  ColorCategory label = ColorCategory::kBackground;
};

// Linear multiclass model over (r, g, b) / 255. Rows follow ColorCategory
// order: CAT1, CAT2, CAT3, CAT4, BACKGROUND.
struct ColorModel {
  std::array<float, 15> weights{};
  std::array<float, 5> bias{};
  friend bool operator==(const ColorModel&, const ColorModel&) = default;
};

struct ColorTrainConfig {
  int epochs = 20;
  double learning_rate = 0.5;
  std::uint64_t seed = 1;
};

struct ColorTrainResult {
  ColorModel model;
  double accuracy = 0.0;
};

// Seeded SGD fit of a multinomial logistic model. Throws ArgumentError on
// empty input and TrainingError when only one label is present.
ColorTrainResult train_color_model(std::span<const PixelSample> samples,
                                   const ColorTrainConfig& cfg);

std::array<float, 5> class_scores(const ColorModel& model, Rgb px);

// Argmax of class_scores, lowest index wins ties.
ColorCategory classify_pixel(const ColorModel& model, Rgb px);

// Class index of every pixel of `rect`, row-major. Uses the active SIMD
// kernels; results are identical to classify_pixel.
std::vector<std::uint8_t> classify_region(const RasterImage& img,
                                          const Rect& rect,
                                          const ColorModel& model);

// Bit (i, j) is set iff the crop pixel classifies as `category`. Throws
// ArgumentError for BACKGROUND and BoundsError for an out-of-image box.
BitMask filter_to_shape(const RasterImage& img, const Rect& box,
                        const ColorModel& model, ColorCategory category);

// File layout: "OSCM1", u32 classes (5), u32 features (3), weights then
// biases as little-endian float32.
void save_color_model(const ColorModel& model,
                      const std::filesystem::path& path);
ColorModel load_color_model(const std::filesystem::path& path);

}  // namespace organseg::chroma
