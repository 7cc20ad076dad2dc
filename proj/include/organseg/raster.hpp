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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace organseg {

inline constexpr int kCanonicalWidth = 2000;
inline constexpr int kCanonicalHeight = 1000;

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Axis-aligned pixel rectangle; (x, y) is the top-left corner.
struct Rect {
  int x = 0, y = 0, w = 1, h = 1;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  bool contains(int px, int py) const {
    return px >= x && py >= y && px < x + w && py < y + h;
  }
  friend bool operator==(const Rect&, const Rect&) = default;
};

// Row-major 8-bit RGB raster, origin top-left.
class RasterImage {
 public:
  RasterImage(int width, int height, Rgb fill = {});
  RasterImage(int width, int height, std::vector<std::uint8_t> rgb);

  int width() const { return width_; }
  int height() const { return height_; }

  Rgb at(int x, int y) const {
    const std::uint8_t* p = data_.data() + offset(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) {
    std::uint8_t* p = data_.data() + offset(x, y);
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  const std::uint8_t* row(int y) const { return data_.data() + offset(0, y); }
  std::uint8_t* row(int y) { return data_.data() + offset(0, y); }
  std::span<const std::uint8_t> bytes() const { return data_; }
  std::span<std::uint8_t> bytes() { return data_; }

  Rect frame() const { return {0, 0, width_, height_}; }

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_;
  int height_;
  std::vector<std::uint8_t> data_;
};

// Row-major boolean raster. One byte per pixel, 0 or 1.
class BitMask {
 public:
  BitMask() = default;
  BitMask(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }

  bool get(int x, int y) const {
    return bits_[static_cast<std::size_t>(y) * width_ + x] != 0;
  }
  void set(int x, int y, bool v = true) {
    bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0;
  }

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }

  std::size_t count() const;
  bool none() const { return count() == 0; }

  friend bool operator==(const BitMask&, const BitMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

namespace raster {

// Decodes a PNG or JPEG file into RGB. Alpha is dropped, gray is replicated.
RasterImage load_image(const std::filesystem::path& path);

// Writes an 8-bit RGB PNG.
void save_image(const RasterImage& img, const std::filesystem::path& path);

RasterImage resize_bilinear(const RasterImage& img, int width, int height);

// Bilinear resize to the 2000 x 1000 frame every prior is expressed in.
RasterImage resize_canonical(const RasterImage& img);

// Bilinear resample of a single-channel float plane, half-pixel centers.
void resize_plane(std::span<const float> src, int src_w, int src_h,
                  std::span<float> dst, int dst_w, int dst_h);

// Population mean and standard deviation per channel.
ChannelStats channel_stats(const RasterImage& img);

// Per-channel affine match of mean and standard deviation to `ref`. A flat
// channel is only shifted.
RasterImage normalize_intensity(const RasterImage& img, const ChannelStats& ref);

RasterImage crop(const RasterImage& img, const Rect& rect);
BitMask crop(const BitMask& mask, const Rect& rect);

// True when `rect` is non-empty and lies inside a width x height frame.
bool within(const Rect& rect, int width, int height);

// Ranges the random transform parameters are drawn from (symmetric around
// zero). Each is clamped to its documented maximum.
struct AugmentParams {
  double shift_px = 20.0;      // <= 20
  double scale = 0.05;         // <= 0.05
  double rotation_deg = 3.0;   // <= 3
  double brightness = 0.10;    // <= 0.10
};

// One concrete draw of the augmentation transform.
struct AugmentTransform {
  double dx = 0.0, dy = 0.0;
  double scale = 0.0;          // relative, output = (1 + scale) * input
  double rotation_deg = 0.0;
  double brightness = 0.0;     // relative

  bool is_identity() const {
    return dx == 0.0 && dy == 0.0 && scale == 0.0 && rotation_deg == 0.0 &&
           brightness == 0.0;
  }
};

AugmentTransform sample_transform(const AugmentParams& params,
                                  std::uint64_t seed);

// Translation, isotropic scale and rotation about the image center, then a
// brightness gain. Bilinear sampling, uncovered pixels are black.
RasterImage apply_transform(const RasterImage& img, const AugmentTransform& t);

// Same geometry with nearest-neighbour sampling, for ground-truth masks.
BitMask apply_transform(const BitMask& mask, const AugmentTransform& t);

RasterImage augment_image(const RasterImage& img, const AugmentParams& params,
                          std::uint64_t seed);

// 8-bit gray PNG, 0 = background, 255 = set.
void encode_mask(const BitMask& mask, const std::filesystem::path& path);
BitMask decode_mask(const std::filesystem::path& path);

}  // namespace raster
}  // namespace organseg
