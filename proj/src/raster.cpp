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

#include "organseg/raster.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>

// jpeglib.h needs FILE and size_t declared first.
#include <jpeglib.h>

#include "organseg/error.hpp"
#include "organseg/rng.hpp"

namespace organseg {

RasterImage::RasterImage(int width, int height, Rgb fill)
    : width_(width), height_(height) {
  if (width < 1 || height < 1)
    throw ArgumentError("image dimensions must be positive");
  data_.resize(static_cast<std::size_t>(width) * height * 3);
  for (std::size_t i = 0; i < data_.size(); i += 3) {
    data_[i] = fill.r;
    data_[i + 1] = fill.g;
    data_[i + 2] = fill.b;
  }
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> rgb)
    : width_(width), height_(height), data_(std::move(rgb)) {
  if (width < 1 || height < 1)
    throw ArgumentError("image dimensions must be positive");
  if (data_.size() != static_cast<std::size_t>(width) * height * 3)
    throw ArgumentError("pixel buffer length does not match dimensions");
}

BitMask::BitMask(int width, int height)
    : width_(width),
      height_(height),
      bits_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0),
            0) {
  if (width < 0 || height < 0)
    throw ArgumentError("mask dimensions must be non-negative");
}

std::size_t BitMask::count() const {
  return static_cast<std::size_t>(
      std::count_if(bits_.begin(), bits_.end(), [](auto b) { return b != 0; }));
}

namespace raster {
namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw IoError("cannot open " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

bool is_jpeg(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 &&
         bytes[2] == 0xFF;
}

// Decodes with libpng's simplified API into the requested layout.
std::vector<std::uint8_t> decode_png(const std::vector<std::uint8_t>& bytes,
                                     png_uint_32 format, int& width,
                                     int& height, const std::string& name) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError(name + ": " + image.message);
  image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(name + ": " + msg);
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return buffer;
}

struct JpegErrorManager {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Returns false and fills `message` on a decode failure. Only trivially
// destructible locals live between setjmp and longjmp.
bool decode_jpeg_raw(const std::uint8_t* data, std::size_t size,
                     std::vector<std::uint8_t>& out, int& width, int& height,
                     std::string& message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = on_jpeg_error;
  if (setjmp(err.jump)) {
    message = err.message;
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = static_cast<int>(cinfo.output_width);
  height = static_cast<int>(cinfo.output_height);
  out.resize(static_cast<std::size_t>(width) * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out.data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                    width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

void write_png(const std::filesystem::path& path, png_uint_32 format, int width,
               int height, const std::uint8_t* pixels) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels, 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + image.message);
}

inline std::uint8_t clamp_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Source coordinate and blend weight along one axis, half-pixel centers.
struct Tap {
  int i0, i1;
  float frac;
};

std::vector<Tap> bilinear_taps(int src, int dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / dst;
  for (int d = 0; d < dst; ++d) {
    double s = (d + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(src - 1));
    const int i0 = static_cast<int>(std::floor(s));
    const int i1 = std::min(i0 + 1, src - 1);
    taps[d] = {i0, i1, static_cast<float>(s - i0)};
  }
  return taps;
}

}  // namespace

RasterImage load_image(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  int width = 0, height = 0;
  if (is_png(bytes)) {
    auto rgba = decode_png(bytes, PNG_FORMAT_RGBA, width, height, path.string());
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0, n = rgb.size() / 3; i < n; ++i) {
      rgb[3 * i] = rgba[4 * i];
      rgb[3 * i + 1] = rgba[4 * i + 1];
      rgb[3 * i + 2] = rgba[4 * i + 2];
    }
    return RasterImage(width, height, std::move(rgb));
  }
  if (is_jpeg(bytes)) {
    std::vector<std::uint8_t> rgb;
    std::string message;
    if (!decode_jpeg_raw(bytes.data(), bytes.size(), rgb, width, height,
                         message))
      throw FormatError(path.string() + ": " + message);
    return RasterImage(width, height, std::move(rgb));
  }
  throw FormatError(path.string() + ": not a PNG or JPEG file");
}

void save_image(const RasterImage& img, const std::filesystem::path& path) {
  write_png(path, PNG_FORMAT_RGB, img.width(), img.height(), img.bytes().data());
}

RasterImage resize_bilinear(const RasterImage& img, int width, int height) {
  if (width < 1 || height < 1)
    throw ArgumentError("resize target must be at least 1x1");
  if (width == img.width() && height == img.height()) return img;
  const auto xt = bilinear_taps(img.width(), width);
  const auto yt = bilinear_taps(img.height(), height);
  RasterImage out(width, height);
  for (int y = 0; y < height; ++y) {
    const std::uint8_t* r0 = img.row(yt[y].i0);
    const std::uint8_t* r1 = img.row(yt[y].i1);
    const float fy = yt[y].frac;
    std::uint8_t* dst = out.row(y);
    for (int x = 0; x < width; ++x) {
      const int a = 3 * xt[x].i0, b = 3 * xt[x].i1;
      const float fx = xt[x].frac;
      for (int c = 0; c < 3; ++c) {
        const float top = r0[a + c] + fx * (r0[b + c] - r0[a + c]);
        const float bot = r1[a + c] + fx * (r1[b + c] - r1[a + c]);
        dst[3 * x + c] = clamp_u8(top + fy * (bot - top));
      }
    }
  }
  return out;
}

RasterImage resize_canonical(const RasterImage& img) {
  return resize_bilinear(img, kCanonicalWidth, kCanonicalHeight);
}

void resize_plane(std::span<const float> src, int src_w, int src_h,
                  std::span<float> dst, int dst_w, int dst_h) {
  if (src.size() != static_cast<std::size_t>(src_w) * src_h ||
      dst.size() != static_cast<std::size_t>(dst_w) * dst_h)
    throw ArgumentError("resize_plane: buffer sizes do not match dimensions");
  const auto xt = bilinear_taps(src_w, dst_w);
  const auto yt = bilinear_taps(src_h, dst_h);
  for (int y = 0; y < dst_h; ++y) {
    const float* r0 = src.data() + static_cast<std::size_t>(yt[y].i0) * src_w;
    const float* r1 = src.data() + static_cast<std::size_t>(yt[y].i1) * src_w;
    const float fy = yt[y].frac;
    float* out = dst.data() + static_cast<std::size_t>(y) * dst_w;
    for (int x = 0; x < dst_w; ++x) {
      const Tap& t = xt[x];
      const float top = r0[t.i0] + t.frac * (r0[t.i1] - r0[t.i0]);
      const float bot = r1[t.i0] + t.frac * (r1[t.i1] - r1[t.i0]);
      out[x] = top + fy * (bot - top);
    }
  }
}

ChannelStats channel_stats(const RasterImage& img) {
  ChannelStats stats;
  const auto bytes = img.bytes();
  const double n = static_cast<double>(bytes.size() / 3);
  std::array<double, 3> sum{}, sumsq{};
  for (std::size_t i = 0; i < bytes.size(); i += 3)
    for (int c = 0; c < 3; ++c) {
      const double v = bytes[i + c];
      sum[c] += v;
      sumsq[c] += v * v;
    }
  for (int c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / n;
    stats.stddev[c] =
        std::sqrt(std::max(0.0, sumsq[c] / n - stats.mean[c] * stats.mean[c]));
  }
  return stats;
}

RasterImage normalize_intensity(const RasterImage& img,
                                const ChannelStats& ref) {
  for (double s : ref.stddev)
    if (!(s >= 0.0)) throw ArgumentError("reference stddev must be >= 0");
  const ChannelStats own = channel_stats(img);
  std::array<double, 3> gain{};
  for (int c = 0; c < 3; ++c)
    gain[c] = own.stddev[c] > 0.0 ? ref.stddev[c] / own.stddev[c] : 1.0;
  std::array<std::array<std::uint8_t, 256>, 3> lut{};
  for (int c = 0; c < 3; ++c)
    for (int v = 0; v < 256; ++v)
      lut[c][v] = clamp_u8((v - own.mean[c]) * gain[c] + ref.mean[c]);
  RasterImage out = img;
  auto bytes = out.bytes();
  for (std::size_t i = 0; i < bytes.size(); i += 3)
    for (int c = 0; c < 3; ++c) bytes[i + c] = lut[c][bytes[i + c]];
  return out;
}

bool within(const Rect& rect, int width, int height) {
  return rect.w >= 1 && rect.h >= 1 && rect.x >= 0 && rect.y >= 0 &&
         rect.x + rect.w <= width && rect.y + rect.h <= height;
}

RasterImage crop(const RasterImage& img, const Rect& rect) {
  if (!within(rect, img.width(), img.height()))
    throw BoundsError("crop rectangle outside image");
  RasterImage out(rect.w, rect.h);
  for (int j = 0; j < rect.h; ++j)
    std::copy_n(img.row(rect.y + j) + 3 * rect.x, 3 * rect.w, out.row(j));
  return out;
}

BitMask crop(const BitMask& mask, const Rect& rect) {
  if (!within(rect, mask.width(), mask.height()))
    throw BoundsError("crop rectangle outside mask");
  BitMask out(rect.w, rect.h);
  const auto src = mask.bits();
  auto dst = out.bits();
  for (int j = 0; j < rect.h; ++j)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rect.y + j) *
                                  mask.width() + rect.x,
                rect.w, dst.begin() + static_cast<std::ptrdiff_t>(j) * rect.w);
  return out;
}

AugmentTransform sample_transform(const AugmentParams& params,
                                  std::uint64_t seed) {
  const double shift = std::clamp(params.shift_px, 0.0, 20.0);
  const double scale = std::clamp(params.scale, 0.0, 0.05);
  const double rot = std::clamp(params.rotation_deg, 0.0, 3.0);
  const double bright = std::clamp(params.brightness, 0.0, 0.10);
  Rng rng(seed);
  AugmentTransform t;
  // Integral shifts keep pure translations lossless.
  t.dx = std::round(rng.uniform(-shift, shift));
  t.dy = std::round(rng.uniform(-shift, shift));
  t.scale = rng.uniform(-scale, scale);
  t.rotation_deg = rng.uniform(-rot, rot);
  t.brightness = rng.uniform(-bright, bright);
  return t;
}

namespace {

// Inverse map from output pixel to source coordinates.
struct InverseMap {
  double cx, cy, a, b, c, d, dx, dy;

  InverseMap(const AugmentTransform& t, int width, int height) {
    cx = (width - 1) / 2.0;
    cy = (height - 1) / 2.0;
    const double theta = t.rotation_deg * 3.14159265358979323846 / 180.0;
    const double s = 1.0 + t.scale;
    const double cs = t.rotation_deg == 0.0 ? 1.0 : std::cos(theta);
    const double sn = t.rotation_deg == 0.0 ? 0.0 : std::sin(theta);
    // Forward: out = R * s * (in - c) + c + shift; inverse uses R^T / s.
    a = cs / s;
    b = sn / s;
    c = -sn / s;
    d = cs / s;
    dx = t.dx;
    dy = t.dy;
  }

  void operator()(int x, int y, double& sx, double& sy) const {
    const double ux = x - dx - cx, uy = y - dy - cy;
    sx = a * ux + b * uy + cx;
    sy = c * ux + d * uy + cy;
  }
};

}  // namespace

RasterImage apply_transform(const RasterImage& img, const AugmentTransform& t) {
  if (t.is_identity()) return img;
  const int w = img.width(), h = img.height();
  const InverseMap inv(t, w, h);
  const double gain = 1.0 + t.brightness;
  RasterImage out(w, h);
  for (int y = 0; y < h; ++y) {
    std::uint8_t* dst = out.row(y);
    for (int x = 0; x < w; ++x) {
      double sx, sy;
      inv(x, y, sx, sy);
      if (sx < -0.5 || sy < -0.5 || sx > w - 0.5 || sy > h - 0.5) continue;
      sx = std::clamp(sx, 0.0, w - 1.0);
      sy = std::clamp(sy, 0.0, h - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double fx = sx - x0, fy = sy - y0;
      const std::uint8_t* r0 = img.row(y0);
      const std::uint8_t* r1 = img.row(y1);
      for (int c = 0; c < 3; ++c) {
        const double top = r0[3 * x0 + c] + fx * (r0[3 * x1 + c] - r0[3 * x0 + c]);
        const double bot = r1[3 * x0 + c] + fx * (r1[3 * x1 + c] - r1[3 * x0 + c]);
        dst[3 * x + c] = clamp_u8((top + fy * (bot - top)) * gain);
      }
    }
  }
  return out;
}

BitMask apply_transform(const BitMask& mask, const AugmentTransform& t) {
  const int w = mask.width(), h = mask.height();
  const InverseMap inv(t, w, h);
  BitMask out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sx, sy;
      inv(x, y, sx, sy);
      const long ix = std::lround(sx), iy = std::lround(sy);
      if (ix >= 0 && iy >= 0 && ix < w && iy < h && mask.get(ix, iy))
        out.set(x, y);
    }
  return out;
}

RasterImage augment_image(const RasterImage& img, const AugmentParams& params,
                          std::uint64_t seed) {
  return apply_transform(img, sample_transform(params, seed));
}

void encode_mask(const BitMask& mask, const std::filesystem::path& path) {
  if (mask.width() < 1 || mask.height() < 1)
    throw ArgumentError("cannot encode an empty mask");
  std::vector<std::uint8_t> gray(mask.bits().size());
  std::transform(mask.bits().begin(), mask.bits().end(), gray.begin(),
                 [](std::uint8_t b) -> std::uint8_t { return b ? 255 : 0; });
  write_png(path, PNG_FORMAT_GRAY, mask.width(), mask.height(), gray.data());
}

BitMask decode_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (!is_png(bytes)) throw FormatError(path.string() + ": not a PNG file");
  int width = 0, height = 0;
  const auto gray =
      decode_png(bytes, PNG_FORMAT_GRAY, width, height, path.string());
  BitMask mask(width, height);
  auto bits = mask.bits();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    if (gray[i] == 255)
      bits[i] = 1;
    else if (gray[i] != 0)
      throw FormatError(path.string() + ": mask value " +
                        std::to_string(gray[i]) + " is not 0 or 255");
  }
  return mask;
}

}  // namespace raster
}  // namespace organseg
