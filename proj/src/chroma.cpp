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

#include "organseg/chroma.hpp"

#include <algorithm>

#include "organseg/binio.hpp"
#include "organseg/error.hpp"
#include "organseg/linear.hpp"
#include "organseg/simd/kernels.hpp"

namespace organseg::chroma {
namespace {

constexpr char kMagic[] = "OSCM1";

std::array<float, 3> scaled(Rgb px) {
  return {static_cast<float>(px.r) / 255.0f, static_cast<float>(px.g) / 255.0f,
          static_cast<float>(px.b) / 255.0f};
}

}  // namespace

ColorTrainResult train_color_model(std::span<const PixelSample> samples,
                                   const ColorTrainConfig& cfg) {
  if (samples.empty()) throw ArgumentError("no color samples");
  std::vector<float> features;
  std::vector<int> labels;
  features.reserve(samples.size() * 3);
  labels.reserve(samples.size());
  for (const auto& s : samples) {
    const auto x = scaled({s.r, s.g, s.b});
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(static_cast<int>(s.label));
  }
  const auto fit = linear::fit_softmax(
      features, 3, labels, kNumColorClasses,
      {cfg.epochs, cfg.learning_rate, cfg.seed});
  ColorTrainResult out;
  std::copy(fit.model.weights.begin(), fit.model.weights.end(),
            out.model.weights.begin());
  std::copy(fit.model.bias.begin(), fit.model.bias.end(),
            out.model.bias.begin());
  out.accuracy = fit.accuracy;
  return out;
}

std::array<float, 5> class_scores(const ColorModel& model, Rgb px) {
  const auto x = scaled(px);
  std::array<float, 5> s{};
  for (int k = 0; k < 5; ++k) {
    const float* w = model.weights.data() + 3 * k;
    float v = w[0] * x[0];
    v = v + w[1] * x[1];
    v = v + w[2] * x[2];
    s[k] = v + model.bias[k];
  }
  return s;
}

ColorCategory classify_pixel(const ColorModel& model, Rgb px) {
  const auto s = class_scores(model, px);
  int best = 0;
  for (int k = 1; k < 5; ++k)
    if (s[k] > s[best]) best = k;
  return static_cast<ColorCategory>(best);
}

std::vector<std::uint8_t> classify_region(const RasterImage& img,
                                          const Rect& rect,
                                          const ColorModel& model) {
  if (!raster::within(rect, img.width(), img.height()))
    throw BoundsError("classification rectangle outside image");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(rect.w) * rect.h);
  const auto& k = simd::kernels();
  for (int j = 0; j < rect.h; ++j)
    k.classify_rgb(img.row(rect.y + j) + 3 * rect.x, rect.w,
                   model.weights.data(), model.bias.data(),
                   out.data() + static_cast<std::size_t>(j) * rect.w);
  return out;
}

BitMask filter_to_shape(const RasterImage& img, const Rect& box,
                        const ColorModel& model, ColorCategory category) {
  if (category == ColorCategory::kBackground)
    throw ArgumentError("cannot filter to the BACKGROUND category");
  const auto classes = classify_region(img, box, model);
  BitMask mask(box.w, box.h);
  auto bits = mask.bits();
  const auto want = static_cast<std::uint8_t>(category);
  for (std::size_t i = 0; i < classes.size(); ++i)
    bits[i] = classes[i] == want ? 1 : 0;
  return mask;
}

void save_color_model(const ColorModel& model,
                      const std::filesystem::path& path) {
  binio::Writer w;
  w.bytes(kMagic);
  w.u32(5);
  w.u32(3);
  for (float v : model.weights) w.f32(v);
  for (float v : model.bias) w.f32(v);
  w.save(path);
}

ColorModel load_color_model(const std::filesystem::path& path) {
  auto r = binio::Reader::open(path);
  r.expect_magic(kMagic);
  const auto classes = r.u32();
  const auto features = r.u32();
  if (classes != 5 || features != 3)
    throw FormatError(path.string() + ": color model must be 5 x 3");
  ColorModel m;
  for (float& v : m.weights) v = r.f32();
  for (float& v : m.bias) v = r.f32();
  r.expect_end();
  return m;
}

}  // namespace organseg::chroma
