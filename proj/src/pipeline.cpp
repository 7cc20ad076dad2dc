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

#include "organseg/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>

#include "organseg/error.hpp"

namespace organseg::pipeline {
namespace {

void require_canonical(const RasterImage& img) {
  if (img.width() != kCanonicalWidth || img.height() != kCanonicalHeight)
    throw ArgumentError("image must be " + std::to_string(kCanonicalWidth) +
                        "x" + std::to_string(kCanonicalHeight) + ", got " +
                        std::to_string(img.width()) + "x" +
                        std::to_string(img.height()));
}

Rect bounding_rect(const std::vector<Rect>& boxes) {
  int x0 = boxes.front().x, y0 = boxes.front().y;
  int x1 = boxes.front().right(), y1 = boxes.front().bottom();
  for (const auto& b : boxes) {
    x0 = std::min(x0, b.x);
    y0 = std::min(y0, b.y);
    x1 = std::max(x1, b.right());
    y1 = std::max(y1, b.bottom());
  }
  return {x0, y0, x1 - x0, y1 - y0};
}

// Summed-area table over a row-major 0/1 grid.
class Integral {
 public:
  Integral(std::span<const std::uint8_t> bits, int w, int h)
      : w_(w), sums_(static_cast<std::size_t>(w + 1) * (h + 1), 0) {
    for (int y = 0; y < h; ++y) {
      std::uint32_t row = 0;
      for (int x = 0; x < w; ++x) {
        row += bits[static_cast<std::size_t>(y) * w + x];
        at(x + 1, y + 1) = at(x + 1, y) + row;
      }
    }
  }

  // Set cells in [x, x + rw) x [y, y + rh).
  std::uint32_t count(int x, int y, int rw, int rh) const {
    return at(x + rw, y + rh) - at(x, y + rh) - at(x + rw, y) + at(x, y);
  }

 private:
  std::uint32_t& at(int x, int y) {
    return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x];
  }
  std::uint32_t at(int x, int y) const {
    return sums_[static_cast<std::size_t>(y) * (w_ + 1) + x];
  }

  int w_;
  std::vector<std::uint32_t> sums_;
};

// Category bits of the union of an organ's candidate boxes.
struct SearchArea {
  Rect rect;
  std::vector<std::uint8_t> bits;

  SearchArea(const RasterImage& img, const Rect& r,
             const chroma::ColorModel& color, ColorCategory category)
      : rect(r), bits(chroma::classify_region(img, r, color)) {
    const auto want = static_cast<std::uint8_t>(category);
    for (auto& b : bits) b = b == want ? 1 : 0;
  }

  // Box crop as a 0/1 float plane resampled to side x side.
  void plane(const Rect& box, int side, std::span<float> out,
             std::vector<float>& scratch) const {
    scratch.resize(static_cast<std::size_t>(box.w) * box.h);
    const int ox = box.x - rect.x, oy = box.y - rect.y;
    for (int y = 0; y < box.h; ++y) {
      const std::uint8_t* src =
          bits.data() + static_cast<std::size_t>(oy + y) * rect.w + ox;
      float* dst = scratch.data() + static_cast<std::size_t>(y) * box.w;
      for (int x = 0; x < box.w; ++x) dst[x] = src[x] ? 1.0f : 0.0f;
    }
    raster::resize_plane(scratch, box.w, box.h, out, side, side);
  }

  BitMask mask(const Rect& box) const {
    BitMask m(box.w, box.h);
    const int ox = box.x - rect.x, oy = box.y - rect.y;
    for (int y = 0; y < box.h; ++y)
      for (int x = 0; x < box.w; ++x)
        if (bits[static_cast<std::size_t>(oy + y) * rect.w + ox + x]) m.set(x, y);
    return m;
  }
};

}  // namespace

void PipelineConfig::validate() const {
  if (stride < 1) throw ArgumentError("stride must be >= 1");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ArgumentError("threshold must be in [0, 1]");
  if (batch_size < 1) throw ArgumentError("batch size must be >= 1");
}

std::vector<CandidateScore> score_candidates(const RasterImage& img,
                                             OrganId organ,
                                             const anatomy::Registry& registry,
                                             const chroma::ColorModel& color,
                                             const shapenet::ShapeNet& net,
                                             const PipelineConfig& cfg) {
  cfg.validate();
  require_canonical(img);
  const auto& spec = registry.at(organ);
  const auto boxes =
      anatomy::candidate_boxes(spec.region, spec.box_w, spec.box_h, cfg.stride);
  const SearchArea area(img, bounding_rect(boxes), color, spec.category);
  const Integral counts(area.bits, area.rect.w, area.rect.h);
  const int cls = shapenet::class_of(organ);
  const int side = net.input_side();
  const std::size_t plane = static_cast<std::size_t>(side) * side;

  std::vector<CandidateScore> out(boxes.size());
  std::optional<float> empty_score;
  std::vector<std::size_t> pending;
  std::vector<float> planes, scratch;
  auto flush = [&]() {
    if (pending.empty()) return;
    shapenet::Tensor batch({static_cast<int>(pending.size()), side, side, 1},
                           std::move(planes));
    const auto preds = shapenet::predict_batch(net, batch);
    for (std::size_t i = 0; i < pending.size(); ++i)
      out[pending[i]].score = preds[i].probs[cls];
    pending.clear();
    planes.clear();
  };
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const Rect& b = boxes[i];
    out[i].box = b;
    if (counts.count(b.x - area.rect.x, b.y - area.rect.y, b.w, b.h) == 0) {
      if (!empty_score) {
        const shapenet::Tensor zero({1, side, side, 1});
        empty_score = shapenet::predict_class(net, zero).probs[cls];
      }
      out[i].score = *empty_score;
      continue;
    }
    planes.resize((pending.size() + 1) * plane);
    area.plane(b, side,
               std::span<float>(planes).subspan(pending.size() * plane, plane),
               scratch);
    pending.push_back(i);
    if (pending.size() == static_cast<std::size_t>(cfg.batch_size)) flush();
  }
  flush();
  return out;
}

SegmentationResult segment_organ(const RasterImage& img, OrganId organ,
                                 const anatomy::Registry& registry,
                                 const chroma::ColorModel& color,
                                 const shapenet::ShapeNet& net,
                                 const PipelineConfig& cfg) {
  const auto scores = score_candidates(img, organ, registry, color, net, cfg);
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i)
    if (scores[i].score > scores[best].score) best = i;

  SegmentationResult r;
  r.organ = organ;
  r.box = scores[best].box;
  r.score = scores[best].score;
  r.mask = BitMask(kCanonicalWidth, kCanonicalHeight);
  if (static_cast<double>(r.score) < cfg.threshold) return r;
  r.found = true;
  BitMask local = chroma::filter_to_shape(img, r.box, color,
                                          registry.at(organ).category);
  if (cfg.largest_component) local = largest_component(local);
  for (int y = 0; y < r.box.h; ++y)
    for (int x = 0; x < r.box.w; ++x)
      if (local.get(x, y)) r.mask.set(r.box.x + x, r.box.y + y);
  return r;
}

std::vector<SegmentationResult> segment_all_organs(
    const RasterImage& img, const anatomy::Registry& registry,
    const chroma::ColorModel& color, const shapenet::ShapeNet& net,
    const PipelineConfig& cfg) {
  std::vector<SegmentationResult> out;
  for (const auto& spec : registry)
    out.push_back(segment_organ(img, spec.organ, registry, color, net, cfg));
  return out;
}

BitMask largest_component(const BitMask& mask) {
  const int w = mask.width(), h = mask.height();
  BitMask out(w, h);
  const auto bits = mask.bits();
  std::vector<std::int32_t> label(bits.size(), -1);
  std::vector<std::size_t> stack;
  std::size_t best_size = 0;
  std::int32_t best_label = -1, next_label = 0;
  for (std::size_t start = 0; start < bits.size(); ++start) {
    if (!bits[start] || label[start] >= 0) continue;
    const std::int32_t id = next_label++;
    std::size_t size = 0;
    label[start] = id;
    stack.push_back(start);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      ++size;
      const int x = static_cast<int>(p % w), y = static_cast<int>(p / w);
      const auto visit = [&](std::size_t q) {
        if (bits[q] && label[q] < 0) {
          label[q] = id;
          stack.push_back(q);
        }
      };
      if (x > 0) visit(p - 1);
      if (x + 1 < w) visit(p + 1);
      if (y > 0) visit(p - w);
      if (y + 1 < h) visit(p + w);
    }
    if (size > best_size) {
      best_size = size;
      best_label = id;
    }
  }
  if (best_label < 0) return out;
  auto dst = out.bits();
  for (std::size_t i = 0; i < label.size(); ++i)
    dst[i] = label[i] == best_label ? 1 : 0;
  return out;
}

namespace {

constexpr const char* kResultsHeader = "organ,found,box_x,box_y,box_w,box_h,score";

}  // namespace

std::string results_csv(std::span<const SegmentationResult> results) {
  std::ostringstream out;
  out << kResultsHeader << '\n';
  for (const auto& r : results) {
    char score[32];
    std::snprintf(score, sizeof score, "%.6f", static_cast<double>(r.score));
    out << organ_name(r.organ) << ',' << (r.found ? 1 : 0) << ',' << r.box.x
        << ',' << r.box.y << ',' << r.box.w << ',' << r.box.h << ',' << score
        << '\n';
  }
  return out.str();
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open results");
  std::string line;
  if (!std::getline(in, line) || (line != kResultsHeader &&
                                  line != std::string(kResultsHeader) + "\r"))
    throw ParseError(1, path.string() + ": unexpected results header");
  std::vector<ResultRow> rows;
  for (int no = 2; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (cells.size() != 7) throw ParseError(no, "expected 7 columns");
    ResultRow r;
    const auto organ = parse_organ(cells[0]);
    if (!organ) throw ParseError(no, "unknown organ '" + cells[0] + "'");
    r.organ = *organ;
    if (cells[1] != "0" && cells[1] != "1") throw ParseError(no, "found must be 0 or 1");
    r.found = cells[1] == "1";
    try {
      std::size_t used = 0;
      int* fields[] = {&r.box.x, &r.box.y, &r.box.w, &r.box.h};
      for (int i = 0; i < 4; ++i) {
        *fields[i] = std::stoi(cells[2 + i], &used);
        if (used != cells[2 + i].size()) throw std::invalid_argument("trailing");
      }
      r.score = std::stof(cells[6], &used);
      if (used != cells[6].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParseError(no, "malformed number");
    }
    rows.push_back(r);
  }
  return rows;
}

void write_results(std::span<const SegmentationResult> results,
                   const std::filesystem::path& dir, const std::string& stem) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": " + ec.message());
  const auto csv = dir / (stem + ".results.csv");
  std::ofstream f(csv, std::ios::binary);
  if (!f) throw IoError(csv.string() + ": cannot write");
  f << results_csv(results);
  if (!f) throw IoError(csv.string() + ": write failed");
  for (const auto& r : results)
    raster::encode_mask(r.mask,
                        dir / (stem + "." + std::string(organ_name(r.organ)) + ".png"));
}

namespace {

std::array<float, 5> baseline_features(int x, int y, Rgb c) {
  return {static_cast<float>(x) / kCanonicalWidth,
          static_cast<float>(y) / kCanonicalHeight,
          static_cast<float>(c.r) / 255.0f, static_cast<float>(c.g) / 255.0f,
          static_cast<float>(c.b) / 255.0f};
}

}  // namespace

BaselineModel train_baseline(std::span<const BaselineSample> samples,
                             const linear::SgdConfig& cfg) {
  if (samples.empty()) throw ArgumentError("no baseline samples");
  std::vector<float> features;
  std::vector<int> labels;
  features.reserve(samples.size() * 5);
  for (const auto& s : samples) {
    const auto f = baseline_features(s.x, s.y, s.rgb);
    features.insert(features.end(), f.begin(), f.end());
    labels.push_back(s.label);
  }
  return {linear::fit_softmax(features, 5, labels, shapenet::kNumClasses, cfg).model};
}

BitMask baseline_pixel_segment(const RasterImage& img, OrganId organ,
                               const BaselineModel& model) {
  BitMask out(img.width(), img.height());
  const int cls = shapenet::class_of(organ);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      if (model.model.predict(baseline_features(x, y, img.at(x, y))) == cls)
        out.set(x, y);
  return out;
}

namespace {

std::size_t pick(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
}

// Uniform draw of a pixel index with owner[i] == 0.
std::size_t draw_unowned(const std::vector<std::uint8_t>& owner, Rng& rng) {
  for (int tries = 0; tries < 1'000'000; ++tries) {
    const std::size_t i = pick(rng, owner.size());
    if (!owner[i]) return i;
  }
  throw ValidationError("image has no unannotated pixels");
}

Rgb pixel(const RasterImage& img, std::size_t i) {
  const auto b = img.bytes();
  return {b[3 * i], b[3 * i + 1], b[3 * i + 2]};
}

}  // namespace

void add_color_samples(const phantom::PhantomTruth& truth,
                       const anatomy::Registry& registry, int per_class,
                       Rng& rng, std::vector<chroma::PixelSample>& out) {
  if (per_class < 1) throw ArgumentError("samples per class must be >= 1");
  const std::size_t n = truth.image.bytes().size() / 3;
  std::vector<std::uint8_t> owner(n, 0);
  std::array<std::vector<std::size_t>, 4> by_category;
  for (const auto& o : truth.organs) {
    if (!o.present) continue;
    const int c = static_cast<int>(registry.at(o.organ).category);
    const auto bits = o.mask.bits();
    for (std::size_t i = 0; i < n; ++i)
      if (bits[i]) {
        owner[i] = 1;
        by_category[c].push_back(i);
      }
  }
  for (int c = 0; c < 4; ++c) {
    if (by_category[c].empty()) continue;
    for (int k = 0; k < per_class; ++k) {
      const Rgb p = pixel(truth.image, by_category[c][pick(rng, by_category[c].size())]);
      out.push_back({p.r, p.g, p.b, static_cast<ColorCategory>(c)});
    }
  }
  for (int k = 0; k < per_class; ++k) {
    const Rgb p = pixel(truth.image, draw_unowned(owner, rng));
    out.push_back({p.r, p.g, p.b, ColorCategory::kBackground});
  }
}

void add_baseline_samples(const phantom::PhantomTruth& truth, int per_class,
                          Rng& rng, std::vector<BaselineSample>& out) {
  if (per_class < 1) throw ArgumentError("samples per class must be >= 1");
  const int w = truth.image.width();
  const std::size_t n = truth.image.bytes().size() / 3;
  std::vector<std::uint8_t> owner(n, 0);
  for (const auto& o : truth.organs) {
    if (!o.present) continue;
    std::vector<std::size_t> pixels;
    const auto bits = o.mask.bits();
    for (std::size_t i = 0; i < n; ++i)
      if (bits[i]) {
        owner[i] = 1;
        pixels.push_back(i);
      }
    for (int k = 0; k < per_class && !pixels.empty(); ++k) {
      const std::size_t i = pixels[pick(rng, pixels.size())];
      out.push_back({static_cast<int>(i % w), static_cast<int>(i / w),
                     pixel(truth.image, i), shapenet::class_of(o.organ)});
    }
  }
  for (int k = 0; k < per_class; ++k) {
    const std::size_t i = draw_unowned(owner, rng);
    out.push_back({static_cast<int>(i % w), static_cast<int>(i / w),
                   pixel(truth.image, i), shapenet::kNoneClass});
  }
}

void add_shape_samples(const phantom::PhantomTruth& truth,
                       const anatomy::Registry& registry,
                       const chroma::ColorModel& color,
                       const ShapeSampling& sampling, Rng& rng,
                       shapenet::ShapeDataset& out) {
  if (sampling.positives < 0 || sampling.negatives < 0)
    throw ArgumentError("sample counts must be >= 0");
  if (!(sampling.partial < sampling.complete))
    throw ArgumentError("partial threshold must be below the complete one");
  require_canonical(truth.image);
  const int side = out.side;
  std::vector<float> plane(static_cast<std::size_t>(side) * side), scratch;

  for (const auto& spec : registry) {
    const auto boxes = anatomy::candidate_boxes(spec.region, spec.box_w,
                                                spec.box_h, sampling.stride);
    const SearchArea area(truth.image, bounding_rect(boxes), color, spec.category);
    const Rect& sr = area.rect;

    struct Rival {
      OrganId organ;
      double total;
      Integral counts;
    };
    std::vector<Rival> rivals;
    for (const auto& o : truth.organs) {
      if (!o.present || registry.at(o.organ).category != spec.category) continue;
      std::vector<std::uint8_t> local(static_cast<std::size_t>(sr.w) * sr.h);
      for (int y = 0; y < sr.h; ++y)
        for (int x = 0; x < sr.w; ++x)
          local[static_cast<std::size_t>(y) * sr.w + x] = o.mask.get(sr.x + x, sr.y + y);
      rivals.push_back({o.organ, static_cast<double>(o.mask.count()),
                        Integral(local, sr.w, sr.h)});
    }

    std::vector<std::size_t> own, other, near, far;
    std::vector<int> other_label;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const Rect& b = boxes[i];
      double own_frac = 0.0, best_other = 0.0, max_frac = 0.0;
      OrganId other_organ = spec.organ;
      for (const auto& r : rivals) {
        const double f =
            r.total > 0 ? r.counts.count(b.x - sr.x, b.y - sr.y, b.w, b.h) / r.total : 0.0;
        max_frac = std::max(max_frac, f);
        if (r.organ == spec.organ) {
          own_frac = f;
        } else if (f > best_other) {
          best_other = f;
          other_organ = r.organ;
        }
      }
      if (own_frac >= sampling.complete) {
        own.push_back(i);
      } else if (best_other >= sampling.complete) {
        other.push_back(i);
        other_label.push_back(shapenet::class_of(other_organ));
      } else if (max_frac <= sampling.partial) {
        (own_frac > 0.5 ? near : far).push_back(i);
      }
    }

    auto emit = [&](const Rect& b, int label) {
      area.plane(b, side, plane, scratch);
      out.add(plane, label);
    };
    const auto& truth_organ = truth.at(spec.organ);
    if (truth_organ.present && sampling.positives > 0) {
      emit(truth_organ.box, shapenet::class_of(spec.organ));
      for (int k = 1; k < sampling.positives && !own.empty(); ++k)
        emit(boxes[own[pick(rng, own.size())]], shapenet::class_of(spec.organ));
    }
    if (!other.empty() && sampling.positives > 0) {
      const std::size_t k = pick(rng, other.size());
      emit(boxes[other[k]], other_label[k]);
    }
    const int n_near = near.empty() ? 0 : (sampling.negatives * 2 + 2) / 3;
    for (int k = 0; k < sampling.negatives; ++k) {
      const auto& list = (k < n_near || far.empty()) ? near : far;
      if (list.empty()) break;
      emit(boxes[list[pick(rng, list.size())]], shapenet::kNoneClass);
    }
  }
}

}  // namespace organseg::pipeline
