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

#include "organseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "organseg/error.hpp"
#include "organseg/rng.hpp"

namespace organseg::phantom {
namespace {

constexpr int kGap = 3;
constexpr int kMaxLayoutAttempts = 5000;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Fills pixels whose centers fall inside a rotated ellipse.
void fill_ellipse(BitMask& m, double cx, double cy, double rx, double ry,
                  double angle, bool value) {
  const double cs = std::cos(angle), sn = std::sin(angle);
  const double ex = std::sqrt(rx * rx * cs * cs + ry * ry * sn * sn);
  const double ey = std::sqrt(rx * rx * sn * sn + ry * ry * cs * cs);
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - ex)));
  const int x1 = std::min(m.width() - 1, static_cast<int>(std::ceil(cx + ex)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ey)));
  const int y1 = std::min(m.height() - 1, static_cast<int>(std::ceil(cy + ey)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5 - cx, py = y + 0.5 - cy;
      const double u = (px * cs + py * sn) / rx;
      const double v = (-px * sn + py * cs) / ry;
      if (u * u + v * v <= 1.0) m.set(x, y, value);
    }
}

void fill_rect(BitMask& m, double x0, double y0, double x1, double y1) {
  const int ix0 = std::max(0, static_cast<int>(std::lround(x0)));
  const int iy0 = std::max(0, static_cast<int>(std::lround(y0)));
  const int ix1 = std::min(m.width(), static_cast<int>(std::lround(x1)));
  const int iy1 = std::min(m.height(), static_cast<int>(std::lround(y1)));
  for (int y = iy0; y < iy1; ++y)
    for (int x = ix0; x < ix1; ++x) m.set(x, y);
}

// Organ silhouette in box-local coordinates, inset from the box edges.
BitMask render_shape(OrganId organ, int w, int h, Rng& rng) {
  BitMask m(w, h);
  const double mx = std::max(2.0, 0.06 * w), my = std::max(2.0, 0.06 * h);
  const double iw = w - 2 * mx, ih = h - 2 * my;
  const double cx = w / 2.0, cy = h / 2.0;
  switch (organ) {
    case OrganId::kBrain: {
      const double rx = iw / 2 * rng.uniform(0.93, 1.0);
      const double ry = ih / 2 * rng.uniform(0.93, 1.0);
      fill_ellipse(m, cx + rng.uniform(-1, 1) * (iw / 2 - rx),
                   cy + rng.uniform(-1, 1) * (ih / 2 - ry), rx, ry, 0.0, true);
      break;
    }
    case OrganId::kHeart: {
      double a = iw / 2 * rng.uniform(0.9, 1.0);
      double b = a * rng.uniform(0.62, 0.78);
      const double angle = rng.uniform(-0.6, 0.6);
      const double cs = std::cos(angle), sn = std::sin(angle);
      const double ex = std::sqrt(a * a * cs * cs + b * b * sn * sn);
      const double ey = std::sqrt(a * a * sn * sn + b * b * cs * cs);
      const double fit = std::min({1.0, iw / 2 / ex, ih / 2 / ey});
      a *= fit;
      b *= fit;
      fill_ellipse(m, cx, cy, a, b, angle, true);
      break;
    }
    case OrganId::kLiver: {
      const double s1 = rng.uniform(0.9, 1.0), s2 = rng.uniform(0.9, 1.0);
      fill_ellipse(m, mx + 0.42 * iw, my + 0.36 * ih, 0.42 * iw * s1,
                   0.36 * ih * s1, 0.0, true);
      fill_ellipse(m, mx + 0.58 * iw, my + 0.66 * ih, 0.42 * iw * s2,
                   0.34 * ih * s2, 0.0, true);
      break;
    }
    case OrganId::kKidney: {
      const double rx = iw / 2 * rng.uniform(0.92, 1.0);
      const double ry = ih / 2 * rng.uniform(0.88, 1.0);
      fill_ellipse(m, cx, cy, rx, ry, 0.0, true);
      const double notch = rx * rng.uniform(0.4, 0.5);
      fill_ellipse(m, cx + rx, cy, notch, notch * 1.2, 0.0, false);
      break;
    }
    case OrganId::kSpine: {
      const double core = ih * rng.uniform(0.26, 0.34);
      fill_rect(m, mx, cy - core / 2, w - mx, cy + core / 2);
      constexpr int kBlocks = 7;
      const double pitch = iw / kBlocks;
      for (int i = 0; i < kBlocks; ++i) {
        const double bw = pitch * rng.uniform(0.6, 0.75);
        const double bh = ih * rng.uniform(0.85, 1.0);
        const double bx = mx + (i + 0.5) * pitch;
        fill_rect(m, bx - bw / 2, cy - bh / 2, bx + bw / 2, cy + bh / 2);
      }
      break;
    }
  }
  return m;
}

// Marks every frame pixel within Chebyshev distance `r` of a set bit of the
// box-local mask `m` anchored at `box`.
void stamp_dilated(const BitMask& m, const Rect& box, int r,
                   std::vector<std::uint8_t>& frame) {
  const int w = m.width(), h = m.height();
  const int ew = w + 2 * r;
  std::vector<std::uint8_t> horiz(static_cast<std::size_t>(ew) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (m.get(x, y))
        std::fill_n(horiz.begin() + static_cast<std::ptrdiff_t>(y) * ew + x,
                    2 * r + 1, std::uint8_t{1});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ew; ++x) {
      if (!horiz[static_cast<std::size_t>(y) * ew + x]) continue;
      const int fx = box.x + x - r;
      if (fx < 0 || fx >= kCanonicalWidth) continue;
      for (int dy = -r; dy <= r; ++dy) {
        const int fy = box.y + y + dy;
        if (fy < 0 || fy >= kCanonicalHeight) continue;
        frame[static_cast<std::size_t>(fy) * kCanonicalWidth + fx] = 1;
      }
    }
}

bool boxes_overlap(const Rect& a, const Rect& b) {
  return a.x < b.right() && b.x < a.right() && a.y < b.bottom() &&
         b.y < a.bottom();
}

// Corner range along one axis: the region, limited so at least a third of
// the box stays inside the frame, then narrowed around its center.
std::pair<int, int> corner_range(int lo, int hi, int box, int frame,
                                 double jitter) {
  hi = std::min(hi, frame - (box + 2) / 3);
  lo = std::min(lo, hi);
  const double center = (lo + hi) / 2.0, half = (hi - lo) / 2.0 * jitter;
  return {static_cast<int>(std::ceil(center - half - 1e-9)),
          static_cast<int>(std::floor(center + half + 1e-9))};
}

struct Placed {
  OrganId organ;
  ColorCategory category;
  bool present;
  Rect box;
  BitMask local;
};

std::vector<Placed> place_organs(const PhantomParams& params,
                                 const anatomy::Registry& registry,
                                 std::vector<std::uint8_t>& occupied) {
  Rng rng(derive_seed(params.seed, 0));
  for (int attempt = 0; attempt < kMaxLayoutAttempts; ++attempt) {
    std::fill(occupied.begin(), occupied.end(), std::uint8_t{0});
    std::vector<Placed> placed;
    bool ok = true;
    for (const auto& spec : registry) {
      const bool present = rng.bernoulli(params.presence[index_of(spec.organ)]);
      const auto [alo, ahi] =
          corner_range(spec.region.amin, spec.region.amax, spec.box_w,
                       kCanonicalWidth, params.placement_jitter);
      const auto [blo, bhi] =
          corner_range(spec.region.bmin, spec.region.bmax, spec.box_h,
                       kCanonicalHeight, params.placement_jitter);
      const int a = static_cast<int>(rng.uniform_int(alo, ahi));
      const int b = static_cast<int>(rng.uniform_int(blo, bhi));
      const Rect box = anatomy::clip_to_frame(a, b, spec.box_w, spec.box_h);
      BitMask local = render_shape(spec.organ, box.w, box.h, rng);
      if (!present) {
        placed.push_back({spec.organ, spec.category, false, box, BitMask{}});
        continue;
      }
      for (const auto& p : placed)
        if (p.present && p.category == spec.category &&
            boxes_overlap(p.box, box))
          ok = false;
      for (int y = 0; ok && y < box.h; ++y)
        for (int x = 0; x < box.w; ++x)
          if (local.get(x, y) &&
              occupied[static_cast<std::size_t>(box.y + y) * kCanonicalWidth +
                       box.x + x]) {
            ok = false;
            break;
          }
      if (!ok) break;
      stamp_dilated(local, box, kGap, occupied);
      placed.push_back({spec.organ, spec.category, true, box, std::move(local)});
    }
    if (ok) return placed;
  }
  throw ValidationError("no non-overlapping organ layout found for seed " +
                        std::to_string(params.seed));
}

// Category index + 1 of every distractor pixel, 0 elsewhere.
std::vector<std::uint8_t> scatter_clutter(const PhantomParams& params,
                                          const anatomy::Registry& registry,
                                          const std::vector<Placed>& placed,
                                          const std::vector<std::uint8_t>& occupied) {
  std::vector<std::uint8_t> clutter(occupied.size(), 0);
  if (params.clutter_ratio <= 0.0) return clutter;
  Rng rng(derive_seed(params.seed, 1));
  for (const auto& p : placed) {
    if (!p.present) continue;
    const auto& spec = registry.at(p.organ);
    const int sx0 = spec.region.amin, sy0 = spec.region.bmin;
    const int sx1 = std::min(kCanonicalWidth, spec.region.amax + spec.box_w);
    const int sy1 = std::min(kCanonicalHeight, spec.region.bmax + spec.box_h);
    const double target = params.clutter_ratio * static_cast<double>(p.local.count());
    const auto tag = static_cast<std::uint8_t>(static_cast<int>(p.category) + 1);
    double area = 0.0;
    for (int attempt = 0; attempt < 4000 && area < target; ++attempt) {
      const double rx = rng.uniform(5.0, 14.0), ry = rng.uniform(5.0, 14.0);
      const double cx = rng.uniform(sx0, sx1), cy = rng.uniform(sy0, sy1);
      BitMask blob(static_cast<int>(2 * rx) + 2, static_cast<int>(2 * ry) + 2);
      fill_ellipse(blob, blob.width() / 2.0, blob.height() / 2.0, rx, ry, 0.0,
                   true);
      const int ox = static_cast<int>(std::lround(cx)) - blob.width() / 2;
      const int oy = static_cast<int>(std::lround(cy)) - blob.height() / 2;
      bool ok = true;
      for (int y = 0; ok && y < blob.height(); ++y)
        for (int x = 0; x < blob.width(); ++x) {
          if (!blob.get(x, y)) continue;
          const int fx = ox + x, fy = oy + y;
          if (fx < 0 || fy < 0 || fx >= kCanonicalWidth || fy >= kCanonicalHeight ||
              occupied[static_cast<std::size_t>(fy) * kCanonicalWidth + fx]) {
            ok = false;
            break;
          }
          for (const auto& q : placed)
            if (q.present && q.category == p.category && q.box.contains(fx, fy))
              ok = false;
          if (!ok) break;
        }
      if (!ok) continue;
      for (int y = 0; y < blob.height(); ++y)
        for (int x = 0; x < blob.width(); ++x) {
          if (!blob.get(x, y)) continue;
          auto& c = clutter[static_cast<std::size_t>(oy + y) * kCanonicalWidth +
                            ox + x];
          if (c == 0) area += 1.0;
          c = tag;
        }
    }
  }
  return clutter;
}

std::uint8_t jitter(std::uint8_t v, int noise, Rng& rng) {
  if (noise == 0) return v;
  const auto d = static_cast<int>(rng.uniform_int(-noise, noise));
  return static_cast<std::uint8_t>(std::clamp(v + d, 0, 255));
}

}  // namespace

Rgb palette(ColorCategory c) {
  switch (c) {
    case ColorCategory::kCat1: return {220, 60, 60};
    case ColorCategory::kCat2: return {240, 240, 80};
    case ColorCategory::kCat3: return {60, 60, 220};
    case ColorCategory::kCat4: return {40, 230, 40};
    case ColorCategory::kBackground: break;
  }
  return kBodyColor;
}

const OrganTruth& PhantomTruth::at(OrganId id) const {
  for (const auto& o : organs)
    if (o.organ == id) return o;
  throw ArgumentError("phantom has no " + std::string(organ_name(id)));
}

PhantomTruth generate_phantom(const PhantomParams& params,
                              const anatomy::Registry& registry) {
  if (params.noise < 0 || params.noise > 255)
    throw ArgumentError("noise amplitude must be in 0..255");
  if (!(params.placement_jitter >= 0.0 && params.placement_jitter <= 1.0))
    throw ArgumentError("placement jitter must be in [0, 1]");
  if (!(params.clutter_ratio >= 0.0))
    throw ArgumentError("clutter ratio must be >= 0");
  for (double p : params.presence)
    if (!(p >= 0.0 && p <= 1.0))
      throw ArgumentError("presence probabilities must be in [0, 1]");

  std::vector<std::uint8_t> occupied(
      static_cast<std::size_t>(kCanonicalWidth) * kCanonicalHeight);
  const auto placed = place_organs(params, registry, occupied);
  const auto clutter = scatter_clutter(params, registry, placed, occupied);

  // Palette index per pixel: 0 background, 1 body, 2.. categories.
  std::vector<std::uint8_t> paint(occupied.size(), 0);
  const double bcx = (kCanonicalWidth - 1) / 2.0, bcy = (kCanonicalHeight - 1) / 2.0;
  const double brx = 0.49 * kCanonicalWidth, bry = 0.49 * kCanonicalHeight;
  for (int y = 0; y < kCanonicalHeight; ++y)
    for (int x = 0; x < kCanonicalWidth; ++x) {
      const double u = (x - bcx) / brx, v = (y - bcy) / bry;
      const std::size_t i = static_cast<std::size_t>(y) * kCanonicalWidth + x;
      if (u * u + v * v <= 1.0) paint[i] = 1;
      if (clutter[i]) paint[i] = static_cast<std::uint8_t>(clutter[i] + 1);
    }

  PhantomTruth truth;
  truth.clutter = BitMask(kCanonicalWidth, kCanonicalHeight);
  for (std::size_t i = 0; i < clutter.size(); ++i)
    truth.clutter.bits()[i] = clutter[i] ? 1 : 0;
  for (const auto& p : placed) {
    OrganTruth o{p.organ, p.present, p.box,
                 BitMask(kCanonicalWidth, kCanonicalHeight)};
    if (p.present) {
      const auto tag = static_cast<std::uint8_t>(static_cast<int>(p.category) + 2);
      for (int y = 0; y < p.box.h; ++y)
        for (int x = 0; x < p.box.w; ++x)
          if (p.local.get(x, y)) {
            o.mask.set(p.box.x + x, p.box.y + y);
            paint[static_cast<std::size_t>(p.box.y + y) * kCanonicalWidth +
                  p.box.x + x] = tag;
          }
    }
    truth.organs.push_back(std::move(o));
  }

  std::array<Rgb, 6> colors{kBackgroundColor, kBodyColor,
                            palette(ColorCategory::kCat1),
                            palette(ColorCategory::kCat2),
                            palette(ColorCategory::kCat3),
                            palette(ColorCategory::kCat4)};
  Rng noise(derive_seed(params.seed, 2));
  auto bytes = truth.image.bytes();
  for (std::size_t i = 0; i < paint.size(); ++i) {
    const Rgb c = colors[paint[i]];
    bytes[3 * i] = jitter(c.r, params.noise, noise);
    bytes[3 * i + 1] = jitter(c.g, params.noise, noise);
    bytes[3 * i + 2] = jitter(c.b, params.noise, noise);
  }
  return truth;
}

PhantomTruth augment_truth(const PhantomTruth& truth,
                           const raster::AugmentTransform& t) {
  PhantomTruth out;
  out.image = raster::apply_transform(truth.image, t);
  out.clutter = raster::apply_transform(truth.clutter, t);
  const int w = truth.image.width(), h = truth.image.height();
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double theta = t.rotation_deg * 3.14159265358979323846 / 180.0;
  const double s = 1.0 + t.scale;
  for (const auto& o : truth.organs) {
    OrganTruth a = o;
    a.mask = raster::apply_transform(o.mask, t);
    const double ux = o.box.x - cx, uy = o.box.y - cy;
    const double fx = s * (std::cos(theta) * ux - std::sin(theta) * uy) + cx + t.dx;
    const double fy = s * (std::sin(theta) * ux + std::cos(theta) * uy) + cy + t.dy;
    const int bx = static_cast<int>(std::lround(fx));
    const int by = static_cast<int>(std::lround(fy));
    const int x0 = std::clamp(bx, 0, w - 1), y0 = std::clamp(by, 0, h - 1);
    const int x1 = std::clamp(bx + o.box.w, x0 + 1, w);
    const int y1 = std::clamp(by + o.box.h, y0 + 1, h);
    a.box = {x0, y0, x1 - x0, y1 - y0};
    if (a.present && a.mask.none()) a.present = false;
    out.organs.push_back(std::move(a));
  }
  return out;
}

const ManifestRow* ManifestImage::find(OrganId id) const {
  for (const auto& r : rows)
    if (r.organ == id) return &r;
  return nullptr;
}

std::filesystem::path generate_dataset(int n, const PhantomParams& params,
                                       const anatomy::Registry& registry,
                                       const std::filesystem::path& out_dir) {
  if (n < 1) throw ArgumentError("dataset size must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": " + ec.message());
  std::vector<ManifestRow> rows;
  for (int i = 0; i < n; ++i) {
    PhantomParams p = params;
    p.seed = params.seed + static_cast<std::uint64_t>(i);
    const PhantomTruth truth = generate_phantom(p, registry);
    char stem[32];
    std::snprintf(stem, sizeof stem, "phantom_%04d", i);
    const std::string image_name = std::string(stem) + ".png";
    raster::save_image(truth.image, out_dir / image_name);
    for (const auto& o : truth.organs) {
      ManifestRow row{image_name, o.organ, o.present, {}, o.box};
      if (o.present) {
        row.mask_path = std::string(stem) + "." + std::string(organ_name(o.organ)) + ".png";
        raster::encode_mask(o.mask, out_dir / row.mask_path);
      } else {
        row.box = {0, 0, 0, 0};
      }
      rows.push_back(std::move(row));
    }
  }
  const auto manifest = out_dir / "manifest.csv";
  write_manifest(rows, manifest);
  return manifest;
}

namespace {

constexpr const char* kManifestHeader =
    "image_path,organ,present,mask_path,box_x,box_y,box_w,box_h";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_int(const std::string& s, int line) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    throw ParseError(line, "expected an integer, got '" + s + "'");
  }
  if (used != s.size()) throw ParseError(line, "expected an integer, got '" + s + "'");
  return v;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  const auto base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, path.string() + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader)
    throw ParseError(1, path.string() + ": unexpected manifest header");
  std::vector<ManifestRow> rows;
  for (int no = 2; std::getline(in, line); ++no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 8) throw ParseError(no, "expected 8 columns");
    ManifestRow r;
    r.image_path = cells[0];
    if (r.image_path.empty()) throw ParseError(no, "empty image path");
    if (r.image_path.is_relative()) r.image_path = base / r.image_path;
    const auto organ = parse_organ(cells[1]);
    if (!organ) throw ParseError(no, "unknown organ '" + cells[1] + "'");
    r.organ = *organ;
    if (cells[2] != "0" && cells[2] != "1")
      throw ParseError(no, "present must be 0 or 1");
    r.present = cells[2] == "1";
    if (!cells[3].empty()) {
      r.mask_path = cells[3];
      if (r.mask_path.is_relative()) r.mask_path = base / r.mask_path;
    } else if (r.present) {
      throw ParseError(no, "present organ without a mask path");
    }
    r.box = {parse_int(cells[4], no), parse_int(cells[5], no),
             parse_int(cells[6], no), parse_int(cells[7], no)};
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::filesystem::path& path) {
  std::ostringstream out;
  out << kManifestHeader << '\n';
  for (const auto& r : rows) {
    const std::string image = r.image_path.generic_string();
    const std::string mask = r.mask_path.generic_string();
    if (image.find(',') != std::string::npos || mask.find(',') != std::string::npos)
      throw ArgumentError("manifest paths must not contain commas");
    out << image << ',' << organ_name(r.organ) << ',' << (r.present ? 1 : 0)
        << ',' << mask << ',' << r.box.x << ',' << r.box.y << ',' << r.box.w
        << ',' << r.box.h << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot write manifest");
  f << out.str();
  if (!f) throw IoError(path.string() + ": write failed");
}

std::vector<ManifestImage> group_by_image(const std::vector<ManifestRow>& rows) {
  std::vector<ManifestImage> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ManifestImage& m) {
      return m.image_path == r.image_path;
    });
    if (it == out.end()) {
      out.push_back({r.image_path, {}});
      it = out.end() - 1;
    }
    it->rows.push_back(r);
  }
  return out;
}

PhantomTruth load_truth(const ManifestImage& entry,
                        const anatomy::Registry& registry) {
  PhantomTruth truth;
  truth.image = raster::load_image(entry.image_path);
  truth.clutter = BitMask(truth.image.width(), truth.image.height());
  for (const auto& spec : registry) {
    OrganTruth o{spec.organ, false, {0, 0, 0, 0},
                 BitMask(truth.image.width(), truth.image.height())};
    if (const ManifestRow* r = entry.find(spec.organ); r && r->present) {
      o.present = true;
      o.box = r->box;
      o.mask = raster::decode_mask(r->mask_path);
      if (o.mask.width() != truth.image.width() ||
          o.mask.height() != truth.image.height())
        throw FormatError(r->mask_path.string() + ": mask size differs from image");
    }
    truth.organs.push_back(std::move(o));
  }
  return truth;
}

}  // namespace organseg::phantom
