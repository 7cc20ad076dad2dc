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

#include "organseg/anatomy.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "organseg/error.hpp"

namespace organseg::anatomy {
namespace {

void validate_spec(const OrganSpec& s) {
  const auto name = std::string(organ_name(s.organ));
  if (s.box_w < 1 || s.box_h < 1)
    throw ValidationError(name + ": box dimensions must be >= 1");
  if (s.box_w > kCanonicalWidth || s.box_h > kCanonicalHeight)
    throw ValidationError(name + ": box larger than the canonical frame");
  const auto& r = s.region;
  if (r.amin > r.amax || r.bmin > r.bmax)
    throw ValidationError(name + ": region minimum exceeds maximum");
  if (r.amin < 0 || r.bmin < 0 || r.amax > kCanonicalWidth ||
      r.bmax > kCanonicalHeight)
    throw ValidationError(name + ": region outside the canonical frame");
  if (s.category == ColorCategory::kBackground)
    throw ValidationError(name + ": organ category cannot be BACKGROUND");
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Parses a non-negative decimal integer consuming the whole token.
bool parse_uint(std::string_view s, int& out) {
  s = trim(s);
  if (s.empty() || s.front() == '-' || s.front() == '+') return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

bool parse_pair(std::string_view s, char sep, int& a, int& b) {
  const auto pos = s.find(sep);
  if (pos == std::string_view::npos) return false;
  return parse_uint(s.substr(0, pos), a) && parse_uint(s.substr(pos + 1), b);
}

}  // namespace

Registry::Registry(std::vector<OrganSpec> specs) : specs_(std::move(specs)) {
  std::array<bool, 5> seen{};
  for (const auto& s : specs_) {
    validate_spec(s);
    if (seen[index_of(s.organ)])
      throw ValidationError("duplicate organ " +
                            std::string(organ_name(s.organ)));
    seen[index_of(s.organ)] = true;
  }
  for (OrganId id : kAllOrgans)
    if (!seen[index_of(id)])
      throw ValidationError("missing organ " + std::string(organ_name(id)));
}

const OrganSpec& Registry::at(OrganId id) const {
  for (const auto& s : specs_)
    if (s.organ == id) return s;
  throw ArgumentError("organ not in registry");
}

Registry builtin_registry() {
  return Registry({
      {OrganId::kBrain, 400, 400, {0, 400, 120, 630}, ColorCategory::kCat1},
      {OrganId::kHeart, 100, 100, {800, 430, 990, 1000}, ColorCategory::kCat3},
      {OrganId::kLiver, 300, 800, {1010, 400, 1400, 710}, ColorCategory::kCat4},
      {OrganId::kKidney, 400, 400, {1200, 190, 1500, 500}, ColorCategory::kCat4},
      {OrganId::kSpine, 600, 200, {100, 50, 400, 400}, ColorCategory::kCat2},
  });
}

Registry parse_registry(std::string_view text) {
  std::vector<OrganSpec> specs;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    OrganSpec spec;
    bool have_organ = false, have_box = false, have_region = false,
         have_cat = false;
    std::istringstream fields{std::string(line)};
    std::string field;
    while (fields >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos)
        throw ParseError(line_no, "expected key=value, got '" + field + "'");
      const std::string_view key = std::string_view(field).substr(0, eq);
      const std::string_view value = std::string_view(field).substr(eq + 1);
      if (key == "organ") {
        const auto id = parse_organ(value);
        if (!id) throw ParseError(line_no, "unknown organ '" + std::string(value) + "'");
        spec.organ = *id;
        have_organ = true;
      } else if (key == "box") {
        if (!parse_pair(value, 'x', spec.box_w, spec.box_h))
          throw ParseError(line_no, "box must be <w>x<h> with non-negative integers");
        if (spec.box_w < 1 || spec.box_h < 1)
          throw ParseError(line_no, "box dimensions must be >= 1");
        have_box = true;
      } else if (key == "region") {
        const auto colon = value.find(':');
        auto& r = spec.region;
        if (colon == std::string_view::npos ||
            !parse_pair(value.substr(0, colon), ',', r.amin, r.bmin) ||
            !parse_pair(value.substr(colon + 1), ',', r.amax, r.bmax))
          throw ParseError(line_no, "region must be <amin>,<bmin>:<amax>,<bmax>");
        have_region = true;
      } else if (key == "category") {
        const auto cat = parse_category(value);
        if (!cat || *cat == ColorCategory::kBackground)
          throw ParseError(line_no, "category must be CAT1..CAT4");
        spec.category = *cat;
        have_cat = true;
      } else {
        throw ParseError(line_no, "unknown key '" + std::string(key) + "'");
      }
    }
    if (!(have_organ && have_box && have_region && have_cat))
      throw ParseError(line_no, "line needs organ, box, region and category");
    specs.push_back(spec);
  }
  return Registry(std::move(specs));
}

std::string serialize_registry(const Registry& registry) {
  std::ostringstream out;
  out << "# organ bounding boxes and plausible top-left regions, "
         "2000x1000 frame\n";
  for (const auto& s : registry) {
    out << "organ=" << organ_name(s.organ) << " box=" << s.box_w << 'x'
        << s.box_h << " region=" << s.region.amin << ',' << s.region.bmin
        << ':' << s.region.amax << ',' << s.region.bmax
        << " category=" << category_name(s.category) << '\n';
  }
  return out.str();
}

PlausibleRegion plausible_region_from_stats(std::span<const Corner> corners) {
  if (corners.empty())
    throw ArgumentError("plausible region needs at least one corner");
  const double n = static_cast<double>(corners.size());
  auto axis = [&](auto get, int limit, int& lo, int& hi) {
    double mean = 0.0;
    for (const auto& c : corners) mean += get(c);
    mean /= n;
    double ss = 0.0;
    for (const auto& c : corners) ss += (get(c) - mean) * (get(c) - mean);
    const double sd = corners.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    // Values within 1e-9 of a multiple of ten are treated as on the grid.
    const double lo_raw = (mean - 3.0 * sd) / 10.0;
    const double hi_raw = (mean + 3.0 * sd) / 10.0;
    lo = static_cast<int>(std::floor(lo_raw + 1e-9)) * 10;
    hi = static_cast<int>(std::ceil(hi_raw - 1e-9)) * 10;
    lo = std::clamp(lo, 0, limit);
    hi = std::clamp(hi, 0, limit);
  };
  PlausibleRegion r;
  axis([](const Corner& c) { return c.a; }, kCanonicalWidth, r.amin, r.amax);
  axis([](const Corner& c) { return c.b; }, kCanonicalHeight, r.bmin, r.bmax);
  return r;
}

Rect clip_to_frame(int x, int y, int w, int h) {
  x = std::clamp(x, 0, kCanonicalWidth - 1);
  y = std::clamp(y, 0, kCanonicalHeight - 1);
  return {x, y, std::min(w, kCanonicalWidth - x),
          std::min(h, kCanonicalHeight - y)};
}

namespace {

std::vector<int> axis_positions(int lo, int hi, int stride) {
  std::vector<int> out;
  for (long v = lo; v <= hi; v += stride) out.push_back(static_cast<int>(v));
  if (out.back() != hi) out.push_back(hi);
  return out;
}

}  // namespace

std::vector<Rect> candidate_boxes(const PlausibleRegion& region, int box_w,
                                  int box_h, int stride) {
  if (stride < 1) throw ArgumentError("stride must be >= 1");
  if (box_w < 1 || box_h < 1) throw ArgumentError("box must be at least 1x1");
  if (region.amin > region.amax || region.bmin > region.bmax)
    throw ArgumentError("region minimum exceeds maximum");
  const auto cols = axis_positions(region.amin, region.amax, stride);
  const auto rows = axis_positions(region.bmin, region.bmax, stride);
  std::vector<Rect> out;
  out.reserve(cols.size() * rows.size());
  // Clipping is monotone per axis, so duplicates can only be adjacent
  // positions on the same axis.
  int last_y = -1;
  for (int b : rows) {
    const Rect probe = clip_to_frame(0, b, 1, 1);
    if (probe.y == last_y) continue;
    last_y = probe.y;
    int last_x = -1;
    for (int a : cols) {
      const Rect r = clip_to_frame(a, b, box_w, box_h);
      if (r.x == last_x) continue;
      last_x = r.x;
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace organseg::anatomy
