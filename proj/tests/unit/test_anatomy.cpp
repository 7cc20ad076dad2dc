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


#include <doctest.h>

#include <cmath>
#include <set>
#include <tuple>
#include <vector>

#include "organseg/anatomy.hpp"
#include "organseg/error.hpp"
#include "organseg/rng.hpp"

using namespace organseg;
using namespace organseg::anatomy;

namespace {

// Every admissible corner by direct scan, clipped, deduplicated, in scan
// order.
std::vector<Rect> enumerate_boxes(const PlausibleRegion& r, int w, int h, int stride) {
  std::vector<Rect> out;
  std::set<std::tuple<int, int, int, int>> seen;
  for (int b = r.bmin; b <= r.bmax; ++b) {
    if ((b - r.bmin) % stride != 0 && b != r.bmax) continue;
    for (int a = r.amin; a <= r.amax; ++a) {
      if ((a - r.amin) % stride != 0 && a != r.amax) continue;
      const int x = std::min(a, kCanonicalWidth - 1);
      const int y = std::min(b, kCanonicalHeight - 1);
      const Rect box{x, y, std::min(w, kCanonicalWidth - x), std::min(h, kCanonicalHeight - y)};
      if (seen.insert({box.x, box.y, box.w, box.h}).second) out.push_back(box);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("builtin registry holds the published priors verbatim") {
  const Registry reg = builtin_registry();
  REQUIRE(reg.size() == 5);
  struct Row {
    OrganId organ;
    int w, h, amin, bmin, amax, bmax;
    ColorCategory cat;
  };
  const Row golden[] = {
      {OrganId::kBrain, 400, 400, 0, 400, 120, 630, ColorCategory::kCat1},
      {OrganId::kHeart, 100, 100, 800, 430, 990, 1000, ColorCategory::kCat3},
      {OrganId::kLiver, 300, 800, 1010, 400, 1400, 710, ColorCategory::kCat4},
      {OrganId::kKidney, 400, 400, 1200, 190, 1500, 500, ColorCategory::kCat4},
      {OrganId::kSpine, 600, 200, 100, 50, 400, 400, ColorCategory::kCat2},
  };
  std::size_t i = 0;
  for (const OrganSpec& s : reg) {
    const Row& g = golden[i++];
    CHECK(s.organ == g.organ);
    CHECK(s.box_w == g.w);
    CHECK(s.box_h == g.h);
    CHECK(s.region == PlausibleRegion{g.amin, g.bmin, g.amax, g.bmax});
    CHECK(s.category == g.cat);
    CHECK(s.category == default_category(s.organ));
  }
}

TEST_CASE("registry file round trip") {
  const Registry reg = builtin_registry();
  const std::string text = serialize_registry(reg);
  CHECK(parse_registry(text) == reg);
  CHECK(serialize_registry(parse_registry(text)) == text);
}

TEST_CASE("registry parsing tolerates comments and whitespace") {
  const std::string text =
      "# priors\n"
      "  organ=Brain   box=400x400 region=0,400:120,630 category=CAT1  # trailing\n"
      "\n"
      "organ=Heart box=100x100 region=800,430:990,1000 category=CAT3\r\n"
      "\torgan=Liver box=300x800 region=1010,400:1400,710 category=CAT4\n"
      "organ=Kidney box=400x400 region=1200,190:1500,500 category=CAT4\n"
      "category=CAT2 region=100,50:400,400 box=600x200 organ=Spine\n";
  CHECK(parse_registry(text) == builtin_registry());
}

TEST_CASE("registry parse errors") {
  const std::string good = serialize_registry(builtin_registry());
  SUBCASE("duplicate organ") {
    CHECK_THROWS_AS(parse_registry(good + "organ=Brain box=10x10 region=0,0:10,10 category=CAT1\n"),
                    ValidationError);
  }
  SUBCASE("missing organ") {
    std::string text;
    for (const auto& s : builtin_registry())
      if (s.organ != OrganId::kSpine)
        text += "organ=" + std::string(organ_name(s.organ)) + " box=10x10 region=0,0:10,10 category=" +
                std::string(category_name(s.category)) + "\n";
    CHECK_THROWS_AS(parse_registry(text), ValidationError);
  }
  SUBCASE("negative box width reports its line") {
    const std::string text = "# header\norgan=Brain box=-400x400 region=0,400:120,630 category=CAT1\n";
    try {
      parse_registry(text);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("malformed fields") {
    CHECK_THROWS_AS(parse_registry("organ=Brain box=400 region=0,400:120,630 category=CAT1\n"), ParseError);
    CHECK_THROWS_AS(parse_registry("organ=Brain box=400x400 region=0,400 category=CAT1\n"), ParseError);
    CHECK_THROWS_AS(parse_registry("organ=Pancreas box=4x4 region=0,0:1,1 category=CAT1\n"), ParseError);
    CHECK_THROWS_AS(parse_registry("organ=Brain box=4x4 region=0,0:1,1 category=CAT9\n"), ParseError);
    CHECK_THROWS_AS(parse_registry("organ=Brain box=4x4 region=0,0:1,1\n"), ParseError);
    CHECK_THROWS_AS(parse_registry("organ=Brain junk box=4x4 region=0,0:1,1 category=CAT1\n"), ParseError);
  }
}

TEST_CASE("plausible region from annotated corners") {
  SUBCASE("zero variance") {
    const std::vector<Corner> c(4, Corner{50, 60});
    CHECK(plausible_region_from_stats(c) == PlausibleRegion{50, 60, 50, 60});
  }
  SUBCASE("two corners on one axis") {
    const std::vector<Corner> c{{0, 0}, {20, 0}};
    // mean 10, s = sqrt(200), raw range [-32.43, 52.43].
    CHECK(plausible_region_from_stats(c) == PlausibleRegion{0, 0, 60, 0});
  }
  SUBCASE("single corner") {
    const std::vector<Corner> c{{100, 200}};
    CHECK(plausible_region_from_stats(c) == PlausibleRegion{100, 200, 100, 200});
  }
  SUBCASE("empty input") {
    CHECK_THROWS_AS(plausible_region_from_stats(std::vector<Corner>{}), ArgumentError);
  }
  SUBCASE("upper bounds clamp to the frame") {
    const std::vector<Corner> c{{1990, 990}, {1900, 900}};
    const auto r = plausible_region_from_stats(c);
    CHECK(r.amax == kCanonicalWidth);
    CHECK(r.bmax == kCanonicalHeight);
  }
}

TEST_CASE("plausible region properties on random corpora") {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const int n = static_cast<int>(rng.uniform_int(1, 12));
    std::vector<Corner> c;
    double ma = 0, mb = 0;
    for (int i = 0; i < n; ++i) {
      c.push_back({rng.uniform(300, 1500), rng.uniform(200, 700)});
      ma += c.back().a;
      mb += c.back().b;
    }
    ma /= n;
    mb /= n;
    const auto r = plausible_region_from_stats(c);
    // Independent arithmetic oracle.
    double sa = 0, sb = 0;
    for (const auto& p : c) {
      sa += (p.a - ma) * (p.a - ma);
      sb += (p.b - mb) * (p.b - mb);
    }
    sa = n > 1 ? std::sqrt(sa / (n - 1)) : 0;
    sb = n > 1 ? std::sqrt(sb / (n - 1)) : 0;
    auto down = [](double v, int hi) { return std::clamp(int(std::floor(v / 10)) * 10, 0, hi); };
    auto up = [](double v, int hi) { return std::clamp(int(std::ceil(v / 10)) * 10, 0, hi); };
    CHECK(r.amin == down(ma - 3 * sa, 2000));
    CHECK(r.amax == up(ma + 3 * sa, 2000));
    CHECK(r.bmin == down(mb - 3 * sb, 1000));
    CHECK(r.bmax == up(mb + 3 * sb, 1000));
    // The mean corner always lies inside, and bounds are multiples of ten.
    CHECK(r.amin <= ma);
    CHECK(ma <= r.amax);
    CHECK(r.bmin <= mb);
    CHECK(mb <= r.bmax);
    CHECK(r.amin % 10 == 0);
    CHECK(r.bmax % 10 == 0);

    // Shifting by a multiple of ten shifts an unclamped region.
    std::vector<Corner> shifted = c;
    for (auto& p : shifted) {
      p.a += 100;
      p.b += 50;
    }
    const auto rs = plausible_region_from_stats(shifted);
    if (r.amin > 0 && rs.amax < 2000) {
      CHECK(rs.amin == r.amin + 100);
      CHECK(rs.amax == r.amax + 100);
    }
    if (r.bmin > 0 && rs.bmax < 1000) {
      CHECK(rs.bmin == r.bmin + 50);
      CHECK(rs.bmax == r.bmax + 50);
    }
  }
}

TEST_CASE("candidate boxes: documented cases") {
  CHECK(candidate_boxes({0, 0, 0, 0}, 10, 10, 1) == std::vector<Rect>{{0, 0, 10, 10}});
  CHECK(candidate_boxes({0, 0, 0, 0}, 10, 10, 37).size() == 1);

  const auto liver = builtin_registry().at(OrganId::kLiver);
  const auto boxes = candidate_boxes(liver.region, liver.box_w, liver.box_h, 10);
  CHECK(boxes.size() == 1280);
  CHECK(boxes.size() == enumerate_boxes(liver.region, liver.box_w, liver.box_h, 10).size());

  const auto two = candidate_boxes({0, 0, 400, 400}, 5, 5, 1000);
  REQUIRE(two.size() == 4);
  CHECK(two[0] == Rect{0, 0, 5, 5});
  CHECK(two[1] == Rect{400, 0, 5, 5});
  CHECK(two[2] == Rect{0, 400, 5, 5});
  CHECK(two[3] == Rect{400, 400, 5, 5});

  CHECK_THROWS_AS(candidate_boxes({0, 0, 10, 10}, 5, 5, 0), ArgumentError);
}

TEST_CASE("candidate boxes match brute force on random regions") {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    const int amin = static_cast<int>(rng.uniform_int(0, 2000));
    const int amax = static_cast<int>(rng.uniform_int(amin, std::min(2000, amin + 600)));
    const int bmin = static_cast<int>(rng.uniform_int(0, 1000));
    const int bmax = static_cast<int>(rng.uniform_int(bmin, std::min(1000, bmin + 400)));
    const int w = static_cast<int>(rng.uniform_int(1, 800));
    const int h = static_cast<int>(rng.uniform_int(1, 800));
    const int stride = static_cast<int>(rng.uniform_int(1, 120));
    const PlausibleRegion r{amin, bmin, amax, bmax};
    const auto got = candidate_boxes(r, w, h, stride);
    CHECK(got == enumerate_boxes(r, w, h, stride));
    CHECK(!got.empty());
    for (const Rect& b : got) {
      CHECK(b.right() <= kCanonicalWidth);
      CHECK(b.bottom() <= kCanonicalHeight);
      CHECK(b.w >= 1);
      CHECK(b.h >= 1);
    }
  }
}

TEST_CASE("every builtin organ yields in-frame candidates in scan order") {
  for (const auto& s : builtin_registry()) {
    const auto boxes = candidate_boxes(s.region, s.box_w, s.box_h, 10);
    REQUIRE(!boxes.empty());
    for (std::size_t i = 1; i < boxes.size(); ++i) {
      const bool same_row = boxes[i].y == boxes[i - 1].y;
      CHECK((same_row ? boxes[i].x > boxes[i - 1].x : boxes[i].y > boxes[i - 1].y));
    }
  }
  // The heart's far corner sits on the frame edge and clips to a 1 px row.
  const auto heart = builtin_registry().at(OrganId::kHeart);
  const auto hb = candidate_boxes(heart.region, heart.box_w, heart.box_h, 10);
  CHECK(hb.back() == Rect{990, 999, 100, 1});
}

TEST_CASE("organ and category names") {
  for (OrganId id : kAllOrgans) CHECK(parse_organ(organ_name(id)) == id);
  CHECK_FALSE(parse_organ("Pancreas").has_value());
  for (int c = 0; c < kNumColorClasses; ++c) {
    const auto cat = static_cast<ColorCategory>(c);
    CHECK(parse_category(category_name(cat)) == cat);
  }
}
