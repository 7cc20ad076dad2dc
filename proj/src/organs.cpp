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

#include "organseg/organs.hpp"

#include <algorithm>
#include <cctype>

namespace organseg {
namespace {

constexpr std::array<std::string_view, 5> kOrganNames = {
    "Brain", "Heart", "Liver", "Kidney", "Spine"};
constexpr std::array<std::string_view, 5> kCategoryNames = {
    "CAT1", "CAT2", "CAT3", "CAT4", "BACKGROUND"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::string_view organ_name(OrganId id) { return kOrganNames[index_of(id)]; }

std::optional<OrganId> parse_organ(std::string_view name) {
  for (OrganId id : kAllOrgans)
    if (organ_name(id) == name) return id;
  return std::nullopt;
}

std::optional<OrganId> parse_organ_relaxed(std::string_view name) {
  for (OrganId id : kAllOrgans)
    if (iequals(organ_name(id), name)) return id;
  return std::nullopt;
}

std::string_view category_name(ColorCategory c) {
  return kCategoryNames[static_cast<int>(c)];
}

std::optional<ColorCategory> parse_category(std::string_view name) {
  for (int i = 0; i < kNumColorClasses; ++i)
    if (kCategoryNames[i] == name) return static_cast<ColorCategory>(i);
  return std::nullopt;
}

ColorCategory default_category(OrganId id) {
  switch (id) {
    case OrganId::kBrain:
      return ColorCategory::kCat1;
    case OrganId::kSpine:
      return ColorCategory::kCat2;
    case OrganId::kHeart:
      return ColorCategory::kCat3;
    case OrganId::kLiver:
    case OrganId::kKidney:
      return ColorCategory::kCat4;
  }
  return ColorCategory::kBackground;
}

}  // namespace organseg
