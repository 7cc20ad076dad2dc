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
#include <optional>
#include <string_view>

namespace organseg {

// The five organs the pipeline locates, in registry order.
enum class OrganId : std::uint8_t { kBrain, kHeart, kLiver, kKidney, kSpine };

inline constexpr std::array<OrganId, 5> kAllOrgans = {
    OrganId::kBrain, OrganId::kHeart, OrganId::kLiver, OrganId::kKidney,
    OrganId::kSpine};

inline constexpr int index_of(OrganId id) { return static_cast<int>(id); }

std::string_view organ_name(OrganId id);

// Exact, case-sensitive match on the canonical name ("Brain", ...).
std::optional<OrganId> parse_organ(std::string_view name);

// Same, ignoring ASCII case. Used for command-line input.
std::optional<OrganId> parse_organ_relaxed(std::string_view name);

// Pixel color classes. Class order is fixed; it is also the row order of
// every serialized color model.
enum class ColorCategory : std::uint8_t {
  kCat1,
  kCat2,
  kCat3,
  kCat4,
  kBackground
};

inline constexpr int kNumColorClasses = 5;

std::string_view category_name(ColorCategory c);
std::optional<ColorCategory> parse_category(std::string_view name);

// Brain -> CAT1, Spine -> CAT2, Heart -> CAT3, Liver and Kidney -> CAT4.
ColorCategory default_category(OrganId id);

}  // namespace organseg
