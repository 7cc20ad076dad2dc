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

#include <atomic>

#include "organseg/error.hpp"
#include "organseg/simd/kernels.hpp"

namespace organseg::simd {
namespace {

bool host_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detected_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
#if defined(ORGANSEG_HAVE_AVX2)
  static const bool avx2 = host_has_avx2();
  if (avx2) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::kAvx2 && detected_isa() != Isa::kAvx2)
    throw ArgumentError("AVX2 kernels are not available on this host");
  active().store(isa, std::memory_order_relaxed);
}

const Kernels& kernels_for(Isa isa) {
#if defined(ORGANSEG_HAVE_AVX2)
  if (isa == Isa::kAvx2) return avx2::kTable;
#endif
  (void)isa;
  return scalar::kTable;
}

const Kernels& kernels() { return kernels_for(active_isa()); }

}  // namespace organseg::simd
