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

// Data-parallel inner loops shared by the color classifier and the shape
// network. Every kernel has a portable scalar reference and an AVX2/FMA
// variant; the variant is chosen once at startup from the host CPU and can be
// overridden for equivalence testing.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace organseg::simd {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

// Best instruction set the host supports among those compiled in.
Isa detected_isa();

// Instruction set currently used by kernels().
Isa active_isa();

// Forces a variant. Throws ArgumentError when the host cannot run it.
void set_active_isa(Isa isa);

struct Kernels {
  // C[M x N] = A[M x K] * B[K x N] (+ C when accumulate). Row-major with
  // explicit leading dimensions.
  void (*gemm)(int m, int n, int k, const float* a, int lda, const float* b,
               int ldb, float* c, int ldc, bool accumulate);

  // y[r][c] += bias[c] for a rows x cols row-major block.
  void (*add_bias)(float* y, const float* bias, std::size_t rows,
                   std::size_t cols);

  // In place max(x, 0).
  void (*relu)(float* x, std::size_t n);

  // grad[i] = 0 where out[i] <= 0.
  void (*relu_backward)(const float* out, float* grad, std::size_t n);

  // 2x2 stride-2 max pool over one HWC feature map (h, w even). Writes the
  // flat input index of each winner; ties keep the first in row-major window
  // order.
  void (*maxpool2x2)(const float* in, int h, int w, int c, float* out,
                     std::uint32_t* argmax);

  // v = momentum * v - lr * g; w += v.
  void (*sgd_momentum)(float* w, float* v, const float* g, std::size_t n,
                       float lr, float momentum);

  // Per pixel argmax over 5 linear class scores of (r, g, b) / 255. weights
  // is 5 x 3 row-major. Ties go to the lowest class index.
  void (*classify_rgb)(const std::uint8_t* rgb, std::size_t n,
                       const float* weights, const float* bias,
                       std::uint8_t* out);
};

const Kernels& kernels();
const Kernels& kernels_for(Isa isa);

namespace scalar {
extern const Kernels kTable;
}
namespace avx2 {
extern const Kernels kTable;
}

}  // namespace organseg::simd
