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

#include <algorithm>
#include <cstring>

#include "organseg/simd/kernels.hpp"

namespace organseg::simd::scalar {
namespace {

void gemm(int m, int n, int k, const float* a, int lda, const float* b,
          int ldb, float* c, int ldc, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    float* crow = c + static_cast<std::ptrdiff_t>(i) * ldc;
    if (!accumulate) std::fill(crow, crow + n, 0.0f);
    const float* arow = a + static_cast<std::ptrdiff_t>(i) * lda;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void add_bias(float* y, const float* bias, std::size_t rows,
              std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = y + r * cols;
    for (std::size_t c = 0; c < cols; ++c) row[c] += bias[c];
  }
}

void relu(float* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* out, float* grad, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!(out[i] > 0.0f)) grad[i] = 0.0f;
}

void maxpool2x2(const float* in, int h, int w, int c, float* out,
                std::uint32_t* argmax) {
  const int oh = h / 2, ow = w / 2;
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c;
      const std::size_t base =
          (static_cast<std::size_t>(2 * oy) * w + 2 * ox) * c;
      const std::size_t offs[4] = {0, static_cast<std::size_t>(c),
                                   static_cast<std::size_t>(w) * c,
                                   static_cast<std::size_t>(w + 1) * c};
      for (int ch = 0; ch < c; ++ch) {
        std::size_t best = base + ch;
        float v = in[best];
        for (int q = 1; q < 4; ++q) {
          const std::size_t idx = base + offs[q] + ch;
          if (in[idx] > v) {
            v = in[idx];
            best = idx;
          }
        }
        out[o + ch] = v;
        argmax[o + ch] = static_cast<std::uint32_t>(best);
      }
    }
  }
}

void sgd_momentum(float* w, float* v, const float* g, std::size_t n, float lr,
                  float momentum) {
  for (std::size_t i = 0; i < n; ++i) {
    const float decayed = momentum * v[i];
    const float step = lr * g[i];
    v[i] = decayed - step;
    w[i] += v[i];
  }
}

void classify_rgb(const std::uint8_t* rgb, std::size_t n, const float* weights,
                  const float* bias, std::uint8_t* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const float r = static_cast<float>(rgb[3 * i]) / 255.0f;
    const float g = static_cast<float>(rgb[3 * i + 1]) / 255.0f;
    const float b = static_cast<float>(rgb[3 * i + 2]) / 255.0f;
    int best = 0;
    float best_score = 0.0f;
    for (int k = 0; k < 5; ++k) {
      const float* wk = weights + 3 * k;
      float s = wk[0] * r;
      s = s + wk[1] * g;
      s = s + wk[2] * b;
      s = s + bias[k];
      if (k == 0 || s > best_score) {
        best_score = s;
        best = k;
      }
    }
    out[i] = static_cast<std::uint8_t>(best);
  }
}

}  // namespace

const Kernels kTable = {gemm,       add_bias,     relu,        relu_backward,
                        maxpool2x2, sgd_momentum, classify_rgb};

}  // namespace organseg::simd::scalar
