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

// Compiled with -mavx2 -mfma. Nothing in this file may run before
// detected_isa() has confirmed host support.

#include <immintrin.h>

#include <algorithm>
#include <cstring>
#include <vector>

#include "organseg/simd/kernels.hpp"

namespace organseg::simd::avx2 {
namespace {

constexpr int kMr = 6;
constexpr int kNr = 16;
constexpr int kKc = 256;

inline __m256i tail_mask(int count) {
  alignas(32) static const int kBits[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                            0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kBits + 8 - count));
}

// Packs rows [0, kc) of a K x N block into 16-wide column panels, zero padded.
void pack_b(int kc, int n, const float* b, int ldb, float* packed) {
  const int panels = (n + kNr - 1) / kNr;
  for (int p = 0; p < panels; ++p) {
    const int j0 = p * kNr;
    const int nr = std::min(kNr, n - j0);
    float* dst = packed + static_cast<std::ptrdiff_t>(p) * kc * kNr;
    for (int k = 0; k < kc; ++k) {
      const float* src = b + static_cast<std::ptrdiff_t>(k) * ldb + j0;
      float* d = dst + k * kNr;
      if (nr == kNr) {
        _mm256_storeu_ps(d, _mm256_loadu_ps(src));
        _mm256_storeu_ps(d + 8, _mm256_loadu_ps(src + 8));
      } else {
        int j = 0;
        for (; j < nr; ++j) d[j] = src[j];
        for (; j < kNr; ++j) d[j] = 0.0f;
      }
    }
  }
}

template <int R>
void micro_kernel(int kc, const float* a, int lda, const float* bp, float* c,
                  int ldc, int nr) {
  __m256 acc[R][2];
  for (int r = 0; r < R; ++r) {
    acc[r][0] = _mm256_setzero_ps();
    acc[r][1] = _mm256_setzero_ps();
  }
  for (int k = 0; k < kc; ++k) {
    const __m256 b0 = _mm256_loadu_ps(bp + k * kNr);
    const __m256 b1 = _mm256_loadu_ps(bp + k * kNr + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_broadcast_ss(a + static_cast<std::ptrdiff_t>(r) * lda + k);
      acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
      acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
    }
  }
  if (nr == kNr) {
    for (int r = 0; r < R; ++r) {
      float* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
      _mm256_storeu_ps(crow, _mm256_add_ps(_mm256_loadu_ps(crow), acc[r][0]));
      _mm256_storeu_ps(crow + 8,
                       _mm256_add_ps(_mm256_loadu_ps(crow + 8), acc[r][1]));
    }
    return;
  }
  const __m256i m0 = tail_mask(std::min(nr, 8));
  const __m256i m1 = tail_mask(std::max(nr - 8, 0));
  for (int r = 0; r < R; ++r) {
    float* crow = c + static_cast<std::ptrdiff_t>(r) * ldc;
    _mm256_maskstore_ps(
        crow, m0, _mm256_add_ps(_mm256_maskload_ps(crow, m0), acc[r][0]));
    if (nr > 8)
      _mm256_maskstore_ps(crow + 8, m1,
                          _mm256_add_ps(_mm256_maskload_ps(crow + 8, m1),
                                        acc[r][1]));
  }
}

using MicroKernel = void (*)(int, const float*, int, const float*, float*, int,
                             int);
constexpr MicroKernel kKernels[kMr + 1] = {
    nullptr,         micro_kernel<1>, micro_kernel<2>, micro_kernel<3>,
    micro_kernel<4>, micro_kernel<5>, micro_kernel<6>};

void gemm(int m, int n, int k, const float* a, int lda, const float* b,
          int ldb, float* c, int ldc, bool accumulate) {
  if (!accumulate)
    for (int i = 0; i < m; ++i)
      std::fill(c + static_cast<std::ptrdiff_t>(i) * ldc,
                c + static_cast<std::ptrdiff_t>(i) * ldc + n, 0.0f);
  if (m == 0 || n == 0 || k == 0) return;

  thread_local std::vector<float> packed;
  const int panels = (n + kNr - 1) / kNr;
  packed.resize(static_cast<std::size_t>(panels) * kKc * kNr);

  for (int k0 = 0; k0 < k; k0 += kKc) {
    const int kc = std::min(kKc, k - k0);
    pack_b(kc, n, b + static_cast<std::ptrdiff_t>(k0) * ldb, ldb,
           packed.data());
    for (int i0 = 0; i0 < m; i0 += kMr) {
      const int mr = std::min(kMr, m - i0);
      const float* ablk = a + static_cast<std::ptrdiff_t>(i0) * lda + k0;
      for (int p = 0; p < panels; ++p) {
        const int j0 = p * kNr;
        kKernels[mr](kc, ablk, lda,
                     packed.data() + static_cast<std::ptrdiff_t>(p) * kc * kNr,
                     c + static_cast<std::ptrdiff_t>(i0) * ldc + j0, ldc,
                     std::min(kNr, n - j0));
      }
    }
  }
}

void add_bias(float* y, const float* bias, std::size_t rows,
              std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = y + r * cols;
    std::size_t c = 0;
    for (; c + 8 <= cols; c += 8)
      _mm256_storeu_ps(row + c, _mm256_add_ps(_mm256_loadu_ps(row + c),
                                              _mm256_loadu_ps(bias + c)));
    for (; c < cols; ++c) row[c] += bias[c];
  }
}

void relu(float* x, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(x + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) x[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(const float* out, float* grad, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 keep = _mm256_cmp_ps(_mm256_loadu_ps(out + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(grad + i, _mm256_and_ps(keep, _mm256_loadu_ps(grad + i)));
  }
  for (; i < n; ++i)
    if (!(out[i] > 0.0f)) grad[i] = 0.0f;
}

void maxpool2x2(const float* in, int h, int w, int c, float* out,
                std::uint32_t* argmax) {
  const int oh = h / 2, ow = w / 2;
  const std::size_t offs[4] = {0, static_cast<std::size_t>(c),
                               static_cast<std::size_t>(w) * c,
                               static_cast<std::size_t>(w + 1) * c};
  const __m256i lane = _mm256_setr_epi32(0, 1, 2, 3, 4, 5, 6, 7);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const std::size_t o = (static_cast<std::size_t>(oy) * ow + ox) * c;
      const std::size_t base =
          (static_cast<std::size_t>(2 * oy) * w + 2 * ox) * c;
      int ch = 0;
      for (; ch + 8 <= c; ch += 8) {
        __m256 best = _mm256_loadu_ps(in + base + ch);
        __m256i idx = _mm256_add_epi32(
            _mm256_set1_epi32(static_cast<int>(base + ch)), lane);
        for (int q = 1; q < 4; ++q) {
          const std::size_t start = base + offs[q] + ch;
          const __m256 v = _mm256_loadu_ps(in + start);
          const __m256 gt = _mm256_cmp_ps(v, best, _CMP_GT_OQ);
          best = _mm256_blendv_ps(best, v, gt);
          const __m256i cand = _mm256_add_epi32(
              _mm256_set1_epi32(static_cast<int>(start)), lane);
          idx = _mm256_castps_si256(_mm256_blendv_ps(
              _mm256_castsi256_ps(idx), _mm256_castsi256_ps(cand), gt));
        }
        _mm256_storeu_ps(out + o + ch, best);
        _mm256_storeu_si256(reinterpret_cast<__m256i*>(argmax + o + ch), idx);
      }
      for (; ch < c; ++ch) {
        std::size_t bi = base + ch;
        float v = in[bi];
        for (int q = 1; q < 4; ++q) {
          const std::size_t idx = base + offs[q] + ch;
          if (in[idx] > v) {
            v = in[idx];
            bi = idx;
          }
        }
        out[o + ch] = v;
        argmax[o + ch] = static_cast<std::uint32_t>(bi);
      }
    }
  }
}

void sgd_momentum(float* w, float* v, const float* g, std::size_t n, float lr,
                  float momentum) {
  const __m256 mu = _mm256_set1_ps(momentum);
  const __m256 rate = _mm256_set1_ps(lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 decayed = _mm256_mul_ps(mu, _mm256_loadu_ps(v + i));
    const __m256 step = _mm256_mul_ps(rate, _mm256_loadu_ps(g + i));
    const __m256 nv = _mm256_sub_ps(decayed, step);
    _mm256_storeu_ps(v + i, nv);
    _mm256_storeu_ps(w + i, _mm256_add_ps(_mm256_loadu_ps(w + i), nv));
  }
  for (; i < n; ++i) {
    const float decayed = momentum * v[i];
    const float step = lr * g[i];
    v[i] = decayed - step;
    w[i] += v[i];
  }
}

void classify_rgb(const std::uint8_t* rgb, std::size_t n, const float* weights,
                  const float* bias, std::uint8_t* out) {
  const __m256 inv = _mm256_set1_ps(255.0f);
  std::size_t i = 0;
  alignas(32) float rs[8], gs[8], bs[8];
  alignas(32) int winners[8];
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) {
      rs[l] = rgb[3 * (i + l)];
      gs[l] = rgb[3 * (i + l) + 1];
      bs[l] = rgb[3 * (i + l) + 2];
    }
    const __m256 r = _mm256_div_ps(_mm256_load_ps(rs), inv);
    const __m256 g = _mm256_div_ps(_mm256_load_ps(gs), inv);
    const __m256 b = _mm256_div_ps(_mm256_load_ps(bs), inv);
    __m256 best_score = _mm256_setzero_ps();
    __m256i best = _mm256_setzero_si256();
    for (int k = 0; k < 5; ++k) {
      const float* wk = weights + 3 * k;
      __m256 s = _mm256_mul_ps(_mm256_set1_ps(wk[0]), r);
      s = _mm256_add_ps(s, _mm256_mul_ps(_mm256_set1_ps(wk[1]), g));
      s = _mm256_add_ps(s, _mm256_mul_ps(_mm256_set1_ps(wk[2]), b));
      s = _mm256_add_ps(s, _mm256_set1_ps(bias[k]));
      if (k == 0) {
        best_score = s;
        continue;
      }
      const __m256 gt = _mm256_cmp_ps(s, best_score, _CMP_GT_OQ);
      best_score = _mm256_blendv_ps(best_score, s, gt);
      best = _mm256_castps_si256(_mm256_blendv_ps(
          _mm256_castsi256_ps(best),
          _mm256_castsi256_ps(_mm256_set1_epi32(k)), gt));
    }
    _mm256_store_si256(reinterpret_cast<__m256i*>(winners), best);
    for (int l = 0; l < 8; ++l) out[i + l] = static_cast<std::uint8_t>(winners[l]);
  }
  if (i < n) scalar::kTable.classify_rgb(rgb + 3 * i, n - i, weights, bias, out + i);
}

}  // namespace

const Kernels kTable = {gemm,       add_bias,     relu,        relu_backward,
                        maxpool2x2, sgd_momentum, classify_rgb};

}  // namespace organseg::simd::avx2
