// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/kernels.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#include <cstring>

namespace ecnn {

namespace {

// One output pixel: broadcast each input channel pair and multiply-add it
// against the 32 packed output pairs.
__attribute__((target("avx2"))) inline void pixel_taps(const int16_t* const* rows, int taps, const int16_t* packed,
                                                         int32_t* a) {
  __m256i s0 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a));
  __m256i s1 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + 8));
  __m256i s2 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + 16));
  __m256i s3 = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + 24));
  for (int t = 0; t < taps; ++t) {
    const int16_t* px = rows[t];
    const __m256i* w = reinterpret_cast<const __m256i*>(packed + static_cast<std::size_t>(t) * 16 * 64);
    for (int p = 0; p < 16; ++p, w += 4) {
      int32_t pair;
      std::memcpy(&pair, px + 2 * p, sizeof pair);
      const __m256i x = _mm256_set1_epi32(pair);
      s0 = _mm256_add_epi32(s0, _mm256_madd_epi16(x, _mm256_loadu_si256(w)));
      s1 = _mm256_add_epi32(s1, _mm256_madd_epi16(x, _mm256_loadu_si256(w + 1)));
      s2 = _mm256_add_epi32(s2, _mm256_madd_epi16(x, _mm256_loadu_si256(w + 2)));
      s3 = _mm256_add_epi32(s3, _mm256_madd_epi16(x, _mm256_loadu_si256(w + 3)));
    }
  }
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(a), s0);
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(a + 8), s1);
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(a + 16), s2);
  _mm256_storeu_si256(reinterpret_cast<__m256i*>(a + 24), s3);
}

__attribute__((target("avx2"))) void conv3x3_avx2(const int16_t* in, int w, int h, const int16_t* packed,
                                                    int32_t* acc) {
  const std::size_t stride = static_cast<std::size_t>(w + 2) * 32;
  const int16_t* rows[9];
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int tap = 0; tap < 9; ++tap)
        rows[tap] = in + static_cast<std::size_t>(y + tap / 3) * stride + static_cast<std::size_t>(x + tap % 3) * 32;
      pixel_taps(rows, 9, packed, acc + (static_cast<std::size_t>(y) * w + x) * 32);
    }
  }
}

__attribute__((target("avx2"))) void conv1x1_avx2(const int16_t* in, int n, const int16_t* packed, int32_t* acc) {
  for (int p = 0; p < n; ++p) {
    const int16_t* row = in + static_cast<std::size_t>(p) * 32;
    pixel_taps(&row, 1, packed, acc + static_cast<std::size_t>(p) * 32);
  }
}

const KernelSet kAvx2{"avx2", conv3x3_avx2, conv1x1_avx2};

}  // namespace

const KernelSet* avx2_kernels() { return __builtin_cpu_supports("avx2") ? &kAvx2 : nullptr; }

}  // namespace ecnn

#else

namespace ecnn {
const KernelSet* avx2_kernels() { return nullptr; }
}  // namespace ecnn

#endif
