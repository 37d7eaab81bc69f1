// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/kernels.hpp"

namespace ecnn {

namespace {

inline int16_t packed_at(const int16_t* p, int tap, int out, int in) {
  return p[((tap * 16 + in / 2) * 32 + out) * 2 + in % 2];
}

void conv3x3_scalar(const int16_t* in, int w, int h, const int16_t* packed, int32_t* acc) {
  const int stride = (w + 2) * 32;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int32_t* a = acc + (static_cast<std::size_t>(y) * w + x) * 32;
      for (int tap = 0; tap < 9; ++tap) {
        const int16_t* px = in + static_cast<std::size_t>(y + tap / 3) * stride + (x + tap % 3) * 32;
        for (int o = 0; o < 32; ++o) {
          int32_t s = 0;
          for (int i = 0; i < 32; ++i) s += int32_t{packed_at(packed, tap, o, i)} * px[i];
          a[o] += s;
        }
      }
    }
  }
}

void conv1x1_scalar(const int16_t* in, int n, const int16_t* packed, int32_t* acc) {
  for (int p = 0; p < n; ++p) {
    const int16_t* px = in + static_cast<std::size_t>(p) * 32;
    int32_t* a = acc + static_cast<std::size_t>(p) * 32;
    for (int o = 0; o < 32; ++o) {
      int32_t s = 0;
      for (int i = 0; i < 32; ++i) s += int32_t{packed_at(packed, 0, o, i)} * px[i];
      a[o] += s;
    }
  }
}

const KernelSet kScalar{"scalar", conv3x3_scalar, conv1x1_scalar};

}  // namespace

const KernelSet& scalar_kernels() { return kScalar; }

}  // namespace ecnn
