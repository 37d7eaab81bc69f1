// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>

#include "ecnn/kernels.hpp"

namespace ecnn {

std::vector<int16_t> pack_3x3(const int16_t* w3) {
  std::vector<int16_t> p(9 * 16 * 32 * 2);
  for (int tap = 0; tap < 9; ++tap)
    for (int o = 0; o < 32; ++o)
      for (int i = 0; i < 32; ++i) p[((tap * 16 + i / 2) * 32 + o) * 2 + i % 2] = w3[(tap * 32 + o) * 32 + i];
  return p;
}

std::vector<int16_t> pack_1x1(const int16_t* w1) {
  std::vector<int16_t> p(16 * 32 * 2);
  for (int o = 0; o < 32; ++o)
    for (int i = 0; i < 32; ++i) p[((i / 2) * 32 + o) * 2 + i % 2] = w1[o * 32 + i];
  return p;
}

const KernelSet& active_kernels() {
  static const KernelSet* chosen = [] {
    const char* isa = std::getenv("ECNNKIT_ISA");
    if (isa && std::string(isa) == "scalar") return &scalar_kernels();
    const KernelSet* k = avx2_kernels();
    return k ? k : &scalar_kernels();
  }();
  return *chosen;
}

}  // namespace ecnn
