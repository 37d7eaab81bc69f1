// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ecnn {

// Leaf-module inner loops over 32-channel HWC int16 planes with int32
// accumulators.
//
// conv3x3: `in` is (w+2) x (h+2) pixels, `acc` is w x h; acc += 3x3 leaf.
// conv1x1: `in` and `acc` are n pixels; acc += 1x1 leaf.
//
// Weights are packed by pack_3x3 / pack_1x1 as [tap][16 input pairs][32 out][2].
struct KernelSet {
  const char* name;
  void (*conv3x3)(const int16_t* in, int w, int h, const int16_t* packed, int32_t* acc);
  void (*conv1x1)(const int16_t* in, int n, const int16_t* packed, int32_t* acc);
};

// From [9 taps][32 out][32 in].
std::vector<int16_t> pack_3x3(const int16_t* w3);
// From [32 out][32 in].
std::vector<int16_t> pack_1x1(const int16_t* w1);

const KernelSet& scalar_kernels();
// Null when the CPU lacks AVX2 or the build has no AVX2 support.
const KernelSet* avx2_kernels();
// AVX2 when available unless ECNNKIT_ISA=scalar.
const KernelSet& active_kernels();

}  // namespace ecnn
