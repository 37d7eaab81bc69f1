// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ecnn/compiler.hpp"
#include "ecnn/paramcodec.hpp"
#include "ecnn/quantflow.hpp"

namespace ecnn {

FloatTensor to_float(const Feature& f);
Feature to_feature(const FloatTensor& t, QFormat fmt);

// Smooth pseudo-images in [0, 1) on the UQ8 grid: a few random gradients
// and ripples plus light noise. Deterministic in `seed`.
std::vector<FloatTensor> synthetic_frames(int count, int w, int h, int c, uint64_t seed);

struct ToolchainOptions {
  Norm norm = Norm::L2;
  MachineConfig machine;
  // Parameter memory the plan must fit; 0 uses the machine's capacity.
  uint64_t budget_bytes = 0;
  QFormat input_fmt = UQ(8);
};

struct Build {
  QuantPlan plan;
  QuantizedModel model;
  CompileResult compiled;  // program params already linked
  EncodeResult encoded;
};

// Parameter memory of a format assignment after compilation and encoding.
SizeOracle compiled_size_oracle(const ModelIR& m, const ModelWeights& w, QFormat input_fmt,
                                const MachineConfig& machine);

// Statistics, formats, quantization, compilation, encoding and linking.
Build build(const ModelIR& m, const ModelWeights& w, const std::vector<FloatTensor>& samples,
            const ToolchainOptions& opt = {});

}  // namespace ecnn
