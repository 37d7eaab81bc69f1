// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ecnn/qmodel.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

// Value collections of one layer. `mid` holds ER intermediates after the
// activation, or partial sums of convolutions wider than 32 channels.
struct LayerStats {
  std::vector<double> w, b, out, mid;
};

struct ModelStats {
  std::vector<double> input;
  std::vector<LayerStats> layers;
};

// Floating-point inference with edge-replicated borders. `tap` sees every
// layer's output (and ER intermediates through `mid_tap`).
FloatTensor float_forward(const ModelIR& m, const ModelWeights& w, const FloatTensor& input,
                          const std::function<void(std::size_t, const FloatTensor&)>& tap = {},
                          const std::function<void(std::size_t, const std::vector<double>&)>& mid_tap = {});

// Weights and biases from the model, features from inference over the
// samples. Collections are sorted, so they do not depend on sample order.
ModelStats collect_stats(const ModelIR& m, const ModelWeights& w, const std::vector<FloatTensor>& samples);

struct QuantPlan {
  std::vector<LayerFormats> formats;
  Norm norm = Norm::L2;
  std::vector<std::size_t> demoted;  // layers whose weights were cut to 7 bits, in order
  uint64_t param_bytes = 0;          // size reported by the oracle for the final plan
};

// Parameter memory a candidate plan needs.
using SizeOracle = std::function<uint64_t(const std::vector<LayerFormats>&)>;

// Per-group precision selection, then largest-first 7-bit demotion of
// weight groups until `size_of` fits `budget_bytes`. A null oracle skips
// the budget step.
QuantPlan assign_formats(const ModelIR& m, const ModelStats& stats, Norm norm, QFormat input_fmt = UQ(8),
                         const SizeOracle& size_of = {}, uint64_t budget_bytes = 0);

}  // namespace ecnn
