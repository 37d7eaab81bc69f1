// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecnn/fixedpoint.hpp"
#include "ecnn/modelir.hpp"

namespace ecnn {

// Float parameters of one layer.
//   Conv3x3:  w [out][in][3][3], b [out]
//   Conv1x1:  w [out][in],       b [out]
//   ERModule: w [mid][in][3][3], b [mid], w2 [out][mid], b2 [out]
// Upsampler convs order their outputs group-major: channel g*C + c lands at
// sub-pixel (g % 2, g / 2) after the shuffle.
struct LayerWeights {
  std::vector<float> w, b, w2, b2;
};

struct ModelWeights {
  std::vector<LayerWeights> layers;
};

std::size_t expected_weight_count(const LayerSpec& l);
std::size_t expected_weight2_count(const LayerSpec& l);
std::size_t expected_bias_count(const LayerSpec& l);
std::size_t expected_bias2_count(const LayerSpec& l);

// Seeded random initialization scaled to keep activations O(1).
ModelWeights random_weights(const ModelIR& m, uint64_t seed);
// Zero weights of the right shapes.
ModelWeights zero_weights(const ModelIR& m);
void check_weights(const ModelIR& m, const ModelWeights& w);

// Per-layer formats.
//   w, b    weights and biases (ER: shared by both stages)
//   out     output features
//   mid     ER intermediate after the 3x3 stage, or the partial-sum format
//           of a convolution wider than 32 input channels
struct LayerFormats {
  QFormat w = Q(7);
  QFormat b = Q(7);
  QFormat out = Q(4);
  std::optional<QFormat> mid;
  friend bool operator==(const LayerFormats&, const LayerFormats&) = default;
};

struct QuantLayer {
  LayerFormats fmt;
  std::vector<int16_t> w, b, w2, b2;
};

struct QuantizedModel {
  ModelIR model;
  QFormat input_fmt = UQ(8);
  std::vector<QuantLayer> layers;

  QFormat output_fmt() const { return layers.back().fmt.out; }
};

// Codes for every parameter group at the given formats.
QuantizedModel quantize_model(const ModelIR& m, const ModelWeights& w, const std::vector<LayerFormats>& formats,
                              QFormat input_fmt = UQ(8));

// Structural checks: group sizes, codes in range, bias alignment, residual
// join formats.
void check_quantized(const QuantizedModel& q);

// Exact real value of each code, for float comparisons.
ModelWeights dequantize(const QuantizedModel& q);

}  // namespace ecnn
