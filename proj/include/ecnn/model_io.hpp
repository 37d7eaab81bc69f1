// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecnn/modelir.hpp"
#include "ecnn/qmodel.hpp"

namespace ecnn {

// On-disk model: a versioned JSON document plus a little-endian float32
// blob holding every parameter group at the offset/length the document
// records. Q-formats are present once the model has been quantized.
struct ModelFile {
  ModelIR model;
  ModelWeights weights;
  std::optional<std::vector<LayerFormats>> formats;
  QFormat input_fmt = UQ(8);
};

inline constexpr int kModelFileVersion = 1;

// Writes `path` and `path` with its extension replaced by ".bin".
void save_model(const std::string& path, const ModelFile& f);
ModelFile load_model(const std::string& path);

ModelFile from_quantized(const QuantizedModel& q);
QuantizedModel to_quantized(const ModelFile& f);

// Topology only, no parameters.
std::string model_to_json(const ModelIR& m);
ModelIR model_from_json(const std::string& text);

}  // namespace ecnn
