// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "ecnn/qmodel.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn {

// Operations the oracle executes on pixels of the nominal frame grids, in
// the hardware's leaf-module accounting (MAC = 2 ops).
struct OpCounter {
  uint64_t ops = 0;
  uint64_t output_pixels = 0;
  double kop_per_pixel() const { return output_pixels ? static_cast<double>(ops) / output_pixels / 1000.0 : 0.0; }
};

// Whole-frame reference with the datapath's fixed-point semantics. The
// frame is edge-replicated once, layers run in valid mode on absolute
// coordinates, and the result is cropped to the output frame.
Feature oracle_frame(const QuantizedModel& q, const Feature& frame, OpCounter* counter = nullptr);

}  // namespace ecnn
