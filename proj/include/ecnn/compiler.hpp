// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ecnn/fbisa.hpp"
#include "ecnn/qmodel.hpp"

namespace ecnn {

// Quantized parameters of one leaf-module in the order the datapath
// consumes them.
struct LeafParams {
  std::vector<int16_t> w3;    // [9 taps (ky*3+kx)][32 out][32 in]
  std::vector<int16_t> w1;    // [32 out][32 in]; ER only
  std::vector<int16_t> bias;  // 32, or 64 on the first ER leaf (3x3 then 1x1)
  friend bool operator==(const LeafParams&, const LeafParams&) = default;
};

inline constexpr std::size_t kLeafW3 = 9 * 32 * 32;
inline constexpr std::size_t kLeafW1 = 32 * 32;

// One restart segment: the parameters of one instruction template.
struct ParamSegment {
  bool has_1x1 = false;
  std::vector<LeafParams> leaves;
  friend bool operator==(const ParamSegment&, const ParamSegment&) = default;
};

struct ParamLayout {
  std::vector<ParamSegment> segments;
  std::vector<std::size_t> instr_segment;  // segment used by each instruction
};

struct CompileResult {
  Program program;
  ParamLayout layout;
  std::size_t pieces = 1;  // sub-regions the upsampling suffix was split into
};

// Lowers a quantized model to a block program for `machine`. Instruction
// param fields hold segment indices until link_params runs.
CompileResult compile(const QuantizedModel& q, const MachineConfig& machine = {});

// Replaces segment indices with restart attributes.
void link_params(Program& p, const ParamLayout& layout, const std::vector<uint32_t>& segment_addr);

}  // namespace ecnn
