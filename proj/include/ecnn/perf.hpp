// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "ecnn/blockflow.hpp"
#include "ecnn/fbisa.hpp"

namespace ecnn {

struct EngineModel {
  int64_t conv3x3_multipliers = 32 * 32 * 9 * 8;
  int64_t conv1x1_multipliers = 32 * 32 * 8;
  double clock_hz = 250e6;

  int64_t total_multipliers() const { return conv3x3_multipliers + conv1x1_multipliers; }
  // MAC = 2 ops.
  double peak_ops_per_s() const { return 2.0 * static_cast<double>(total_multipliers()) * clock_hz; }
  // Ops per output pixel available at a given output rate.
  double budget_kop_per_pixel(double width, double height, double fps) const {
    return peak_ops_per_s() / (width * height * fps) / 1000.0;
  }
};

struct InstrPerf {
  int64_t ciu = 0;  // tiles * lm
  int64_t idu = 0;  // 256 * lm
  bool idu_bound = false;
};

struct PerfReport {
  std::vector<InstrPerf> instrs;
  int64_t cycles_per_block = 0;
  int64_t blocks = 0;
  double fps = 0;
  double cycles_per_frame = 0;
  double cycles_per_second = 0;  // at the requested fps
  double max_fps = 0;
  bool feasible = false;
  double dram_bytes_per_frame = 0;
  double dram_gb_per_s = 0;
  double ncr_effective = 0;  // datapath ops over frame-based hardware ops
  double utilization = 0;    // model MACs over multiplier-cycles while the CIU is busy
};

// Two-stage pipeline: block time = IDU_1 + sum_i max(CIU_i, IDU_{i+1}) + CIU_last.
int64_t block_cycles(const std::vector<InstrPerf>& instrs);
InstrPerf instruction_perf(const Instruction& ins);

// DRAM traffic comes from block_bandwidth with 3 bytes per input and output pixel.
PerfReport perf(const Program& p, const ModelIR& m, const BlockPlan& plan, const EngineModel& engine, double fps);

}  // namespace ecnn
