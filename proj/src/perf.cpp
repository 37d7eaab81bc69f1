// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/perf.hpp"

#include <algorithm>

#include "ecnn/paramcodec.hpp"

namespace ecnn {

InstrPerf instruction_perf(const Instruction& ins) {
  InstrPerf p;
  p.ciu = int64_t{ins.tiles_x} * ins.tiles_y * ins.lm;
  p.idu = int64_t{decode_cycles_per_leaf()} * ins.lm;
  p.idu_bound = p.idu > p.ciu;
  return p;
}

int64_t block_cycles(const std::vector<InstrPerf>& instrs) {
  if (instrs.empty()) return 0;
  int64_t t = instrs.front().idu;
  for (std::size_t i = 0; i + 1 < instrs.size(); ++i) t += std::max(instrs[i].ciu, instrs[i + 1].idu);
  return t + instrs.back().ciu;
}

PerfReport perf(const Program& p, const ModelIR& m, const BlockPlan& plan, const EngineModel& engine, double fps) {
  if (fps <= 0) throw Error("frame rate must be positive");
  PerfReport r;
  for (const Instruction& ins : p.instrs) r.instrs.push_back(instruction_perf(ins));
  r.cycles_per_block = block_cycles(r.instrs);
  r.blocks = plan.block_count();
  r.fps = fps;
  r.cycles_per_frame = static_cast<double>(r.cycles_per_block) * static_cast<double>(r.blocks);
  r.cycles_per_second = r.cycles_per_frame * fps;
  r.max_fps = r.cycles_per_frame > 0 ? engine.clock_hz / r.cycles_per_frame : 0;
  r.feasible = r.cycles_per_second <= engine.clock_hz;

  const BandwidthReport bw = block_bandwidth(m, plan, fps, m.input_channels(), m.output_channels());
  r.dram_bytes_per_frame = bw.input_bytes_per_frame + bw.output_bytes_per_frame;
  r.dram_gb_per_s = bw.gb_per_s;

  const double out_pixels = static_cast<double>(plan.out_w) * plan.out_h;
  // Multiplier-cycles while the CIU is busy; every busy multiplier does one MAC.
  double capacity = 0;
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const bool er = p.instrs[i].op == Opcode::ER;
    capacity += static_cast<double>(r.instrs[i].ciu) *
                static_cast<double>(er ? engine.total_multipliers() : engine.conv3x3_multipliers);
  }
  capacity *= static_cast<double>(r.blocks);
  const double executed = 2.0 * capacity;
  const double hw_ops = intrinsic_complexity(m, CountMode::Hardware).intrinsic_kop_per_pixel * 1000.0 * out_pixels;
  const double model_macs = intrinsic_complexity(m, CountMode::Model).intrinsic_kop_per_pixel * 500.0 * out_pixels;
  r.ncr_effective = hw_ops > 0 ? executed / hw_ops : 0;
  r.utilization = capacity > 0 ? model_macs / capacity : 0;
  return r;
}

}  // namespace ecnn
