// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "ecnn/banks.hpp"
#include "ecnn/perf.hpp"
#include "helpers.hpp"

using namespace ecnn;
using ecnn::testing::compile_linked;

TEST_CASE("instruction cycle counts") {
  Instruction er;
  er.op = Opcode::ER;
  er.tiles_x = 116 / kTileW;
  er.tiles_y = 116 / kTileH;
  er.lm = 1;
  const InstrPerf p = instruction_perf(er);
  CHECK(p.ciu == 1682);
  CHECK(p.idu == 256);
  CHECK_FALSE(p.idu_bound);
  er.lm = 4;
  CHECK(instruction_perf(er).ciu == 4 * 1682);
  er.tiles_x = 4;
  er.tiles_y = 8;
  CHECK(instruction_perf(er).idu_bound);
}

TEST_CASE("two-stage pipeline") {
  CHECK(block_cycles({}) == 0);
  CHECK(block_cycles({{100, 256, false}}) == 356);
  // 256 + max(1000, 512) + max(200, 256) + 300
  CHECK(block_cycles({{1000, 256, false}, {200, 512, true}, {300, 256, false}}) == 256 + 1000 + 256 + 300);
  std::vector<InstrPerf> v = {{500, 256, false}, {700, 256, false}};
  const int64_t base = block_cycles(v);
  v[1].ciu += 10;
  CHECK(block_cycles(v) == base + 10);
  v.push_back({1, 256, true});
  CHECK(block_cycles(v) > base);
}

TEST_CASE("engine figures") {
  const EngineModel e;
  CHECK(e.total_multipliers() == 81920);
  CHECK(e.peak_ops_per_s() == doctest::Approx(40.96e12));
  CHECK(e.budget_kop_per_pixel(3840, 2160, 30) == doctest::Approx(164.609).epsilon(1e-5));
  CHECK(e.budget_kop_per_pixel(1920, 1080, 60) == doctest::Approx(329.218).epsilon(1e-5));
}

TEST_CASE("perf report for a UHD denoiser") {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const auto l = compile_linked(m, 1);
  const BlockPlan plan = plan_blocks(m, 3840, 2160, 128);
  const PerfReport r = perf(l.compiled.program, m, plan, EngineModel{}, 30);
  CHECK(r.blocks == 646);
  CHECK(r.cycles_per_block == block_cycles(r.instrs));
  CHECK(r.cycles_per_second == doctest::Approx(static_cast<double>(r.cycles_per_block) * 646 * 30));
  CHECK(r.feasible);
  CHECK(r.max_fps > 30);
  const BandwidthReport bw = block_bandwidth(m, plan, 30, 3, 3);
  CHECK(r.dram_gb_per_s == doctest::Approx(bw.gb_per_s));
  CHECK(r.ncr_effective >= 1.0);
  CHECK(r.utilization > 0.0);
  CHECK(r.utilization <= 1.0);
  CHECK_THROWS_AS(perf(l.compiled.program, m, plan, EngineModel{}, 0), Error);
}

TEST_CASE("bank mappings") {
  for (int ty = 0; ty < 4; ++ty)
    for (int tx = 0; tx < 8; ++tx) CHECK(bank_of(BankMapping::Normal, tx, ty) == tx % 8);
  // a 2x2 tile group lands on four banks under the interleaved mapping
  for (int ty = 0; ty < 64; ty += 2)
    for (int tx = 0; tx < 32; tx += 2) {
      std::set<int> b;
      for (int d = 0; d < 4; ++d) b.insert(bank_of(BankMapping::Interleaved, tx + d % 2, ty + d / 2));
      CHECK(b.size() == 4);
    }
}

TEST_CASE("bank conflict suites") {
  for (Opcode op : {Opcode::CONV, Opcode::ER, Opcode::DNX2}) {
    const BankSuiteResult s = bank_suite(op, BankMapping::Normal);
    INFO(to_string(op));
    CHECK(s.cases > 0);
    CHECK(s.accesses > 0);
    CHECK(s.conflicts == 0);
  }
  CHECK(bank_suite(Opcode::UPX2, BankMapping::Normal).conflicts > 0);
  const BankSuiteResult up = bank_suite(Opcode::UPX2, BankMapping::Interleaved);
  CHECK(up.accesses > 0);
  CHECK(up.conflicts == 0);
}

TEST_CASE("compiled programs access banks without conflicts") {
  for (Family f : {Family::Dn, Family::SR2, Family::SR4, Family::Dn12ch}) {
    const auto l = compile_linked(build_ernet(f, 3, 2, 1), 2);
    const auto trace = program_accesses(l.compiled.program);
    INFO(to_string(f));
    CHECK_FALSE(trace.empty());
    CHECK(bank_conflicts(trace).empty());
  }
}

TEST_CASE("conflict detection") {
  std::vector<Access> t(2);
  t[0].tx = 0;
  t[1].tx = 8;  // same bank, same cycle
  CHECK(bank_conflicts(t).size() == 1);
  t[1].write = true;  // other port
  CHECK(bank_conflicts(t).empty());
  t[1].write = false;
  t[1].cycle = 1;
  CHECK(bank_conflicts(t).empty());
}
