// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

// Prints one PASS/FAIL line per acceptance criterion; exits 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "ecnn/banks.hpp"
#include "ecnn/blockflow.hpp"
#include "ecnn/oracle.hpp"
#include "ecnn/perf.hpp"
#include "ecnn/simulator.hpp"
#include "ecnn/toolchain.hpp"
#include "helpers.hpp"

using namespace ecnn;

namespace {

int failures = 0;

void report(int n, bool ok, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", n, ok ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  failures += !ok;
}

bool within(double x, double target, double rel) { return std::abs(x - target) <= rel * std::abs(target); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion1() {
  const double bw = frame_bandwidth(1920, 1080, 64, 20, 30, 16);
  report(1, within(bw, 303e9, 0.01) && std::abs(bw / 1e9 - 302.6) < 0.05,
         fmt("frame bandwidth %.2f GB/s (303 GB/s within 1%%)", bw / 1e9));
}

void criterion2() {
  const double a = nbr_plain(40, 100), b = nbr_plain(6, 128);
  report(2, a == 26.0 && std::abs(b - 2.218) < 5e-4 && std::round(b * 10) == 22,
         fmt("NBR(beta=0.4) = %.4f, NBR(D=6, x_i=128) = %.4f", a, b));
}

void criterion3() {
  const double share = 1.0 - 1.0 / ncr_plain(40, 100);
  double worst = 0;
  int worst_d = 0;
  for (int d = 1; d <= 40; ++d) {
    const double rel = std::abs(ncr_discrete(build_plain(d), 128) / ncr_plain(d, 128) - 1.0);
    if (rel > worst) worst = rel, worst_d = d;
  }
  report(3, std::abs(share - 0.903) < 5e-4 && worst <= 0.05,
         fmt("recompute share %.1f%%, max |discrete/analytic - 1| = %.2f%% at D=%d", share * 100, worst * 100, worst_d));
}

void criterion4() {
  const EngineModel e;
  const double uhd30 = e.budget_kop_per_pixel(3840, 2160, 30), hd60 = e.budget_kop_per_pixel(1920, 1080, 60),
               hd30 = e.budget_kop_per_pixel(1920, 1080, 30);
  const bool ok = e.total_multipliers() == 81920 && e.peak_ops_per_s() == 40.96e12 && within(uhd30, 164, 0.01) &&
                  within(hd60, 328, 0.01) && within(hd30, 655, 0.01) && within(uhd30, 164.8, 0.01) &&
                  within(hd60, 329.6, 0.01) && within(hd30, 658.7, 0.01);
  report(4, ok,
         fmt("%lld multipliers, %.2f TOPS, budgets %.2f / %.2f / %.2f KOP/pixel",
             static_cast<long long>(e.total_multipliers()), e.peak_ops_per_s() / 1e12, uhd30, hd60, hd30));
}

void criterion5() {
  const ModelIR dn = build_ernet(Family::Dn, 3, 1, 0);
  const BandwidthReport uhd = block_bandwidth(dn, plan_blocks(dn, 3840, 2160, 128), 30, 3, 3);
  bool ok = within(uhd.gb_per_s, 1.66, 0.05) && std::round(uhd.nbr * 10) == 22;
  std::string detail = fmt("DnERNet-B3R1N0 UHD30 %.4f GB/s NBR %.4f", uhd.gb_per_s, uhd.nbr);
  for (auto [d, target] : {std::pair{11, 2.5}, {15, 2.7}}) {
    const ModelIR p = build_plain(d);
    const double analytic = nbr_plain(d, 128);
    const double measured = block_bandwidth(p, plan_blocks(p, 1920, 1080, 128), 60, 3, 3).nbr;
    ok = ok && within(analytic, target, 0.05) && within(measured, target, 0.05);
    detail += fmt("; D=%d NBR %.3f (blocks %.3f) vs %.1f", d, analytic, measured, target);
  }
  report(5, ok, detail);
}

void criterion6() {
  auto count = [](const ModelIR& m) {
    return compile(quantize_model(m, random_weights(m, 1), testing::simple_formats(m)), MachineConfig{})
        .program.instrs.size();
  };
  const std::size_t dn = count(build_ernet(Family::Dn, 3, 1, 0));
  const std::size_t sr4 = count(build_ernet(Family::SR4, 34, 4, 0));
  report(6, dn == 6 && sr4 <= 50, fmt("DnERNet-B3R1N0 %zu instructions, SR4ERNet-B34R4N0 %zu", dn, sr4));
}

void criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    ModelIR m;
    int size;
  };
  const Case cases[] = {{build_ernet(Family::Dn, 3, 1, 0), 64},
                        {build_ernet(Family::Dn12ch, 3, 1, 0), 64},
                        {build_ernet(Family::SR2, 17, 3, 1), 32},
                        {build_ernet(Family::SR4, 34, 4, 0), 32}};
  bool ok = true;
  std::string detail;
  uint64_t seed = 70;
  for (const Case& c : cases) {
    ++seed;
    const ModelWeights w = random_weights(c.m, seed);
    const Build b = build(c.m, w, synthetic_frames(2, c.size, c.size, c.m.input_channels(), seed));
    const Machine machine(b.compiled.program, b.encoded.container);
    const Feature frame = to_feature(synthetic_frames(1, c.size, c.size, c.m.input_channels(), seed + 1000)[0], UQ(8));
    const BlockPlan plan = plan_blocks(c.m, c.size, c.size, 128);
    const Feature out = run_image(machine, frame, plan, c.m.output_channels());
    const std::size_t diff = testing::count_differences(out, oracle_frame(b.model, frame));
    ok = ok && diff == 0;
    detail += fmt("%s%s %zu", detail.empty() ? "" : ", ", c.m.name.c_str(), diff);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report(7, ok && secs < 60, fmt("differing codes: %s; %.1f s", detail.c_str(), secs));
}

void criterion8() {
  std::mt19937_64 rng(2026);
  int bad_roundtrip = 0, bad_offset = 0;
  double raw = 0, compressed = 0;
  for (int it = 0; it < 1000; ++it) {
    const ParamLayout l = testing::random_layout(rng, 2.0 + static_cast<double>(rng() % 30));
    const EncodeResult e = encode_params(l);
    const ParamContainer c = parse_container(serialize_container(e.container));
    for (std::size_t k = 0; k < l.segments.size(); ++k)
      bad_roundtrip += decode_segment(c, e.segment_addr[k]) != l.segments[k].leaves;
    uint64_t bias = 0;
    for (const SegmentEntry& d : c.directory) {
      bad_offset += d.bias_addr != bias;
      bias += d.sync_len;
    }
    for (int s = 0; s < kBiasStream; ++s) bad_offset += c.streams[s].size() != bias * kWeightAddrScale;
    raw += static_cast<double>(e.report.raw_bits) / 8;
    compressed += static_cast<double>(e.report.compressed_bytes);
  }
  report(8, bad_roundtrip == 0 && bad_offset == 0 && decode_cycles_per_leaf() == 256,
         fmt("1000 sets, %d round-trip failures, %d offset violations, %d cycles/leaf, Laplacian ratio %.3f",
             bad_roundtrip, bad_offset, decode_cycles_per_leaf(), raw / compressed));
}

void criterion9() {
  int64_t conflicts = 0, cases = 0;
  for (Opcode op : {Opcode::CONV, Opcode::ER, Opcode::DNX2}) {
    const BankSuiteResult r = bank_suite(op, BankMapping::Normal);
    conflicts += r.conflicts;
    cases += r.cases;
  }
  const BankSuiteResult up = bank_suite(Opcode::UPX2, BankMapping::Interleaved);
  const BankSuiteResult up_normal = bank_suite(Opcode::UPX2, BankMapping::Normal);
  report(9, conflicts == 0 && up.conflicts == 0 && cases > 0 && up.cases > 0,
         fmt("%lld CONV/ER/DNX2 cases: %lld conflicts; %lld UPX2 cases interleaved: %lld (normal mapping: %lld)",
             static_cast<long long>(cases), static_cast<long long>(conflicts), static_cast<long long>(up.cases),
             static_cast<long long>(up.conflicts), static_cast<long long>(up_normal.conflicts)));
}

void criterion10() {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const CompileResult c = compile(quantize_model(m, random_weights(m, 1), testing::simple_formats(m)), MachineConfig{});
  const PerfReport r = perf(c.program, m, plan_blocks(m, 3840, 2160, 128), EngineModel{}, 30);
  report(10, r.cycles_per_second <= 250e6 && r.feasible,
         fmt("%lld cycles/block x %lld blocks x 30 fps = %.1f M cycles/s", static_cast<long long>(r.cycles_per_block),
             static_cast<long long>(r.blocks), r.cycles_per_second / 1e6));
}

}  // namespace

int main() {
  void (*const all[])() = {criterion1, criterion2, criterion3, criterion4, criterion5,
                           criterion6, criterion7, criterion8, criterion9, criterion10};
  for (int i = 0; i < 10; ++i) {
    try {
      all[i]();
    } catch (const std::exception& e) {
      report(i + 1, false, std::string("exception: ") + e.what());
    }
  }
  return failures ? 1 : 0;
}
