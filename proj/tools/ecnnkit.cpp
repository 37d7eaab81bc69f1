// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

// ecnnkit: analysis, compilation and simulation front end.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <regex>
#include <sstream>

#include "ecnn/banks.hpp"
#include "ecnn/blockflow.hpp"
#include "ecnn/image_io.hpp"
#include "ecnn/kernels.hpp"
#include "ecnn/model_io.hpp"
#include "ecnn/oracle.hpp"
#include "ecnn/perf.hpp"
#include "ecnn/simulator.hpp"
#include "ecnn/toolchain.hpp"

using namespace ecnn;

namespace {

struct RunConfig {
  std::string res = "3840x2160";
  double fps = 30;
  double clock = 250e6;
  int block = 128;
  double budget = 0;
  std::string norm = "l2";
  uint64_t seed = 1;
  bool oracle = false;
  bool csv = false;
  std::string output;
  std::string input;
  int bits = 16;

  std::pair<int, int> resolution() const {
    std::smatch mt;
    if (!std::regex_match(res, mt, std::regex(R"((\d+)x(\d+))")))
      throw Error("--res expects WxH, got '" + res + "'");
    const int w = std::stoi(mt[1]), h = std::stoi(mt[2]);
    if (w <= 0 || h <= 0) throw Error("--res must be positive");
    return {w, h};
  }
  void check() const {
    if (fps <= 0 || clock <= 0) throw Error("--fps and --clock must be positive");
    if (block < 8 || block > kMaxBlockSide) throw Error("--block must be in [8, 128]");
  }
};

// Names: DnERNet-B3R1N0, DnERNet-12ch-B3R1N0, SR2ERNet-..., SR4ERNet-...,
// plain-D<depth>[C<channels>], or a model file (*.json).
ModelFile resolve_model(const std::string& spec, uint64_t seed) {
  ModelFile f;
  if (spec.size() > 5 && spec.ends_with(".json")) return load_model(spec);
  std::smatch mt;
  if (std::regex_match(spec, mt, std::regex(R"(plain-D(\d+)(?:C(\d+))?)"))) {
    f.model = build_plain(std::stoi(mt[1]), mt[2].matched ? std::stoi(mt[2]) : kHwChannels);
  } else if (std::regex_match(spec, mt, std::regex(R"((DnERNet-12ch|DnERNet|SR2ERNet|SR4ERNet)-B(\d+)R(\d+)N(\d+))"))) {
    const std::string p = mt[1];
    const Family fam = p == "DnERNet" ? Family::Dn : p == "DnERNet-12ch" ? Family::Dn12ch
                                                    : p == "SR2ERNet"     ? Family::SR2
                                                                          : Family::SR4;
    f.model = build_ernet(fam, std::stoi(mt[2]), std::stoi(mt[3]), std::stoi(mt[4]));
  } else {
    throw Error("unknown model '" + spec + "'");
  }
  f.weights = random_weights(f.model, seed);
  return f;
}

Norm parse_norm(const std::string& s) {
  if (s == "l1") return Norm::L1;
  if (s == "l2") return Norm::L2;
  throw Error("--norm expects l1 or l2");
}

std::pair<int, int> input_size(const ModelIR& m, std::pair<int, int> out) {
  const int lvl = m.output_scale_level();
  auto conv = [lvl](int v) { return lvl >= 0 ? (v + (1 << lvl) - 1) >> lvl : v << -lvl; };
  return {conv(out.first), conv(out.second)};
}

struct Toolchain {
  QuantizedModel q;
  CompileResult compiled;
  EncodeResult encoded;
  std::vector<std::size_t> demoted;
};

Toolchain run_toolchain(const ModelFile& f, const RunConfig& cfg) {
  ToolchainOptions opt;
  opt.norm = parse_norm(cfg.norm);
  opt.machine.x_i = cfg.block;
  opt.budget_bytes = static_cast<uint64_t>(cfg.budget);
  Toolchain t;
  if (f.formats) {
    t.q = to_quantized(f);
    t.compiled = compile(t.q, opt.machine);
    t.encoded = encode_params(t.compiled.layout, opt.budget_bytes ? opt.budget_bytes : opt.machine.param_mem_bytes);
    link_params(t.compiled.program, t.compiled.layout, t.encoded.segment_addr);
    return t;
  }
  const auto samples = synthetic_frames(2, 32, 32, f.model.input_channels(), cfg.seed);
  Build b = build(f.model, f.weights, samples, opt);
  t.q = std::move(b.model);
  t.compiled = std::move(b.compiled);
  t.encoded = std::move(b.encoded);
  t.demoted = b.plan.demoted;
  return t;
}

std::string file_stem(const std::string& out, const std::string& fallback) { return out.empty() ? fallback : out; }

int cmd_analyze(const std::string& spec, const RunConfig& cfg) {
  cfg.check();
  const ModelIR m = resolve_model(spec, cfg.seed).model;
  const auto out = cfg.resolution();
  const auto in = input_size(m, out);
  const BlockGeometry g = block_geometry(m, cfg.block);
  if (g.x_o <= 0) throw Error("block size " + std::to_string(cfg.block) + " leaves no valid output for " + m.name);
  const int D = conv_depth(m);
  const BlockPlan plan = plan_blocks(m, in.first, in.second, cfg.block);
  const BandwidthReport bw = block_bandwidth(m, plan, cfg.fps, m.input_channels(), m.output_channels());
  const ComplexityReport cm = intrinsic_complexity(m, CountMode::Model);
  const ComplexityReport ch = intrinsic_complexity(m, CountMode::Hardware);
  EngineModel engine;
  engine.clock_hz = cfg.clock;
  const double budget = engine.budget_kop_per_pixel(out.first, out.second, cfg.fps);
  if (cfg.csv) {
    std::printf("%s\n%s\n", analysis_csv_header().c_str(),
                analysis_csv_row({m.name, cfg.block, D, ncr_discrete(m, cfg.block), bw.nbr, bw.gb_per_s,
                                  ch.effective_kop_per_pixel})
                    .c_str());
    return 0;
  }
  std::printf("model            %s\n", m.name.c_str());
  std::printf("resolution       %dx%d @ %g fps (input %dx%d)\n", out.first, out.second, cfg.fps, in.first, in.second);
  std::printf("block            x_i=%d x_o=%d blocks=%d depth=%d\n", cfg.block, g.x_o, plan.block_count(), D);
  std::printf("nbr_analytic     %.4f\n", nbr_plain(D, cfg.block));
  std::printf("nbr              %.4f\n", bw.nbr);
  std::printf("ncr_analytic     %.4f\n", ncr_plain(D, cfg.block));
  std::printf("ncr_discrete     %.4f\n", ncr_discrete(m, cfg.block));
  std::printf("kop_intrinsic    %.3f\n", cm.intrinsic_kop_per_pixel);
  std::printf("kop_effective    %.3f\n", ch.effective_kop_per_pixel);
  std::printf("block_gb_per_s   %.4f\n", bw.gb_per_s);
  std::printf("frame_gb_per_s   %.4f (C=%d, %d-bit features)\n",
              frame_bandwidth(out.second, out.first, m.channels, D, cfg.fps, cfg.bits) / 1e9, m.channels, cfg.bits);
  std::printf("budget_kop       %.3f at %.0f MHz\n", budget, cfg.clock / 1e6);
  std::printf("feasible         %s\n", ch.effective_kop_per_pixel <= budget ? "true" : "false");
  return 0;
}

int cmd_scan(const std::string& family, const RunConfig& cfg, int bmin, int bmax) {
  const auto rows = scan_models(parse_family(family), cfg.budget, cfg.block, bmin, bmax);
  std::printf("B,R,N,R_E,kop_intrinsic,kop_effective,ncr\n");
  for (const auto& c : rows)
    std::printf("%d,%d,%d,%.4f,%.3f,%.3f,%.4f\n", c.B, c.R, c.N, c.R_E, c.complexity.intrinsic_kop_per_pixel,
                c.complexity.effective_kop_per_pixel, c.complexity.ncr);
  return 0;
}

int cmd_compile(const std::string& spec, const RunConfig& cfg) {
  const ModelFile f = resolve_model(spec, cfg.seed);
  const Toolchain t = run_toolchain(f, cfg);
  const std::string stem = file_stem(cfg.output, t.q.model.name);
  write_file(stem + ".fbisa", encode_program(t.compiled.program));
  std::ofstream(stem + ".asm") << disassemble(t.compiled.program);
  write_file(stem + ".params", serialize_container(t.encoded.container));
  save_model(stem + ".json", from_quantized(t.q));
  std::printf("%s: %zu instructions, %zu segments, %llu parameter bytes, %zu groups at 7 bits\n",
              t.q.model.name.c_str(), t.compiled.program.instrs.size(), t.compiled.layout.segments.size(),
              static_cast<unsigned long long>(t.encoded.report.memory_bytes), t.demoted.size());
  return 0;
}

int cmd_asm(const std::string& in, const RunConfig& cfg) {
  std::ifstream is(in);
  if (!is) throw Error("cannot open " + in);
  std::stringstream ss;
  ss << is.rdbuf();
  const Program p = assemble(ss.str());
  write_file(file_stem(cfg.output, in + ".fbisa"), encode_program(p));
  return 0;
}

int cmd_disasm(const std::string& in, const RunConfig& cfg) {
  const std::string text = disassemble(decode_program(read_file(in)));
  if (cfg.output.empty()) {
    std::cout << text;
  } else {
    std::ofstream(cfg.output) << text;
  }
  return 0;
}

int cmd_encode(const std::string& spec, const RunConfig& cfg) {
  const Toolchain t = run_toolchain(resolve_model(spec, cfg.seed), cfg);
  const CodecReport& r = t.encoded.report;
  double code = 0, ent = 0, sym = 0;
  for (const auto& s : r.segments)
    for (const auto& st : s.streams) {
      code += static_cast<double>(st.code_bits);
      ent += st.entropy_bits;
      sym += static_cast<double>(st.symbols);
    }
  std::printf("segments            %zu\n", r.segments.size());
  std::printf("raw_bits            %llu\n", static_cast<unsigned long long>(r.raw_bits));
  std::printf("compressed_bytes    %llu\n", static_cast<unsigned long long>(r.compressed_bytes));
  std::printf("memory_bytes        %llu\n", static_cast<unsigned long long>(r.memory_bytes));
  std::printf("compression_ratio   %.4f\n", r.compression_ratio());
  std::printf("memory_ratio        %.4f\n", r.memory_ratio());
  std::printf("shannon_gap_bits    %.4f per symbol\n", sym > 0 ? (code - ent) / sym : 0.0);
  if (!cfg.output.empty()) write_file(cfg.output, serialize_container(t.encoded.container));
  return 0;
}

int cmd_run(const std::string& spec, const RunConfig& cfg) {
  const ModelFile f = resolve_model(spec, cfg.seed);
  const Toolchain t = run_toolchain(f, cfg);
  Feature frame;
  if (!cfg.input.empty()) {
    frame = read_pnm(cfg.input);
    if (frame.codes.c != t.q.model.input_channels())
      throw Error(cfg.input + ": model expects " + std::to_string(t.q.model.input_channels()) + " channels");
  } else {
    const auto in = input_size(t.q.model, cfg.resolution());
    frame = to_feature(synthetic_frames(1, in.first, in.second, t.q.model.input_channels(), cfg.seed + 1)[0],
                       t.q.input_fmt);
  }
  const Machine machine(t.compiled.program, t.encoded.container);
  const BlockPlan plan = plan_blocks(t.q.model, frame.codes.w, frame.codes.h, cfg.block);
  const Feature out = run_image(machine, frame, plan, t.q.model.output_channels());
  std::printf("%s: %dx%d -> %dx%d, %d blocks, kernels %s\n", t.q.model.name.c_str(), frame.codes.w, frame.codes.h,
              out.codes.w, out.codes.h, plan.block_count(), machine.kernels().name);
  if (cfg.oracle) {
    const Feature ref = oracle_frame(t.q, frame);
    std::size_t diff = 0;
    if (ref.codes.data.size() != out.codes.data.size())
      diff = out.codes.data.size();
    else
      for (std::size_t i = 0; i < out.codes.data.size(); ++i) diff += out.codes.data[i] != ref.codes.data[i];
    std::printf("differing codes: %zu\n", diff);
    std::printf("bit-exact: %s\n", diff == 0 && ref.fmt == out.fmt ? "true" : "false");
    if (diff != 0) return 1;
  }
  if (!cfg.output.empty()) {
    if (cfg.output.ends_with(".pgm") || cfg.output.ends_with(".ppm"))
      write_pnm(cfg.output, out);
    else
      write_feature_dump(cfg.output, out);
  }
  return 0;
}

int cmd_perf(const std::string& spec, const RunConfig& cfg) {
  cfg.check();
  const ModelFile f = resolve_model(spec, cfg.seed);
  const Toolchain t = run_toolchain(f, cfg);
  const auto in = input_size(t.q.model, cfg.resolution());
  const BlockPlan plan = plan_blocks(t.q.model, in.first, in.second, cfg.block);
  EngineModel engine;
  engine.clock_hz = cfg.clock;
  const PerfReport r = perf(t.compiled.program, t.q.model, plan, engine, cfg.fps);
  std::printf("instructions       %zu\n", r.instrs.size());
  std::printf("cycles_per_block   %lld\n", static_cast<long long>(r.cycles_per_block));
  std::printf("blocks             %lld\n", static_cast<long long>(r.blocks));
  std::printf("cycles_per_frame   %.0f\n", r.cycles_per_frame);
  std::printf("cycles_per_second  %.0f at %g fps\n", r.cycles_per_second, r.fps);
  std::printf("clock              %.0f\n", cfg.clock);
  std::printf("max_fps            %.3f\n", r.max_fps);
  std::printf("feasible           %s\n", r.feasible ? "true" : "false");
  std::printf("dram_gb_per_s      %.4f\n", r.dram_gb_per_s);
  std::printf("ncr_effective      %.4f\n", r.ncr_effective);
  std::printf("utilization        %.4f\n", r.utilization);
  if (!cfg.output.empty()) {
    std::ofstream os(cfg.output);
    write_trace_csv(os, t.compiled.program, program_accesses(t.compiled.program));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ecnnkit: block-flow CNN accelerator toolchain"};
  app.require_subcommand(1);
  RunConfig cfg;
  std::string target;
  int bmin = 1, bmax = 40;

  auto common = [&](CLI::App* sub, bool with_model) {
    if (with_model) sub->add_option("model", target, "model name (e.g. DnERNet-B3R1N0, plain-D20) or model file")->required();
    sub->add_option("--res", cfg.res, "output resolution WxH");
    sub->add_option("--fps", cfg.fps, "frame rate");
    sub->add_option("--clock", cfg.clock, "clock in Hz");
    sub->add_option("--block", cfg.block, "input block side x_i");
    sub->add_option("--budget", cfg.budget, "parameter bytes (compile/encode/run) or KOP/pixel (scan)");
    sub->add_option("--norm", cfg.norm, "precision-selection norm: l1 or l2");
    sub->add_option("--seed", cfg.seed, "weight and sample seed");
    sub->add_option("-o,--output", cfg.output, "output path");
  };

  auto* analyze = app.add_subcommand("analyze", "bandwidth, recomputation and complexity report");
  common(analyze, true);
  analyze->add_option("--bits", cfg.bits, "feature bits for the frame-based bandwidth column");
  analyze->add_flag("--csv", cfg.csv, "one CSV row: model,x_i,D,NCR,NBR,GB/s,KOP/pixel");
  auto* scan = app.add_subcommand("scan", "feasible (B, R_E) frontier under a KOP/pixel budget, CSV");
  scan->add_option("family", target, "SR2, SR4, Dn or Dn12ch")->required();
  common(scan, false);
  scan->add_option("--bmin", bmin);
  scan->add_option("--bmax", bmax);
  auto* compile_cmd = app.add_subcommand("compile", "quantize, compile and encode; writes .fbisa .asm .params .json");
  common(compile_cmd, true);
  auto* asm_cmd = app.add_subcommand("asm", "assemble text to the binary program format");
  asm_cmd->add_option("input", target)->required();
  asm_cmd->add_option("-o,--output", cfg.output);
  auto* disasm = app.add_subcommand("disasm", "binary program to canonical text");
  disasm->add_option("input", target)->required();
  disasm->add_option("-o,--output", cfg.output);
  auto* encode = app.add_subcommand("encode", "parameter codec report");
  common(encode, true);
  auto* run = app.add_subcommand("run", "simulate a frame");
  common(run, true);
  run->add_flag("--oracle", cfg.oracle, "also run the reference model and compare");
  run->add_option("--input", cfg.input, "PGM/PPM input frame");
  auto* perf_cmd = app.add_subcommand("perf", "cycle and DRAM model; -o writes the bank access trace");
  common(perf_cmd, true);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*analyze) return cmd_analyze(target, cfg);
    if (*scan) return cmd_scan(target, cfg, bmin, bmax);
    if (*compile_cmd) return cmd_compile(target, cfg);
    if (*asm_cmd) return cmd_asm(target, cfg);
    if (*disasm) return cmd_disasm(target, cfg);
    if (*encode) return cmd_encode(target, cfg);
    if (*run) return cmd_run(target, cfg);
    if (*perf_cmd) return cmd_perf(target, cfg);
  } catch (const AsmError& e) {
    for (const auto& d : e.diagnostics()) std::cerr << "error: " << format_diagnostic(d) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
