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

enum class Opcode : uint8_t { CONV, ER, UPX2, DNX2 };
enum class BufferId : uint8_t { BB0, BB1, BB2, DI, DO };
enum class InferType : uint8_t { Truncated, ZeroPadded };

std::string to_string(Opcode op);
std::string to_string(BufferId id);
std::string to_string(InferType t);

inline constexpr int kTileW = 4;
inline constexpr int kTileH = 2;

// Buffer operand. Offsets are in pixels of the buffer's own grid: for a
// source, the top-left pixel of the read window; for a destination, where
// the first output pixel is stored.
struct BufferRef {
  BufferId id = BufferId::BB0;
  int off_x = 0, off_y = 0;
  friend bool operator==(const BufferRef&, const BufferRef&) = default;
};

std::string to_string(const BufferRef& r);

// One coarse-grained instruction. Exactly one of dst/dstS is present; dstS
// stores the requantized partial sum (format qs) for a later srcS.
struct Instruction {
  Opcode op = Opcode::CONV;
  int lm = 1;
  int tiles_x = 1, tiles_y = 1;
  InferType type = InferType::Truncated;
  Pool pool = Pool::None;
  BufferRef src{BufferId::DI};
  std::optional<BufferRef> dst;
  std::optional<BufferRef> srcS;
  std::optional<BufferRef> dstS;
  uint32_t param = 0;  // restart attribute (bias-stream byte address)
  QFormat qw = Q(7), qb = Q(7), qo = Q(4);
  std::optional<QFormat> qs;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct MachineConfig {
  int x_i = 128;
  int channels = kHwChannels;
  int bb_count = 3;
  int64_t param_mem_bytes = 1'318'912;
  friend bool operator==(const MachineConfig&, const MachineConfig&) = default;
};

struct Program {
  std::vector<Instruction> instrs;
  std::vector<std::size_t> submodel_boundaries;  // instruction indices starting a sub-model
  MachineConfig config;
  QFormat input_fmt = UQ(8);
  friend bool operator==(const Program&, const Program&) = default;
};

// Leaf-modules an opcode must carry: CONV and DNX2 one, UPX2 four (one per
// sub-pixel phase), ER one per 32 expanded channels.
bool lm_allowed(Opcode op, int lm);

// Per-instruction operand rules that need no program context.
std::vector<std::string> operand_errors(const Instruction& ins);

// ---------------------------------------------------------------------------
// Text form

struct Diagnostic {
  std::size_t line = 0;  // 1-based source line, or instruction index + 1
  std::size_t column = 0;
  std::string message;
};

std::string format_diagnostic(const Diagnostic& d);

// Parses and checks operand rules. Throws AsmError listing every problem.
class AsmError : public Error {
 public:
  explicit AsmError(std::vector<Diagnostic> diags);
  const std::vector<Diagnostic>& diagnostics() const { return diags_; }

 private:
  std::vector<Diagnostic> diags_;
};

Program assemble(const std::string& text);
std::string disassemble(const Program& p);
std::string disassemble(const Instruction& ins);

// ---------------------------------------------------------------------------
// Binary form: "FBISA\0", version, config block, 16-byte records.

inline constexpr uint16_t kProgramVersion = 1;

std::vector<uint8_t> encode_program(const Program& p);
Program decode_program(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

// ---------------------------------------------------------------------------
// Static geometry of one block run. Coordinates are block-local absolute
// positions in each buffer's resolution stratum.

struct Rect {
  int64_t x = 0, y = 0, w = 0, h = 0;
  bool empty() const { return w <= 0 || h <= 0; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

struct BufferState {
  bool written = false;
  int level = 0;
  int64_t origin_x = 0, origin_y = 0;  // absolute position of buffer pixel (0,0)
  Rect content;                        // written pixels, buffer coordinates
  QFormat fmt;
  std::vector<Rect> writes;  // DO only: every region written, in order
};

struct InstrGeometry {
  int in_level = 0, out_level = 0;
  Rect conv;  // absolute positions computed by the 3x3 stage (input stratum)
  Rect out;   // absolute positions stored (output stratum)
  Rect src_read;  // buffer coordinates read from src (excluding zero padding)
  QFormat src_fmt;
  std::optional<QFormat> srcS_fmt;
};

struct GeometryTrace {
  std::vector<InstrGeometry> instrs;
  std::vector<Diagnostic> diags;
  BufferState final_do;
  int di_reads = 0;
};

// Replays a program against a `block_w` x `block_h` input block.
GeometryTrace trace_geometry(const Program& p, int block_w, int block_h);

// Full static check: operand rules, liveness, DI/DO usage, capacity and
// parameter addresses. Never throws.
std::vector<Diagnostic> validate(const Program& p);

// Restart attributes are bias-stream byte addresses; every stream together
// spans (1 + 20 * 8) bytes per attribute unit.
inline constexpr int64_t kParamBytesPerBiasByte = 1 + 20 * 8;

}  // namespace ecnn
