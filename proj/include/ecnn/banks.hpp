// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ecnn/fbisa.hpp"

namespace ecnn {

inline constexpr int kBanks = 8;
inline constexpr int kTilesPerRow = 128 / kTileW;

enum class BankMapping { Normal, Interleaved };

std::string to_string(BankMapping m);

// normal:      (tx + 32 ty) mod 8
// interleaved: (tx + 2 ty + ty / 2) mod 8
int bank_of(BankMapping m, int64_t tx, int64_t ty);

// One tile access on a block buffer port. Reads and writes use separate
// ports.
struct Access {
  int64_t cycle = 0;
  std::size_t instr = 0;
  BufferId buf = BufferId::BB0;
  bool write = false;
  int64_t tx = 0, ty = 0;
  BankMapping mapping = BankMapping::Normal;
};

// An instruction reduced to tile units. Offsets are in tiles of the
// respective buffer.
struct TileOp {
  Opcode op = Opcode::CONV;
  int tiles_x = 1, tiles_y = 1;  // convolution grid
  int lm = 1;
  BufferId src = BufferId::BB0, dst = BufferId::BB1;
  std::optional<BufferId> srcS;
  int64_t src_tx = 0, src_ty = 0, dst_tx = 0, dst_ty = 0, srcS_tx = 0, srcS_ty = 0;
};

// The CIU processes conv tiles in raster order, lm cycles each: it reads the
// next source tile (and srcS tile) on the first cycle and writes on the
// last. UPX2 writes a 2x2 group of tiles; DNX2 writes one tile per 2x2
// group of conv tiles.
std::vector<Access> tile_accesses(const TileOp& t, std::size_t instr, int64_t start_cycle, BankMapping read_mapping,
                                  BankMapping write_mapping);

// Accesses of a whole program. UPX2 destinations use the interleaved
// mapping, everything else the normal mapping; reads follow the mapping the
// buffer was written with. Pixel offsets round down to the tile grid.
std::vector<Access> program_accesses(const Program& p);

struct Conflict {
  int64_t cycle = 0;
  BufferId buf = BufferId::BB0;
  bool write = false;
  int bank = 0;
  int64_t tx0 = 0, ty0 = 0, tx1 = 0, ty1 = 0;
};

// Same cycle, same buffer and port, same bank, different tiles.
// `override_mapping` replaces each access's own mapping.
std::vector<Conflict> bank_conflicts(const std::vector<Access>& trace,
                                     std::optional<BankMapping> override_mapping = std::nullopt);

struct BankSuiteResult {
  int64_t cases = 0;
  int64_t accesses = 0;
  int64_t conflicts = 0;
};

// Every destination tile offset inside a 128x128 block for one opcode, with
// the instruction covering the rest of the block.
BankSuiteResult bank_suite(Opcode op, BankMapping write_mapping);

}  // namespace ecnn
