// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/banks.hpp"

#include <algorithm>
#include <map>

namespace ecnn {

std::string to_string(BankMapping m) { return m == BankMapping::Normal ? "normal" : "interleaved"; }

int bank_of(BankMapping m, int64_t tx, int64_t ty) {
  const int64_t b = m == BankMapping::Normal ? tx + int64_t{kTilesPerRow} * ty : tx + 2 * ty + ty / 2;
  return static_cast<int>(((b % kBanks) + kBanks) % kBanks);
}

std::vector<Access> tile_accesses(const TileOp& t, std::size_t instr, int64_t start_cycle, BankMapping read_mapping,
                                  BankMapping write_mapping) {
  std::vector<Access> out;
  int64_t cycle = start_cycle;
  auto add = [&](int64_t c, BufferId buf, bool write, int64_t tx, int64_t ty) {
    out.push_back(Access{c, instr, buf, write, tx, ty, write ? write_mapping : read_mapping});
  };
  for (int ty = 0; ty < t.tiles_y; ++ty) {
    for (int tx = 0; tx < t.tiles_x; ++tx, cycle += t.lm) {
      const int64_t last = cycle + t.lm - 1;
      add(cycle, t.src, false, t.src_tx + tx, t.src_ty + ty);
      switch (t.op) {
        case Opcode::CONV:
        case Opcode::ER:
          if (t.srcS) add(cycle, *t.srcS, false, t.srcS_tx + tx, t.srcS_ty + ty);
          add(last, t.dst, true, t.dst_tx + tx, t.dst_ty + ty);
          break;
        case Opcode::UPX2:
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) add(last, t.dst, true, t.dst_tx + 2 * tx + dx, t.dst_ty + 2 * ty + dy);
          break;
        case Opcode::DNX2: {
          const bool closes_x = tx % 2 == 1 || tx == t.tiles_x - 1;
          const bool closes_y = ty % 2 == 1 || ty == t.tiles_y - 1;
          if (closes_x && closes_y) add(last, t.dst, true, t.dst_tx + tx / 2, t.dst_ty + ty / 2);
          break;
        }
      }
    }
  }
  return out;
}

std::vector<Access> program_accesses(const Program& p) {
  const GeometryTrace g = trace_geometry(p, p.config.x_i, p.config.x_i);
  if (!g.diags.empty()) throw Error("program_accesses: " + format_diagnostic(g.diags.front()));
  std::map<BufferId, BankMapping> written_with;
  auto mapping_of = [&](BufferId b) {
    auto it = written_with.find(b);
    return it == written_with.end() ? BankMapping::Normal : it->second;
  };
  std::vector<Access> trace;
  int64_t cycle = 0;
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const Instruction& ins = p.instrs[i];
    const BufferRef d = ins.dst ? *ins.dst : *ins.dstS;
    TileOp t;
    t.op = ins.op;
    t.tiles_x = static_cast<int>(ceil_div(g.instrs[i].conv.w, kTileW));
    t.tiles_y = static_cast<int>(ceil_div(g.instrs[i].conv.h, kTileH));
    t.lm = ins.lm;
    t.src = ins.src.id;
    t.dst = d.id;
    t.src_tx = ins.src.off_x / kTileW;
    t.src_ty = ins.src.off_y / kTileH;
    t.dst_tx = d.off_x / kTileW;
    t.dst_ty = d.off_y / kTileH;
    if (ins.srcS) {
      t.srcS = ins.srcS->id;
      t.srcS_tx = ins.srcS->off_x / kTileW;
      t.srcS_ty = ins.srcS->off_y / kTileH;
    }
    const BankMapping wm = ins.op == Opcode::UPX2 ? BankMapping::Interleaved : BankMapping::Normal;
    auto acc = tile_accesses(t, i, cycle, mapping_of(ins.src.id), wm);
    if (ins.srcS)
      for (Access& a : acc)
        if (!a.write && a.buf == *t.srcS) a.mapping = mapping_of(*t.srcS);
    trace.insert(trace.end(), acc.begin(), acc.end());
    written_with[d.id] = wm;
    cycle += int64_t{t.tiles_x} * t.tiles_y * t.lm;
  }
  return trace;
}

std::vector<Conflict> bank_conflicts(const std::vector<Access>& trace, std::optional<BankMapping> override_mapping) {
  struct Item {
    int64_t cycle;
    int buf;
    bool write;
    int bank;
    int64_t tx, ty;
    auto operator<=>(const Item&) const = default;
  };
  std::vector<Item> items;
  items.reserve(trace.size());
  for (const Access& a : trace)
    items.push_back({a.cycle, static_cast<int>(a.buf), a.write, bank_of(override_mapping.value_or(a.mapping), a.tx, a.ty),
                     a.tx, a.ty});
  std::sort(items.begin(), items.end());
  std::vector<Conflict> out;
  for (std::size_t i = 1; i < items.size(); ++i) {
    const Item& p = items[i - 1];
    const Item& c = items[i];
    if (p.cycle == c.cycle && p.buf == c.buf && p.write == c.write && p.bank == c.bank && (p.tx != c.tx || p.ty != c.ty))
      out.push_back(Conflict{c.cycle, static_cast<BufferId>(c.buf), c.write, c.bank, p.tx, p.ty, c.tx, c.ty});
  }
  return out;
}

BankSuiteResult bank_suite(Opcode op, BankMapping write_mapping) {
  BankSuiteResult r;
  constexpr int rows = 128 / kTileH;
  for (int oy = 0; oy < rows; ++oy) {
    for (int ox = 0; ox < kTilesPerRow; ++ox) {
      TileOp t;
      t.op = op;
      t.src = BufferId::BB0;
      t.dst = BufferId::BB1;
      t.dst_tx = ox;
      t.dst_ty = oy;
      const int room_x = kTilesPerRow - ox, room_y = rows - oy;
      switch (op) {
        case Opcode::UPX2:
          t.lm = 4;
          t.tiles_x = room_x / 2;
          t.tiles_y = room_y / 2;
          break;
        case Opcode::DNX2:
          t.tiles_x = std::min(kTilesPerRow, 2 * room_x);
          t.tiles_y = std::min(rows, 2 * room_y);
          break;
        case Opcode::ER:
          t.lm = 4;
          [[fallthrough]];
        case Opcode::CONV:
          t.tiles_x = room_x;
          t.tiles_y = room_y;
          t.srcS = BufferId::BB2;
          t.srcS_tx = ox;
          t.srcS_ty = oy;
          if (op == Opcode::ER) t.srcS.reset();
          break;
      }
      if (t.tiles_x < 1 || t.tiles_y < 1) continue;
      const auto trace = tile_accesses(t, 0, 0, BankMapping::Normal, write_mapping);
      ++r.cases;
      r.accesses += static_cast<int64_t>(trace.size());
      r.conflicts += static_cast<int64_t>(bank_conflicts(trace).size());
    }
  }
  return r;
}

}  // namespace ecnn
