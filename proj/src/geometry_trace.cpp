// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>

#include "ecnn/fbisa.hpp"

namespace ecnn {

namespace {

bool overlaps(const Rect& a, const Rect& b) {
  return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

bool contains(const Rect& outer, const Rect& inner) {
  return inner.x >= outer.x && inner.y >= outer.y && inner.x + inner.w <= outer.x + outer.w &&
         inner.y + inner.h <= outer.y + outer.h;
}

Rect intersect(const Rect& a, const Rect& b) {
  const int64_t x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
  const int64_t x1 = std::min(a.x + a.w, b.x + b.w), y1 = std::min(a.y + a.h, b.y + b.h);
  return Rect{x0, y0, std::max<int64_t>(0, x1 - x0), std::max<int64_t>(0, y1 - y0)};
}

}  // namespace

GeometryTrace trace_geometry(const Program& p, int block_w, int block_h) {
  GeometryTrace t;
  BufferState bufs[5];
  BufferState& di = bufs[static_cast<int>(BufferId::DI)];
  di.written = true;
  di.content = Rect{0, 0, block_w, block_h};
  di.fmt = p.input_fmt;
  BufferState& dout = bufs[static_cast<int>(BufferId::DO)];

  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const Instruction& ins = p.instrs[i];
    InstrGeometry g;
    bool ok = true;
    auto diag = [&](const std::string& msg) {
      t.diags.push_back({i + 1, 0, to_string(ins.op) + ": " + msg});
      ok = false;
    };
    for (const auto& e : operand_errors(ins)) diag(e);
    for (const BufferRef* r : {&ins.src, ins.dst ? &*ins.dst : nullptr, ins.srcS ? &*ins.srcS : nullptr,
                               ins.dstS ? &*ins.dstS : nullptr})
      if (r && r->id <= BufferId::BB2 && static_cast<int>(r->id) >= p.config.bb_count)
        diag(to_string(r->id) + " does not exist on this machine");
    if (!ok) {
      t.instrs.push_back(g);
      continue;
    }
    if (int64_t{ins.tiles_x} * kTileW > block_w || int64_t{ins.tiles_y} * kTileH > block_h)
      diag("tile grid " + std::to_string(ins.tiles_x) + "x" + std::to_string(ins.tiles_y) + " is larger than the block");
    if (ins.src.id == BufferId::DI) ++t.di_reads;
    if (ins.srcS && ins.srcS->id == BufferId::DI) ++t.di_reads;

    const BufferState& s = bufs[static_cast<int>(ins.src.id)];
    if (!s.written) {
      diag("reads " + to_string(ins.src.id) + " before it is written");
      t.instrs.push_back(g);
      continue;
    }
    g.src_fmt = s.fmt;
    g.in_level = s.level;
    const bool zero = ins.type == InferType::ZeroPadded;
    const int64_t ox = ins.src.off_x, oy = ins.src.off_y;
    if (ox < s.content.x || oy < s.content.y) diag("source window starts outside the written region");
    const int64_t border = zero ? 0 : 2;
    const int64_t nat_w = s.content.x + s.content.w - ox - border;
    const int64_t nat_h = s.content.y + s.content.h - oy - border;
    const int64_t ew = std::min<int64_t>(int64_t{ins.tiles_x} * kTileW, nat_w);
    const int64_t eh = std::min<int64_t>(int64_t{ins.tiles_y} * kTileH, nat_h);
    if (ew <= 0 || eh <= 0) diag("source region leaves no valid output");
    if (!ok) {
      t.instrs.push_back(g);
      continue;
    }
    const int64_t shift = zero ? 0 : 1;
    g.conv = Rect{s.origin_x + ox + shift, s.origin_y + oy + shift, ew, eh};
    g.src_read = intersect(Rect{ox + shift - 1, oy + shift - 1, ew + 2, eh + 2}, s.content);

    switch (ins.op) {
      case Opcode::CONV:
      case Opcode::ER:
        g.out = g.conv;
        g.out_level = g.in_level;
        break;
      case Opcode::UPX2:
        g.out = Rect{2 * g.conv.x, 2 * g.conv.y, 2 * ew, 2 * eh};
        g.out_level = g.in_level + 1;
        break;
      case Opcode::DNX2: {
        auto pooled = [&](int64_t lo, int64_t n) {
          const int64_t a = ceil_div(lo, 2);
          const int64_t b = ins.pool == Pool::Max ? floor_div(lo + n, 2) : ceil_div(lo + n, 2);
          return std::make_pair(a, b - a);
        };
        const auto [px, pw] = pooled(g.conv.x, ew);
        const auto [py, ph] = pooled(g.conv.y, eh);
        g.out = Rect{px, py, pw, ph};
        g.out_level = g.in_level - 1;
        if (g.out.empty()) diag("pooling leaves no output pixels");
        break;
      }
    }

    if (ins.srcS) {
      const BufferState& ss = bufs[static_cast<int>(ins.srcS->id)];
      if (!ss.written) {
        diag("reads " + to_string(ins.srcS->id) + " before it is written");
      } else {
        if (ss.level != g.out_level) diag("srcS is at a different resolution than the output");
        if (ss.origin_x + ins.srcS->off_x != g.out.x || ss.origin_y + ins.srcS->off_y != g.out.y)
          diag("srcS window is not aligned with the output");
        if (!contains(ss.content, Rect{ins.srcS->off_x, ins.srcS->off_y, g.out.w, g.out.h}))
          diag("srcS window reaches outside the written region");
        g.srcS_fmt = ss.fmt;
      }
    }

    const BufferRef dst = ins.dst ? *ins.dst : *ins.dstS;
    const QFormat out_fmt = ins.dstS ? *ins.qs : ins.qo;
    const Rect local{dst.off_x, dst.off_y, g.out.w, g.out.h};
    if (ok && dst.id == BufferId::DO) {
      if (dout.written) {
        if (dout.level != g.out_level || dout.origin_x != g.out.x - dst.off_x || dout.origin_y != g.out.y - dst.off_y)
          diag("DO writes disagree on the output origin");
        if (dout.fmt != out_fmt) diag("DO writes disagree on the output format");
        for (const Rect& w : dout.writes)
          if (overlaps(w, local)) diag("DO pixels written twice");
      } else {
        dout.written = true;
        dout.level = g.out_level;
        dout.origin_x = g.out.x - dst.off_x;
        dout.origin_y = g.out.y - dst.off_y;
        dout.fmt = out_fmt;
      }
      dout.writes.push_back(local);
    } else if (ok) {
      if (local.x + local.w > p.config.x_i || local.y + local.h > p.config.x_i)
        diag("output of " + std::to_string(local.w) + "x" + std::to_string(local.h) + " at offset " +
             std::to_string(local.x) + "," + std::to_string(local.y) + " exceeds the " + std::to_string(p.config.x_i) +
             "-pixel block buffer");
      BufferState& d = bufs[static_cast<int>(dst.id)];
      d.written = true;
      d.level = g.out_level;
      d.origin_x = g.out.x - dst.off_x;
      d.origin_y = g.out.y - dst.off_y;
      d.content = local;
      d.fmt = out_fmt;
      d.writes.clear();
    }
    t.instrs.push_back(g);
  }

  if (t.di_reads != 1) t.diags.push_back({0, 0, "DI must be consumed exactly once per block, found " +
                                                     std::to_string(t.di_reads) + " reads"});
  if (!dout.written) {
    t.diags.push_back({0, 0, "program never writes DO"});
  } else {
    Rect box = dout.writes.front();
    int64_t area = 0;
    for (const Rect& w : dout.writes) {
      const int64_t x0 = std::min(box.x, w.x), y0 = std::min(box.y, w.y);
      const int64_t x1 = std::max(box.x + box.w, w.x + w.w), y1 = std::max(box.y + box.h, w.y + w.h);
      box = Rect{x0, y0, x1 - x0, y1 - y0};
      area += w.w * w.h;
    }
    if (area != box.w * box.h) t.diags.push_back({0, 0, "DO writes do not form a rectangle"});
    dout.content = box;
  }
  t.final_do = dout;
  return t;
}

std::vector<Diagnostic> validate(const Program& p) {
  std::vector<Diagnostic> diags;
  if (p.config.x_i < 4 || p.config.x_i > 4096) diags.push_back({0, 0, "machine block size out of range"});
  if (p.config.bb_count < 1 || p.config.bb_count > 3) diags.push_back({0, 0, "machine has 1 to 3 block buffers"});
  if (p.instrs.empty()) diags.push_back({0, 0, "program has no instructions"});
  for (std::size_t i = 1; i < p.submodel_boundaries.size(); ++i)
    if (p.submodel_boundaries[i] < p.submodel_boundaries[i - 1])
      diags.push_back({0, 0, "sub-model boundaries out of order"});
  for (std::size_t b : p.submodel_boundaries)
    if (b > p.instrs.size()) diags.push_back({0, 0, "sub-model boundary past the last instruction"});
  for (std::size_t i = 0; i < p.instrs.size(); ++i)
    if ((int64_t{p.instrs[i].param} + 1) * kParamBytesPerBiasByte > p.config.param_mem_bytes)
      diags.push_back({i + 1, 0, "param @" + std::to_string(p.instrs[i].param) + " lies beyond parameter memory"});
  if (p.instrs.empty()) return diags;
  auto t = trace_geometry(p, p.config.x_i, p.config.x_i);
  diags.insert(diags.end(), t.diags.begin(), t.diags.end());
  return diags;
}

}  // namespace ecnn
