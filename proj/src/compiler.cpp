// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/compiler.hpp"

#include <algorithm>
#include <map>

namespace ecnn {

namespace {

constexpr int kC = kHwChannels;

// Instruction template before geometry and buffer assignment.
struct OpT {
  Opcode op = Opcode::CONV;
  int lm = 1;
  InferType type = InferType::Truncated;
  Pool pool = Pool::None;
  int src = -1, srcS = -1, dst = -1;
  bool partial = false;
  QFormat qw, qb, qo;
  std::optional<QFormat> qs;
  std::size_t segment = 0;
};

struct Lowered {
  std::vector<OpT> ops;
  std::vector<ParamSegment> segments;
  int values = 1;  // value 0 is the input block
  int final_value = 0;
};

int groups(int ch) { return (ch + kC - 1) / kC; }

LeafParams empty_leaf(bool has_1x1) {
  LeafParams l;
  l.w3.assign(kLeafW3, 0);
  if (has_1x1) l.w1.assign(kLeafW1, 0);
  l.bias.assign(kC, 0);
  return l;
}

int16_t& w3_at(LeafParams& l, int tap, int o, int i) { return l.w3[(static_cast<std::size_t>(tap) * kC + o) * kC + i]; }

// 32x32 slice of a convolution: outputs [o0, o0+32) mapped through `out_of`,
// inputs [i0, i0+32).
template <typename OutOf>
void fill_conv_slice(LeafParams& leaf, const LayerSpec& l, const std::vector<int16_t>& w, int i0, OutOf out_of,
                     bool one_by_one) {
  for (int o = 0; o < kC; ++o) {
    const int oc = out_of(o);
    if (oc < 0) continue;
    for (int i = 0; i < kC && i0 + i < l.in_ch; ++i) {
      const int ic = i0 + i;
      if (one_by_one) {
        w3_at(leaf, 4, o, i) = w[static_cast<std::size_t>(oc) * l.in_ch + ic];
      } else {
        for (int tap = 0; tap < 9; ++tap)
          w3_at(leaf, tap, o, i) = w[(static_cast<std::size_t>(oc) * l.in_ch + ic) * 9 + tap];
      }
    }
  }
}

Lowered lower(const QuantizedModel& q) {
  const ModelIR& m = q.model;
  Lowered out;
  std::vector<std::vector<int>> vals(m.layers.size());
  if (m.input_channels() > kC) throw Error("compile: model input wider than 32 channels");
  auto input_of = [&](std::size_t i) -> const std::vector<int>& {
    static const std::vector<int> in{0};
    return i == 0 ? in : vals[i - 1];
  };
  auto in_fmt = [&](std::size_t i) { return i == 0 ? q.input_fmt : q.layers[i - 1].fmt.out; };
  auto new_value = [&]() { return out.values++; };
  auto fail = [&](std::size_t i, const std::string& what) {
    throw Error("compile: layer " + std::to_string(i) + " (" + to_string(m.layers[i].kind) + "): " + what);
  };

  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const QuantLayer& ql = q.layers[i];
    const LayerKind next = i + 1 < m.layers.size() ? m.layers[i + 1].kind : LayerKind::Conv3x3;
    const bool has_next = i + 1 < m.layers.size();
    const std::vector<int>& in = input_of(i);

    auto single = [&](const char* what) {
      if (in.size() != 1) fail(i, std::string(what) + " needs an input of at most 32 channels");
    };

    switch (l.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1: {
        const bool one = l.kind == LayerKind::Conv1x1;
        if (has_next && next == LayerKind::PixelShuffleUp2) {
          single("an upsampler");
          if (one) fail(i, "an upsampler needs a 3x3 convolution");
          const int C = m.layers[i + 1].out_ch;
          if (C > kC) fail(i, "an upsampler produces at most 32 channels");
          ParamSegment seg;
          for (int g = 0; g < 4; ++g) {
            LeafParams leaf = empty_leaf(false);
            fill_conv_slice(leaf, l, ql.w, 0, [&](int o) { return o < C ? g * C + o : -1; }, false);
            for (int o = 0; o < C; ++o) leaf.bias[o] = ql.b[g * C + o];
            seg.leaves.push_back(std::move(leaf));
          }
          OpT t;
          t.op = Opcode::UPX2;
          t.lm = 4;
          t.src = in[0];
          t.dst = new_value();
          t.qw = ql.fmt.w;
          t.qb = ql.fmt.b;
          t.qo = q.layers[i + 1].fmt.out;
          t.segment = out.segments.size();
          out.segments.push_back(std::move(seg));
          out.ops.push_back(t);
          vals[i + 1] = {t.dst};
          ++i;
          break;
        }
        const bool residual = has_next && next == LayerKind::ResidualAdd;
        const bool pooled = l.pool != Pool::None;
        const int K = static_cast<int>(in.size());
        const int G = groups(l.out_ch);
        if (residual && pooled) fail(i, "a pooled convolution cannot feed a residual join");
        if ((residual || pooled) && (K != 1 || G != 1))
          fail(i, "residual joins and pooling need layers of at most 32 channels");
        if (K > 1 && !ql.fmt.mid) fail(i, "wide convolution needs a partial-sum format");
        std::vector<int> outs;
        for (int g = 0; g < G; ++g) {
          int partial = -1;
          for (int k = 0; k < K; ++k) {
            const bool last = k == K - 1;
            ParamSegment seg;
            LeafParams leaf = empty_leaf(false);
            fill_conv_slice(leaf, l, ql.w, k * kC, [&](int o) { return g * kC + o < l.out_ch ? g * kC + o : -1; },
                            one);
            if (last)
              for (int o = 0; o < kC && g * kC + o < l.out_ch; ++o) leaf.bias[o] = ql.b[g * kC + o];
            seg.leaves.push_back(std::move(leaf));
            OpT t;
            t.op = pooled ? Opcode::DNX2 : Opcode::CONV;
            t.pool = l.pool;
            t.type = one ? InferType::ZeroPadded : InferType::Truncated;
            t.src = in[k];
            t.srcS = partial;
            if (residual) {
              const auto& skip = vals[m.layers[i + 1].skip_from];
              if (skip.size() != 1) fail(i, "residual source must be a materialized 32-channel feature");
              t.srcS = skip[0];
            }
            t.dst = new_value();
            t.partial = !last;
            t.qw = ql.fmt.w;
            t.qb = ql.fmt.b;
            t.qo = residual ? q.layers[i + 1].fmt.out : ql.fmt.out;
            if (!last) t.qs = ql.fmt.mid;
            t.segment = out.segments.size();
            out.segments.push_back(std::move(seg));
            out.ops.push_back(t);
            partial = t.dst;
          }
          outs.push_back(partial);
        }
        if (residual) {
          vals[i + 1] = outs;
          ++i;
        } else {
          vals[i] = outs;
        }
        break;
      }
      case LayerKind::ERModule: {
        single("an ERModule");
        const int mid = l.in_ch * l.expand;
        const int leaves = groups(mid);
        if (leaves > 4) fail(i, "an ERModule holds at most four leaf-modules");
        ParamSegment seg;
        seg.has_1x1 = true;
        for (int j = 0; j < leaves; ++j) {
          LeafParams leaf = empty_leaf(true);
          fill_conv_slice(leaf, l, ql.w, 0, [&](int o) { return j * kC + o < mid ? j * kC + o : -1; }, false);
          for (int o = 0; o < kC; ++o)
            for (int c = 0; c < kC; ++c)
              if (o < l.out_ch && j * kC + c < mid)
                leaf.w1[static_cast<std::size_t>(o) * kC + c] = ql.w2[static_cast<std::size_t>(o) * mid + j * kC + c];
          for (int o = 0; o < kC && j * kC + o < mid; ++o) leaf.bias[o] = ql.b[j * kC + o];
          if (j == 0) {
            leaf.bias.resize(2 * kC, 0);
            for (int o = 0; o < l.out_ch; ++o) leaf.bias[kC + o] = ql.b2[o];
          }
          seg.leaves.push_back(std::move(leaf));
        }
        OpT t;
        t.op = Opcode::ER;
        t.lm = leaves;
        t.src = in[0];
        t.dst = new_value();
        t.qw = ql.fmt.w;
        t.qb = ql.fmt.b;
        t.qo = ql.fmt.out;
        t.qs = ql.fmt.mid;
        t.segment = out.segments.size();
        out.segments.push_back(std::move(seg));
        out.ops.push_back(t);
        vals[i] = {t.dst};
        break;
      }
      case LayerKind::PixelUnshuffleDown2: {
        single("pixel unshuffle");
        if (l.out_ch > kC) fail(i, "pixel unshuffle produces at most 32 channels");
        // Stride-2 delta convolution: phase (dx, dy) picks input tap (dy+1, dx+1).
        ParamSegment seg;
        LeafParams leaf = empty_leaf(false);
        for (int g = 0; g < 4; ++g)
          for (int c = 0; c < l.in_ch; ++c) w3_at(leaf, (g / 2 + 1) * 3 + (g % 2 + 1), g * l.in_ch + c, c) = 1;
        seg.leaves.push_back(std::move(leaf));
        OpT t;
        t.op = Opcode::DNX2;
        t.pool = Pool::Stride;
        t.src = in[0];
        t.dst = new_value();
        t.qw = Q(0);
        t.qb = Q(0);
        t.qo = in_fmt(i);
        t.segment = out.segments.size();
        out.segments.push_back(std::move(seg));
        out.ops.push_back(t);
        vals[i] = {t.dst};
        break;
      }
      case LayerKind::PixelShuffleUp2:
        fail(i, "pixel shuffle must follow a 3x3 convolution");
        break;
      case LayerKind::ResidualAdd:
        fail(i, "residual add must follow a convolution");
        break;
    }
  }
  const auto& last = vals.back();
  if (last.size() != 1) throw Error("compile: model output wider than 32 channels");
  out.final_value = last[0];
  return out;
}

// ---------------------------------------------------------------------------
// Geometry

struct Region {
  Rect r;  // absolute, buffer written at offset 0
  int level = 0;
};

struct Placed {
  OpT t;
  Rect conv_req;
  int tiles_x = 0, tiles_y = 0;
  int src_off_x = 0, src_off_y = 0;
  Rect out;
  int out_level = 0;
};

int64_t shift_of(const OpT& t) { return t.type == InferType::Truncated ? 1 : 0; }

Rect natural_conv(const OpT& t, const Rect& src) {
  const int64_t b = shift_of(t);
  return Rect{src.x + b, src.y + b, src.w - 2 * b, src.h - 2 * b};
}

// Places one op reading `src` so that it covers conv_req.
Placed place(const OpT& t, const Region& src, const Rect& conv_req) {
  Placed p;
  p.t = t;
  p.conv_req = conv_req;
  const int64_t b = shift_of(t);
  const int64_t offx = conv_req.x - b - src.r.x, offy = conv_req.y - b - src.r.y;
  if (offx < 0 || offy < 0 || conv_req.w <= 0 || conv_req.h <= 0)
    throw Error("compile: internal region error (source does not cover the request)");
  p.src_off_x = static_cast<int>(offx);
  p.src_off_y = static_cast<int>(offy);
  p.tiles_x = static_cast<int>(ceil_div(conv_req.w, kTileW));
  p.tiles_y = static_cast<int>(ceil_div(conv_req.h, kTileH));
  const int64_t ew = std::min<int64_t>(int64_t{p.tiles_x} * kTileW, src.r.w - offx - 2 * b);
  const int64_t eh = std::min<int64_t>(int64_t{p.tiles_y} * kTileH, src.r.h - offy - 2 * b);
  const Rect conv{conv_req.x, conv_req.y, ew, eh};
  switch (t.op) {
    case Opcode::CONV:
    case Opcode::ER:
      p.out = conv;
      p.out_level = src.level;
      break;
    case Opcode::UPX2:
      p.out = Rect{2 * conv.x, 2 * conv.y, 2 * conv.w, 2 * conv.h};
      p.out_level = src.level + 1;
      break;
    case Opcode::DNX2: {
      auto pooled = [&](int64_t lo, int64_t n) {
        const int64_t a = ceil_div(lo, 2);
        return std::make_pair(a, (t.pool == Pool::Max ? floor_div(lo + n, 2) : ceil_div(lo + n, 2)) - a);
      };
      const auto [x, w] = pooled(conv.x, conv.w);
      const auto [y, h] = pooled(conv.y, conv.h);
      p.out = Rect{x, y, w, h};
      p.out_level = src.level - 1;
      break;
    }
  }
  return p;
}

// Conv-grid rectangle an op must compute to deliver `r` at its output.
Rect conv_request(const OpT& t, const Rect& r) {
  switch (t.op) {
    case Opcode::CONV:
    case Opcode::ER: return r;
    case Opcode::UPX2: {
      const int64_t x0 = floor_div(r.x, 2), y0 = floor_div(r.y, 2);
      return Rect{x0, y0, ceil_div(r.x + r.w, 2) - x0, ceil_div(r.y + r.h, 2) - y0};
    }
    case Opcode::DNX2: {
      const int64_t extra = t.pool == Pool::Max ? 0 : 1;
      return Rect{2 * r.x, 2 * r.y, 2 * r.w - extra, 2 * r.h - extra};
    }
  }
  return r;
}

Rect expand(const Rect& r, int64_t b) { return Rect{r.x - b, r.y - b, r.w + 2 * b, r.h + 2 * b}; }

Rect unite(const std::optional<Rect>& a, const Rect& b) {
  if (!a) return b;
  const int64_t x0 = std::min(a->x, b.x), y0 = std::min(a->y, b.y);
  const int64_t x1 = std::max(a->x + a->w, b.x + b.w), y1 = std::max(a->y + a->h, b.y + b.h);
  return Rect{x0, y0, x1 - x0, y1 - y0};
}

struct Schedule {
  std::vector<Placed> ops;
  std::vector<char> to_do;  // per value: written to DO
  int values = 0;
  Rect final_region;
};

// Forward placement of ops [begin, end) at their natural extents.
void place_natural(const Lowered& low, std::size_t begin, std::size_t end, std::map<int, Region>& regions,
                   std::vector<Placed>& out) {
  for (std::size_t k = begin; k < end; ++k) {
    const OpT& t = low.ops[k];
    const Region& src = regions.at(t.src);
    Placed p = place(t, src, natural_conv(t, src.r));
    regions[t.dst] = Region{p.out, p.out_level};
    out.push_back(p);
  }
}

}  // namespace

void link_params(Program& p, const ParamLayout& layout, const std::vector<uint32_t>& segment_addr) {
  if (layout.instr_segment.size() != p.instrs.size()) throw Error("link_params: layout does not match the program");
  for (std::size_t i = 0; i < p.instrs.size(); ++i) {
    const std::size_t s = layout.instr_segment[i];
    if (s >= segment_addr.size()) throw Error("link_params: segment without an address");
    p.instrs[i].param = segment_addr[s];
  }
}

namespace {

Program build_program(const Schedule& s, const MachineConfig& machine, QFormat input_fmt,
                      std::vector<std::size_t>& instr_segment) {
  const int values = s.values;
  // Last use of each value.
  std::vector<int> last_use(static_cast<std::size_t>(values), -1);
  for (std::size_t j = 0; j < s.ops.size(); ++j) {
    last_use[s.ops[j].t.src] = static_cast<int>(j);
    if (s.ops[j].t.srcS >= 0) last_use[s.ops[j].t.srcS] = static_cast<int>(j);
  }
  std::map<int, BufferId> where;
  where[0] = BufferId::DI;
  std::vector<int> holder(static_cast<std::size_t>(machine.bb_count), -1);
  auto release = [&](int v) {
    for (auto& h : holder)
      if (h == v) h = -1;
  };

  Program p;
  p.config = machine;
  p.input_fmt = input_fmt;
  for (std::size_t j = 0; j < s.ops.size(); ++j) {
    const Placed& pl = s.ops[j];
    const OpT& t = pl.t;
    Instruction ins;
    ins.op = t.op;
    ins.lm = t.lm;
    ins.type = t.type;
    ins.pool = t.pool;
    ins.tiles_x = pl.tiles_x;
    ins.tiles_y = pl.tiles_y;
    ins.qw = t.qw;
    ins.qb = t.qb;
    ins.qo = t.qo;
    ins.qs = t.qs;
    ins.param = static_cast<uint32_t>(t.segment);
    ins.src = BufferRef{where.at(t.src), pl.src_off_x, pl.src_off_y};

    if (t.srcS >= 0) {
      const Placed* producer = nullptr;
      for (std::size_t k = 0; k < j; ++k)
        if (s.ops[k].t.dst == t.srcS) producer = &s.ops[k];
      if (!producer) throw Error("compile: srcS value has no producer");
      ins.srcS = BufferRef{where.at(t.srcS), static_cast<int>(pl.out.x - producer->out.x),
                           static_cast<int>(pl.out.y - producer->out.y)};
    }

    BufferRef dst;
    if (s.to_do[t.dst]) {
      dst = BufferRef{BufferId::DO, static_cast<int>(pl.out.x - s.final_region.x),
                      static_cast<int>(pl.out.y - s.final_region.y)};
    } else {
      int pick = -1;
      for (int b = 0; b < machine.bb_count && pick < 0; ++b)
        if (holder[b] < 0 && !(where.count(t.src) && where.at(t.src) == static_cast<BufferId>(b))) pick = b;
      if (pick < 0 && t.srcS >= 0 && last_use[t.srcS] == static_cast<int>(j)) {
        for (int b = 0; b < machine.bb_count; ++b)
          if (holder[b] == t.srcS) pick = b;
      }
      if (pick < 0)
        throw Error("compile: instruction " + std::to_string(j + 1) + " needs more than " +
                    std::to_string(machine.bb_count) + " live block buffers");
      holder[pick] = t.dst;
      where[t.dst] = static_cast<BufferId>(pick);
      dst = BufferRef{static_cast<BufferId>(pick), 0, 0};
    }
    if (t.partial)
      ins.dstS = dst;
    else
      ins.dst = dst;
    p.instrs.push_back(ins);
    instr_segment.push_back(t.segment);

    if (last_use[t.src] == static_cast<int>(j)) release(t.src);
    if (t.srcS >= 0 && last_use[t.srcS] == static_cast<int>(j)) {
      for (auto& h : holder)
        if (h == t.srcS) h = -1;
    }
    if (last_use[t.dst] < 0) release(t.dst);
  }
  return p;
}

}  // namespace

CompileResult compile(const QuantizedModel& q, const MachineConfig& machine) {
  check_quantized(q);
  const Lowered low = lower(q);
  const std::size_t n = low.ops.size();
  const int64_t cap = machine.x_i;

  std::map<int, Region> regions;
  regions[0] = Region{Rect{0, 0, cap, cap}, 0};
  std::vector<Placed> full;
  place_natural(low, 0, n, regions, full);
  const Rect F = regions.at(low.final_value).r;

  std::size_t split = n;
  for (std::size_t j = 0; j < n && split == n; ++j)
    if (low.ops[j].dst != low.final_value && (full[j].out.w > cap || full[j].out.h > cap)) split = j;

  auto finish = [&](const Schedule& s, std::size_t pieces, std::vector<Diagnostic>& diags) -> std::optional<CompileResult> {
    CompileResult r;
    r.program = build_program(s, machine, q.input_fmt, r.layout.instr_segment);
    r.layout.segments = low.segments;
    r.pieces = pieces;
    const GeometryTrace t = trace_geometry(r.program, machine.x_i, machine.x_i);
    diags = t.diags;
    if (diags.empty() && !(t.final_do.content == Rect{0, 0, F.w, F.h}))
      diags.push_back({0, 0, "DO writes do not cover the block output"});
    if (!diags.empty()) return std::nullopt;
    return r;
  };

  std::vector<Diagnostic> diags;
  if (split == n) {
    Schedule s;
    s.ops = full;
    s.values = low.values;
    s.to_do.assign(static_cast<std::size_t>(s.values), 0);
    s.to_do[low.final_value] = 1;
    s.final_region = F;
    if (auto r = finish(s, 1, diags)) return *r;
  } else {
    for (int np = 2; np <= 8; ++np) {
      auto bounds = [&](int64_t lo, int64_t size) {
        std::vector<int64_t> b{lo};
        for (int i = 1; i < np; ++i) b.push_back(lo + (i * size / np) / 4 * 4);
        b.push_back(lo + size);
        return b;
      };
      const auto bx = bounds(F.x, F.w), by = bounds(F.y, F.h);
      bool degenerate = false;
      for (int i = 0; i < np; ++i) degenerate |= bx[i + 1] <= bx[i] || by[i + 1] <= by[i];
      if (degenerate) break;

      Schedule s;
      s.ops.assign(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(split));
      s.values = low.values;
      s.final_region = F;
      std::vector<char> to_do(static_cast<std::size_t>(low.values), 0);
      std::map<int, Region> local;
      for (const auto& [v, reg] : regions) local[v] = reg;
      bool ok = true;
      for (int py = 0; py < np && ok; ++py) {
        for (int px = 0; px < np && ok; ++px) {
          const Rect piece{bx[px], by[py], bx[px + 1] - bx[px], by[py + 1] - by[py]};
          std::map<int, Rect> req;
          std::vector<std::optional<Rect>> conv_req(n);
          req[low.final_value] = piece;
          for (std::size_t j = n; j-- > split;) {
            const OpT& t = low.ops[j];
            auto it = req.find(t.dst);
            if (it == req.end()) continue;
            const Rect c = conv_request(t, it->second);
            conv_req[j] = c;
            const Rect sreq = t.type == InferType::Truncated ? expand(c, 1) : c;
            auto merge = [&](int v, const Rect& r) {
              auto f = req.find(v);
              req[v] = unite(f == req.end() ? std::optional<Rect>{} : std::optional<Rect>{f->second}, r);
            };
            const Rect out_req = it->second;
            merge(t.src, sreq);
            if (t.srcS >= 0) merge(t.srcS, out_req);
          }
          std::map<int, int> rename;
          auto mapped = [&](int v) {
            auto f = rename.find(v);
            return f == rename.end() ? v : f->second;
          };
          for (std::size_t j = split; j < n; ++j) {
            if (!conv_req[j]) continue;
            OpT t = low.ops[j];
            t.src = mapped(t.src);
            if (t.srcS >= 0) t.srcS = mapped(t.srcS);
            const int v = s.values++;
            rename[t.dst] = v;
            t.dst = v;
            to_do.push_back(low.ops[j].dst == low.final_value ? 1 : 0);
            const Region src = local.at(t.src);
            Placed p;
            try {
              p = place(t, src, *conv_req[j]);
            } catch (const Error&) {
              ok = false;
              break;
            }
            local[v] = Region{p.out, p.out_level};
            s.ops.push_back(p);
          }
        }
      }
      if (!ok) continue;
      s.to_do = std::move(to_do);
      if (auto r = finish(s, static_cast<std::size_t>(np * np), diags)) return *r;
    }
  }
  std::string msg = "compile: " + q.model.name + " does not fit the machine";
  for (const auto& d : diags) msg += "\n  " + format_diagnostic(d);
  throw Error(msg);
}

}  // namespace ecnn
