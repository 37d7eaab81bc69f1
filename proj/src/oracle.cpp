// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/oracle.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "ecnn/kernels.hpp"

namespace ecnn {

namespace {

constexpr int kC = 32;

// A feature map covering [ix.lo, ix.hi) x [iy.lo, iy.hi) in absolute
// coordinates of its resolution.
struct Plane {
  Interval ix, iy;
  Feature f;
  int16_t at(int64_t x, int64_t y, int ch) const {
    return f.codes.at(static_cast<int>(x - ix.lo), static_cast<int>(y - iy.lo), ch);
  }
  int16_t& at(int64_t x, int64_t y, int ch) {
    return f.codes.at(static_cast<int>(x - ix.lo), static_cast<int>(y - iy.lo), ch);
  }
};

Plane make_plane(Interval ix, Interval iy, int c, QFormat fmt) {
  if (ix.empty() || iy.empty()) throw Error("oracle: a layer leaves no valid pixels; the frame is too small");
  Plane p;
  p.ix = ix;
  p.iy = iy;
  p.f.fmt = fmt;
  p.f.codes = CodeTensor(static_cast<int>(ix.size()), static_cast<int>(iy.size()), c);
  return p;
}

using WeightAt = std::function<int16_t(int tap, int o, int i)>;

std::vector<int16_t> leaf_weights(const WeightAt& w) {
  std::vector<int16_t> w3(9 * kC * kC, 0);
  for (int tap = 0; tap < 9; ++tap)
    for (int o = 0; o < kC; ++o)
      for (int i = 0; i < kC; ++i) w3[(tap * kC + o) * kC + i] = w(tap, o, i);
  return pack_3x3(w3.data());
}

// 3x3 accumulation over the output grid gx x gy from input channels
// [c0, c0+32); pixels outside the plane read as zero.
std::vector<int32_t> leaf_conv(const Plane& p, int c0, Interval gx, Interval gy, const std::vector<int16_t>& packed) {
  const int gw = static_cast<int>(gx.size()), gh = static_cast<int>(gy.size());
  std::vector<int16_t> in(static_cast<std::size_t>(gw + 2) * (gh + 2) * kC, 0);
  const int cn = std::min(kC, p.f.codes.c - c0);
  for (int y = 0; y < gh + 2; ++y) {
    const int64_t ay = gy.lo - 1 + y;
    if (ay < p.iy.lo || ay >= p.iy.hi) continue;
    for (int x = 0; x < gw + 2; ++x) {
      const int64_t ax = gx.lo - 1 + x;
      if (ax < p.ix.lo || ax >= p.ix.hi) continue;
      for (int c = 0; c < cn; ++c) in[(static_cast<std::size_t>(y) * (gw + 2) + x) * kC + c] = p.at(ax, ay, c0 + c);
    }
  }
  std::vector<int32_t> acc(static_cast<std::size_t>(gw) * gh * kC, 0);
  active_kernels().conv3x3(in.data(), gw, gh, packed.data(), acc.data());
  return acc;
}

int64_t overlap(Interval a, int64_t size) { return std::max<int64_t>(0, std::min(a.hi, size) - std::max<int64_t>(a.lo, 0)); }

struct Ctx {
  const QuantizedModel& q;
  int64_t frame_w, frame_h;
  OpCounter* counter;

  int64_t grid(int64_t size, int level) const { return level >= 0 ? size << level : size >> -level; }
  void count(Interval gx, Interval gy, int level, uint64_t ops_per_pixel) const {
    if (!counter) return;
    counter->ops += ops_per_pixel * static_cast<uint64_t>(overlap(gx, grid(frame_w, level)) * overlap(gy, grid(frame_h, level)));
  }
};

// Conv3x3 / Conv1x1, optionally grouped for a following pixel shuffle and
// optionally joined with a residual source.
Plane conv_layer(const Ctx& cx, std::size_t i, const Plane& in, int level, const Plane* skip, QFormat out_fmt) {
  const LayerSpec& l = cx.q.model.layers[i];
  const QuantLayer& ql = cx.q.layers[i];
  const bool one = l.kind == LayerKind::Conv1x1;
  const bool shuffled = i + 1 < cx.q.model.layers.size() && cx.q.model.layers[i + 1].kind == LayerKind::PixelShuffleUp2;
  const Interval gx = one ? in.ix : Interval{in.ix.lo + 1, in.ix.hi - 1};
  const Interval gy = one ? in.iy : Interval{in.iy.lo + 1, in.iy.hi - 1};
  Plane conv = make_plane(gx, gy, l.out_ch, out_fmt);
  const int K = (l.in_ch + kC - 1) / kC;
  const int C = shuffled ? l.out_ch / 4 : kC;
  const int G = shuffled ? 4 : (l.out_ch + kC - 1) / kC;
  if (shuffled && C > kC) throw Error("oracle: upsampler wider than 32 channels");
  if ((skip || l.pool != Pool::None) && (K != 1 || G != 1)) throw Error("oracle: unsupported wide layer");
  const int sw = ql.fmt.w.frac_bits + in.f.fmt.frac_bits;
  const QFormat mid = ql.fmt.mid.value_or(out_fmt);
  const int gw = static_cast<int>(gx.size()), gh = static_cast<int>(gy.size());

  for (int g = 0; g < G; ++g) {
    auto out_of = [&](int o) { return shuffled ? (o < C ? g * C + o : -1) : (g * kC + o < l.out_ch ? g * kC + o : -1); };
    std::vector<int16_t> partial;
    for (int k = 0; k < K; ++k) {
      const bool last = k == K - 1;
      const auto packed = leaf_weights([&](int tap, int o, int i2) -> int16_t {
        const int oc = out_of(o), ic = k * kC + i2;
        if (oc < 0 || ic >= l.in_ch) return 0;
        if (one) return tap == 4 ? ql.w[static_cast<std::size_t>(oc) * l.in_ch + ic] : 0;
        return ql.w[(static_cast<std::size_t>(oc) * l.in_ch + ic) * 9 + tap];
      });
      const auto acc = leaf_conv(in, k * kC, gx, gy, packed);
      std::vector<int16_t> next(acc.size(), 0);
      for (int y = 0; y < gh; ++y)
        for (int x = 0; x < gw; ++x)
          for (int o = 0; o < kC; ++o) {
            const int oc = out_of(o);
            const std::size_t idx = (static_cast<std::size_t>(y) * gw + x) * kC + o;
            int64_t v = acc[idx];
            if (last && oc >= 0) v += align_exact(ql.b[oc], ql.fmt.b.frac_bits, sw);
            int S = sw;
            auto add = [&](int64_t code, int n) {
              const int T = std::max(S, n);
              v = align_exact(v, S, T) + align_exact(code, n, T);
              S = T;
            };
            if (k > 0) add(partial[idx], mid.frac_bits);
            if (last && skip && oc >= 0) add(skip->at(gx.lo + x, gy.lo + y, oc), skip->f.fmt.frac_bits);
            next[idx] = static_cast<int16_t>(requantize_code(v, S, last ? out_fmt : mid));
          }
      partial = std::move(next);
    }
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x)
        for (int o = 0; o < kC; ++o)
          if (out_of(o) >= 0) conv.f.codes.at(x, y, out_of(o)) = partial[(static_cast<std::size_t>(y) * gw + x) * kC + o];
  }
  cx.count(gx, gy, level, 2ull * K * G * (one ? 1 : 9) * kC * kC);

  if (l.pool == Pool::None) return conv;
  const Interval px = forward_interval(l, in.ix), py = forward_interval(l, in.iy);
  Plane pooled = make_plane(px, py, l.out_ch, out_fmt);
  for (int64_t y = py.lo; y < py.hi; ++y)
    for (int64_t x = px.lo; x < px.hi; ++x)
      for (int c = 0; c < l.out_ch; ++c) {
        int16_t v = conv.at(2 * x, 2 * y, c);
        if (l.pool == Pool::Max)
          v = std::max({v, conv.at(2 * x + 1, 2 * y, c), conv.at(2 * x, 2 * y + 1, c), conv.at(2 * x + 1, 2 * y + 1, c)});
        pooled.at(x, y, c) = v;
      }
  return pooled;
}

Plane er_layer(const Ctx& cx, std::size_t i, const Plane& in, int level) {
  const LayerSpec& l = cx.q.model.layers[i];
  const QuantLayer& ql = cx.q.layers[i];
  if (l.in_ch > kC || l.out_ch > kC) throw Error("oracle: ERModule wider than 32 channels");
  const int mid = l.in_ch * l.expand;
  const int leaves = (mid + kC - 1) / kC;
  const QFormat qs = *ql.fmt.mid;
  const Interval gx{in.ix.lo + 1, in.ix.hi - 1}, gy{in.iy.lo + 1, in.iy.hi - 1};
  Plane out = make_plane(gx, gy, l.out_ch, ql.fmt.out);
  const int gw = static_cast<int>(gx.size()), gh = static_cast<int>(gy.size());
  const int s3 = ql.fmt.w.frac_bits + in.f.fmt.frac_bits, s1 = ql.fmt.w.frac_bits + qs.frac_bits;
  std::vector<int16_t> mids(static_cast<std::size_t>(gw) * gh * mid);
  for (int j = 0; j < leaves; ++j) {
    const auto packed = leaf_weights([&](int tap, int o, int i2) -> int16_t {
      const int m = j * kC + o;
      if (m >= mid || i2 >= l.in_ch) return 0;
      return ql.w[(static_cast<std::size_t>(m) * l.in_ch + i2) * 9 + tap];
    });
    const auto acc = leaf_conv(in, 0, gx, gy, packed);
    for (std::size_t p = 0; p < static_cast<std::size_t>(gw) * gh; ++p)
      for (int o = 0; o < kC && j * kC + o < mid; ++o)
        mids[p * mid + j * kC + o] = static_cast<int16_t>(requantize_code(
            acc[p * kC + o] + align_exact(ql.b[j * kC + o], ql.fmt.b.frac_bits, s3), s3, qs));
  }
  const int S = std::max(s1, in.f.fmt.frac_bits);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) {
      const int16_t* m = mids.data() + (static_cast<std::size_t>(y) * gw + x) * mid;
      for (int o = 0; o < l.out_ch; ++o) {
        int64_t v = align_exact(ql.b2[o], ql.fmt.b.frac_bits, s1);
        for (int c = 0; c < mid; ++c) v += int64_t{ql.w2[static_cast<std::size_t>(o) * mid + c]} * m[c];
        v = align_exact(v, s1, S) + align_exact(in.at(gx.lo + x, gy.lo + y, o), in.f.fmt.frac_bits, S);
        out.at(gx.lo + x, gy.lo + y, o) = static_cast<int16_t>(requantize_code(v, S, ql.fmt.out));
      }
    }
  cx.count(gx, gy, level, 2ull * leaves * (9 + 1) * kC * kC);
  return out;
}

Plane shuffle(const Plane& in, int C) {
  Plane out = make_plane({2 * in.ix.lo, 2 * in.ix.hi}, {2 * in.iy.lo, 2 * in.iy.hi}, C, in.f.fmt);
  for (int64_t y = in.iy.lo; y < in.iy.hi; ++y)
    for (int64_t x = in.ix.lo; x < in.ix.hi; ++x)
      for (int g = 0; g < 4; ++g)
        for (int c = 0; c < C; ++c) out.at(2 * x + g % 2, 2 * y + g / 2, c) = in.at(x, y, g * C + c);
  return out;
}

Plane unshuffle(const Ctx& cx, const LayerSpec& l, const Plane& in, int level) {
  const int C = l.in_ch;
  Plane out = make_plane(forward_interval(l, in.ix), forward_interval(l, in.iy), 4 * C, in.f.fmt);
  for (int64_t y = out.iy.lo; y < out.iy.hi; ++y)
    for (int64_t x = out.ix.lo; x < out.ix.hi; ++x)
      for (int g = 0; g < 4; ++g)
        for (int c = 0; c < C; ++c) out.at(x, y, g * C + c) = in.at(2 * x + g % 2, 2 * y + g / 2, c);
  // Runs as a stride-2 delta convolution over the input grid.
  cx.count({in.ix.lo + 1, in.ix.hi - 1}, {in.iy.lo + 1, in.iy.hi - 1}, level, 2ull * 9 * kC * kC);
  return out;
}

}  // namespace

Feature oracle_frame(const QuantizedModel& q, const Feature& frame, OpCounter* counter) {
  check_quantized(q);
  const ModelIR& m = q.model;
  if (frame.codes.c != m.input_channels()) throw Error("oracle: frame channel count differs from the model input");
  if (frame.fmt != q.input_fmt) throw Error("oracle: frame format differs from the model input format");
  const int W = frame.codes.w, H = frame.codes.h;
  const int L = m.output_scale_level();
  const Ctx cx{q, W, H, counter};
  const int64_t out_w = cx.grid(W, L), out_h = cx.grid(H, L);

  Interval nx{0, out_w}, ny{0, out_h};
  for (std::size_t i = m.layers.size(); i-- > 0;) {
    nx = backward_interval(m.layers[i], nx);
    ny = backward_interval(m.layers[i], ny);
  }
  Plane cur = make_plane({std::min<int64_t>(0, nx.lo), std::max<int64_t>(W, nx.hi)},
                         {std::min<int64_t>(0, ny.lo), std::max<int64_t>(H, ny.hi)}, frame.codes.c, frame.fmt);
  for (int64_t y = cur.iy.lo; y < cur.iy.hi; ++y)
    for (int64_t x = cur.ix.lo; x < cur.ix.hi; ++x)
      for (int c = 0; c < frame.codes.c; ++c) cur.at(x, y, c) = clamped(frame.codes, x, y, c);

  std::map<int, Plane> kept;
  for (const auto& [src, dst] : m.residual_links()) {
    (void)dst;
    kept[src];
  }
  int level = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const QuantLayer& ql = q.layers[i];
    const bool joined = i + 1 < m.layers.size() && m.layers[i + 1].kind == LayerKind::ResidualAdd;
    switch (l.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1: {
        const Plane* skip = joined ? &kept.at(m.layers[i + 1].skip_from) : nullptr;
        cur = conv_layer(cx, i, cur, level, skip, joined ? q.layers[i + 1].fmt.out : ql.fmt.out);
        break;
      }
      case LayerKind::ERModule: cur = er_layer(cx, i, cur, level); break;
      case LayerKind::PixelShuffleUp2: cur = shuffle(cur, l.out_ch); break;
      case LayerKind::PixelUnshuffleDown2: cur = unshuffle(cx, l, cur, level); break;
      case LayerKind::ResidualAdd:
        if (i == 0 || (m.layers[i - 1].kind != LayerKind::Conv3x3 && m.layers[i - 1].kind != LayerKind::Conv1x1))
          throw Error("oracle: residual add must follow a convolution");
        break;
    }
    level = l.scale_level;
    if (kept.count(static_cast<int>(i))) kept[static_cast<int>(i)] = cur;
  }

  if (cur.ix.lo > 0 || cur.ix.hi < out_w || cur.iy.lo > 0 || cur.iy.hi < out_h)
    throw Error("oracle: valid region does not cover the output frame");
  Feature out;
  out.fmt = cur.f.fmt;
  out.codes = CodeTensor(static_cast<int>(out_w), static_cast<int>(out_h), cur.f.codes.c);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < out.codes.c; ++c) out.codes.at(x, y, c) = cur.at(x, y, c);
  if (counter) counter->output_pixels = static_cast<uint64_t>(out_w * out_h);
  return out;
}

}  // namespace ecnn
