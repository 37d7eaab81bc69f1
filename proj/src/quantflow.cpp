// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/quantflow.hpp"

#include <algorithm>
#include <numeric>

namespace ecnn {

namespace {

constexpr int kC = 32;

float relu(float v) { return v > 0 ? v : 0; }

// Sum over the 3x3 (or 1x1) window for output channel `o`, input channels
// [i0, i1), edges replicated.
float conv_at(const FloatTensor& in, const std::vector<float>& w, int in_ch, bool one, int o, int i0, int i1, int x,
              int y) {
  float s = 0;
  if (one) {
    const float* px = in.pixel(x, y);
    for (int i = i0; i < i1; ++i) s += w[static_cast<std::size_t>(o) * in_ch + i] * px[i];
    return s;
  }
  for (int ky = 0; ky < 3; ++ky)
    for (int kx = 0; kx < 3; ++kx)
      for (int i = i0; i < i1; ++i)
        s += w[(static_cast<std::size_t>(o) * in_ch + i) * 9 + ky * 3 + kx] * clamped(in, x + kx - 1, y + ky - 1, i);
  return s;
}

}  // namespace

FloatTensor float_forward(const ModelIR& m, const ModelWeights& w, const FloatTensor& input,
                          const std::function<void(std::size_t, const FloatTensor&)>& tap,
                          const std::function<void(std::size_t, const std::vector<double>&)>& mid_tap) {
  check_weights(m, w);
  if (input.c != m.input_channels()) throw Error("float_forward: input channel count differs from the model");
  std::vector<FloatTensor> outs;
  FloatTensor cur = input;
  for (std::size_t li = 0; li < m.layers.size(); ++li) {
    const LayerSpec& l = m.layers[li];
    const LayerWeights& lw = w.layers[li];
    FloatTensor next;
    switch (l.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1: {
        const bool one = l.kind == LayerKind::Conv1x1;
        FloatTensor conv(cur.w, cur.h, l.out_ch);
        std::vector<double> partials;
        for (int y = 0; y < cur.h; ++y)
          for (int x = 0; x < cur.w; ++x)
            for (int o = 0; o < l.out_ch; ++o) {
              float s = 0;
              for (int i0 = 0; i0 < l.in_ch; i0 += kC) {
                s += conv_at(cur, lw.w, l.in_ch, one, o, i0, std::min(l.in_ch, i0 + kC), x, y);
                if (i0 + kC < l.in_ch) partials.push_back(s);
              }
              s += lw.b[o];
              conv.at(x, y, o) = l.act == Activation::ReLU ? relu(s) : s;
            }
        if (!partials.empty() && mid_tap) mid_tap(li, partials);
        if (l.pool == Pool::None) {
          next = std::move(conv);
          break;
        }
        next = FloatTensor(cur.w / 2, cur.h / 2, l.out_ch);
        for (int y = 0; y < next.h; ++y)
          for (int x = 0; x < next.w; ++x)
            for (int o = 0; o < l.out_ch; ++o) {
              float v = conv.at(2 * x, 2 * y, o);
              if (l.pool == Pool::Max)
                v = std::max({v, conv.at(2 * x + 1, 2 * y, o), conv.at(2 * x, 2 * y + 1, o), conv.at(2 * x + 1, 2 * y + 1, o)});
              next.at(x, y, o) = v;
            }
        break;
      }
      case LayerKind::ERModule: {
        const int mid = l.in_ch * l.expand;
        FloatTensor e(cur.w, cur.h, mid);
        std::vector<double> mids;
        mids.reserve(e.data.size());
        for (int y = 0; y < cur.h; ++y)
          for (int x = 0; x < cur.w; ++x)
            for (int j = 0; j < mid; ++j) {
              float s = conv_at(cur, lw.w, l.in_ch, false, j, 0, l.in_ch, x, y) + lw.b[j];
              if (l.act == Activation::ReLU) s = relu(s);
              e.at(x, y, j) = s;
              mids.push_back(s);
            }
        if (mid_tap) mid_tap(li, mids);
        next = FloatTensor(cur.w, cur.h, l.out_ch);
        for (int y = 0; y < cur.h; ++y)
          for (int x = 0; x < cur.w; ++x)
            for (int o = 0; o < l.out_ch; ++o) {
              float s = lw.b2[o] + cur.at(x, y, o);
              for (int j = 0; j < mid; ++j) s += lw.w2[static_cast<std::size_t>(o) * mid + j] * e.at(x, y, j);
              next.at(x, y, o) = s;
            }
        break;
      }
      case LayerKind::PixelShuffleUp2: {
        const int C = l.out_ch;
        next = FloatTensor(cur.w * 2, cur.h * 2, C);
        for (int y = 0; y < cur.h; ++y)
          for (int x = 0; x < cur.w; ++x)
            for (int g = 0; g < 4; ++g)
              for (int c = 0; c < C; ++c) next.at(2 * x + g % 2, 2 * y + g / 2, c) = cur.at(x, y, g * C + c);
        break;
      }
      case LayerKind::PixelUnshuffleDown2: {
        const int C = l.in_ch;
        next = FloatTensor(cur.w / 2, cur.h / 2, 4 * C);
        for (int y = 0; y < next.h; ++y)
          for (int x = 0; x < next.w; ++x)
            for (int g = 0; g < 4; ++g)
              for (int c = 0; c < C; ++c) next.at(x, y, g * C + c) = cur.at(2 * x + g % 2, 2 * y + g / 2, c);
        break;
      }
      case LayerKind::ResidualAdd: {
        next = cur;
        const FloatTensor& s = outs[static_cast<std::size_t>(l.skip_from)];
        if (s.data.size() != next.data.size()) throw Error("float_forward: residual shapes differ");
        for (std::size_t k = 0; k < next.data.size(); ++k) next.data[k] += s.data[k];
        break;
      }
    }
    if (tap) tap(li, next);
    outs.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

ModelStats collect_stats(const ModelIR& m, const ModelWeights& w, const std::vector<FloatTensor>& samples) {
  if (samples.empty()) throw Error("collect_stats: at least one sample frame is required");
  check_weights(m, w);
  ModelStats s;
  s.layers.resize(m.layers.size());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerWeights& lw = w.layers[i];
    LayerStats& ls = s.layers[i];
    ls.w.assign(lw.w.begin(), lw.w.end());
    ls.w.insert(ls.w.end(), lw.w2.begin(), lw.w2.end());
    ls.b.assign(lw.b.begin(), lw.b.end());
    ls.b.insert(ls.b.end(), lw.b2.begin(), lw.b2.end());
  }
  for (const FloatTensor& f : samples) {
    s.input.insert(s.input.end(), f.data.begin(), f.data.end());
    float_forward(
        m, w, f,
        [&](std::size_t i, const FloatTensor& t) {
          s.layers[i].out.insert(s.layers[i].out.end(), t.data.begin(), t.data.end());
        },
        [&](std::size_t i, const std::vector<double>& v) {
          s.layers[i].mid.insert(s.layers[i].mid.end(), v.begin(), v.end());
        });
  }
  std::sort(s.input.begin(), s.input.end());
  for (LayerStats& ls : s.layers) {
    std::sort(ls.w.begin(), ls.w.end());
    std::sort(ls.b.begin(), ls.b.end());
    std::sort(ls.out.begin(), ls.out.end());
    std::sort(ls.mid.begin(), ls.mid.end());
  }
  return s;
}

namespace {

QFormat pick(const std::vector<double>& v, Norm norm, bool is_signed, int width = 8) {
  if (v.empty()) return QFormat{is_signed, 0, width};
  return select_precision(v, norm, is_signed, width);
}

bool rearranges(const LayerSpec& l) {
  return l.kind == LayerKind::PixelShuffleUp2 || l.kind == LayerKind::PixelUnshuffleDown2;
}

}  // namespace

QuantPlan assign_formats(const ModelIR& m, const ModelStats& stats, Norm norm, QFormat input_fmt,
                         const SizeOracle& size_of, uint64_t budget_bytes) {
  validate_model(m);
  if (stats.layers.size() != m.layers.size()) throw Error("assign_formats: statistics do not match the model");
  QuantPlan plan;
  plan.norm = norm;
  plan.formats.resize(m.layers.size());
  auto& F = plan.formats;
  const std::size_t n = m.layers.size();

  // Residual joins share one format chosen over the skip source and the sum.
  std::vector<int> join_of(n, -1);
  for (const auto& [src, dst] : m.residual_links()) join_of[static_cast<std::size_t>(src)] = dst + 1;

  auto in_fmt = [&](std::size_t i) { return i == 0 ? input_fmt : F[i - 1].out; };
  auto set_bias = [&](std::size_t i) {
    const LayerSpec& l = m.layers[i];
    LayerFormats& f = F[i];
    f.b = pick(stats.layers[i].b, norm, true);
    int limit = f.w.frac_bits + in_fmt(i).frac_bits;
    if (l.kind == LayerKind::ERModule) limit = std::min(limit, f.w.frac_bits + f.mid->frac_bits);
    f.b.frac_bits = std::min(f.b.frac_bits, limit);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerStats& st = stats.layers[i];
    LayerFormats& f = F[i];
    if (rearranges(l)) {
      f.out = in_fmt(i);
    } else if (l.kind == LayerKind::ResidualAdd) {
      f.out = F[static_cast<std::size_t>(l.skip_from)].out;
      F[i - 1].out = f.out;
    } else {
      const bool relu_out = l.act == Activation::ReLU && l.kind != LayerKind::ERModule;
      std::vector<double> vals = st.out;
      if (join_of[i] >= 0) {
        const auto& sum = stats.layers[static_cast<std::size_t>(join_of[i])].out;
        vals.insert(vals.end(), sum.begin(), sum.end());
        std::sort(vals.begin(), vals.end());
      }
      f.out = pick(vals, norm, !relu_out || join_of[i] >= 0);
    }
    if (l.kind == LayerKind::ERModule) f.mid = pick(st.mid, norm, l.act != Activation::ReLU);
    if ((l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::Conv1x1) && l.in_ch > kHwChannels)
      f.mid = pick(st.mid, norm, true);
    if (!st.w.empty()) {
      f.w = pick(st.w, norm, true);
      set_bias(i);
    }
  }
  // A join may have changed the format feeding a following layer's bias rule.
  for (std::size_t i = 0; i < n; ++i)
    if (!stats.layers[i].w.empty()) set_bias(i);

  if (size_of) {
    std::vector<std::size_t> groups;
    for (std::size_t i = 0; i < n; ++i)
      if (!stats.layers[i].w.empty()) groups.push_back(i);
    std::stable_sort(groups.begin(), groups.end(),
                     [&](std::size_t a, std::size_t b) { return stats.layers[a].w.size() > stats.layers[b].w.size(); });
    std::size_t next = 0;
    plan.param_bytes = size_of(F);
    while (plan.param_bytes > budget_bytes) {
      if (next == groups.size())
        throw Error("parameters need " + std::to_string(plan.param_bytes) + " bytes even at 7 bits, budget is " +
                    std::to_string(budget_bytes));
      const std::size_t i = groups[next++];
      F[i].w = pick(stats.layers[i].w, norm, true, 7);
      set_bias(i);
      plan.demoted.push_back(i);
      plan.param_bytes = size_of(F);
    }
  }
  return plan;
}

}  // namespace ecnn
