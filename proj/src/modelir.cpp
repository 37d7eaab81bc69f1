// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/modelir.hpp"

#include <algorithm>
#include <cmath>

#include "ecnn/blockflow.hpp"

namespace ecnn {

std::string to_string(Family f) {
  switch (f) {
    case Family::SR2: return "SR2";
    case Family::SR4: return "SR4";
    case Family::Dn: return "Dn";
    case Family::Dn12ch: return "Dn12ch";
    case Family::Custom: return "custom";
  }
  return "?";
}

std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv3x3: return "Conv3x3";
    case LayerKind::Conv1x1: return "Conv1x1";
    case LayerKind::ERModule: return "ERModule";
    case LayerKind::PixelShuffleUp2: return "PixelShuffleUp2";
    case LayerKind::PixelUnshuffleDown2: return "PixelUnshuffleDown2";
    case LayerKind::ResidualAdd: return "ResidualAdd";
  }
  return "?";
}

std::string to_string(Pool p) {
  switch (p) {
    case Pool::None: return "none";
    case Pool::Stride: return "stride";
    case Pool::Max: return "max";
  }
  return "?";
}

Family parse_family(const std::string& s) {
  for (Family f : {Family::SR2, Family::SR4, Family::Dn, Family::Dn12ch, Family::Custom})
    if (to_string(f) == s) return f;
  throw Error("unknown model family '" + s + "'");
}

LayerKind parse_layer_kind(const std::string& s) {
  for (LayerKind k : {LayerKind::Conv3x3, LayerKind::Conv1x1, LayerKind::ERModule, LayerKind::PixelShuffleUp2,
                      LayerKind::PixelUnshuffleDown2, LayerKind::ResidualAdd})
    if (to_string(k) == s) return k;
  throw Error("unknown layer kind '" + s + "'");
}

Pool parse_pool(const std::string& s) {
  for (Pool p : {Pool::None, Pool::Stride, Pool::Max})
    if (to_string(p) == s) return p;
  throw Error("unknown pooling mode '" + s + "'");
}

int ModelIR::input_scale_level(std::size_t layer) const {
  return layer == 0 ? 0 : layers[layer - 1].scale_level;
}

std::vector<std::pair<int, int>> ModelIR::residual_links() const {
  std::vector<std::pair<int, int>> links;
  for (std::size_t i = 0; i < layers.size(); ++i)
    if (layers[i].kind == LayerKind::ResidualAdd) links.emplace_back(layers[i].skip_from, static_cast<int>(i) - 1);
  return links;
}

double ModelIR::expansion_ratio() const {
  int count = 0, total = 0;
  for (const auto& l : layers)
    if (l.kind == LayerKind::ERModule) {
      ++count;
      total += l.expand;
    }
  return count == 0 ? 0.0 : static_cast<double>(total) / count;
}

std::string ernet_name(Family f, int B, int R, int N) {
  std::string prefix;
  switch (f) {
    case Family::SR2: prefix = "SR2ERNet"; break;
    case Family::SR4: prefix = "SR4ERNet"; break;
    case Family::Dn: prefix = "DnERNet"; break;
    case Family::Dn12ch: prefix = "DnERNet-12ch"; break;
    case Family::Custom: prefix = "ERNet"; break;
  }
  return prefix + "-B" + std::to_string(B) + "R" + std::to_string(R) + "N" + std::to_string(N);
}

ModelIR build_ernet(Family family, int B, int R, int N, int channels) {
  if (family == Family::Custom) throw Error("build_ernet: custom family has no builder");
  if (B < 1) throw Error("build_ernet: B must be at least 1");
  if (R < 1) throw Error("build_ernet: R must be at least 1");
  if (N < 0 || N >= B) throw Error("build_ernet: N must satisfy 0 <= N < B");
  if (R * B + N > 4 * B) throw Error("build_ernet: expansion ratio R + N/B exceeds 4");
  if (channels <= 0 || channels % kHwChannels != 0)
    throw Error("build_ernet: channel count must be a positive multiple of 32");

  ModelIR m;
  m.name = ernet_name(family, B, R, N);
  m.family = family;
  m.B = B;
  m.R = R;
  m.N = N;
  m.channels = channels;
  const int C = channels;
  int level = 0;
  int image_ch = 3;
  if (family == Family::Dn12ch) {
    m.layers.push_back({LayerKind::PixelUnshuffleDown2, 3, 12, 1, --level});
    image_ch = 12;
  }
  const int head = static_cast<int>(m.layers.size());
  m.layers.push_back({LayerKind::Conv3x3, image_ch, C, 1, level});
  for (int b = 0; b < B; ++b) {
    LayerSpec er{LayerKind::ERModule, C, C, b < N ? R + 1 : R, level};
    er.act = Activation::ReLU;
    m.layers.push_back(er);
  }
  m.layers.push_back({LayerKind::Conv3x3, C, C, 1, level});
  LayerSpec add{LayerKind::ResidualAdd, C, C, 1, level};
  add.skip_from = head;
  m.layers.push_back(add);
  const int ups = family == Family::SR2 ? 1 : family == Family::SR4 ? 2 : 0;
  for (int u = 0; u < ups; ++u) {
    m.layers.push_back({LayerKind::Conv3x3, C, 4 * C, 1, level});
    ++level;
    m.layers.push_back({LayerKind::PixelShuffleUp2, 4 * C, C, 1, level});
  }
  if (family == Family::Dn12ch) {
    m.layers.push_back({LayerKind::Conv3x3, C, 12, 1, level});
    ++level;
    m.layers.push_back({LayerKind::PixelShuffleUp2, 12, 3, 1, level});
  } else {
    m.layers.push_back({LayerKind::Conv3x3, C, 3, 1, level});
  }
  validate_model(m);
  return m;
}

ModelIR build_plain(int depth, int channels) {
  if (depth < 1) throw Error("build_plain: depth must be at least 1");
  ModelIR m;
  m.name = "plain-D" + std::to_string(depth);
  m.channels = channels;
  for (int d = 0; d < depth; ++d) m.layers.push_back({LayerKind::Conv3x3, channels, channels, 1, 0});
  return m;
}

void validate_model(const ModelIR& m) {
  auto fail = [&](std::size_t i, const std::string& what) {
    throw Error(m.name + ": layer " + std::to_string(i) + " (" + to_string(m.layers[i].kind) + "): " + what);
  };
  if (m.layers.empty()) throw Error(m.name + ": model has no layers");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const int in_level = m.input_scale_level(i);
    if (l.in_ch <= 0 || l.out_ch <= 0) fail(i, "channel counts must be positive");
    if (i > 0 && l.in_ch != m.layers[i - 1].out_ch) fail(i, "input channels do not match previous layer");
    if (l.pool != Pool::None && l.kind != LayerKind::Conv3x3) fail(i, "pooling is only defined for Conv3x3");
    int expect_level = in_level;
    switch (l.kind) {
      case LayerKind::Conv3x3:
        if (l.pool != Pool::None) expect_level = in_level - 1;
        break;
      case LayerKind::Conv1x1: break;
      case LayerKind::ERModule:
        if (l.out_ch != l.in_ch) fail(i, "ERModule must preserve width");
        if (l.expand < 1 || l.expand > 4) fail(i, "expansion ratio must be in 1..4");
        break;
      case LayerKind::PixelShuffleUp2:
        if (l.in_ch != 4 * l.out_ch) fail(i, "pixel shuffle maps 4C channels to C");
        expect_level = in_level + 1;
        break;
      case LayerKind::PixelUnshuffleDown2:
        if (l.out_ch != 4 * l.in_ch) fail(i, "pixel unshuffle maps C channels to 4C");
        expect_level = in_level - 1;
        break;
      case LayerKind::ResidualAdd: {
        if (l.out_ch != l.in_ch) fail(i, "residual add must preserve width");
        if (i == 0) fail(i, "residual add needs a preceding layer");
        if (l.skip_from < 0 || static_cast<std::size_t>(l.skip_from) >= i - 1) fail(i, "bad skip source");
        const LayerSpec& src = m.layers[l.skip_from];
        if (src.out_ch != l.in_ch) fail(i, "skip source width differs");
        if (src.scale_level != in_level) fail(i, "skip source resolution differs");
        const LayerKind prev = m.layers[i - 1].kind;
        if ((prev != LayerKind::Conv3x3 && prev != LayerKind::Conv1x1) || m.layers[i - 1].pool != Pool::None)
          fail(i, "residual add must follow an unpooled convolution");
        break;
      }
    }
    if (l.scale_level != expect_level) fail(i, "inconsistent resolution level");
  }
}

ModelIR slice_model(const ModelIR& m, std::size_t begin, std::size_t end) {
  if (begin >= end || end > m.layers.size()) throw Error("slice_model: bad layer range");
  ModelIR s;
  s.name = m.name + "[" + std::to_string(begin) + ":" + std::to_string(end) + "]";
  s.channels = m.channels;
  const int base = m.input_scale_level(begin);
  for (std::size_t i = begin; i < end; ++i) {
    LayerSpec l = m.layers[i];
    l.scale_level -= base;
    if (l.kind == LayerKind::ResidualAdd) {
      if (l.skip_from < static_cast<int>(begin)) throw Error("slice_model: residual link crosses the cut");
      l.skip_from -= static_cast<int>(begin);
    }
    s.layers.push_back(l);
  }
  validate_model(s);
  return s;
}

ModelIR concat_models(const ModelIR& a, const ModelIR& b) {
  ModelIR c = a;
  c.name = a.name + "+" + b.name;
  c.family = Family::Custom;
  const int base = a.output_scale_level();
  const int offset = static_cast<int>(a.layers.size());
  for (LayerSpec l : b.layers) {
    l.scale_level += base;
    if (l.kind == LayerKind::ResidualAdd) l.skip_from += offset;
    c.layers.push_back(l);
  }
  validate_model(c);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

int hw_out_channels(const ModelIR& m, std::size_t i) {
  const LayerSpec& l = m.layers[i];
  if (i + 1 < m.layers.size() && m.layers[i + 1].kind == LayerKind::PixelShuffleUp2)
    return 4 * padded_channels(l.out_ch / 4);
  return padded_channels(l.out_ch);
}

double ops_per_pixel(const ModelIR& m, std::size_t i, CountMode mode) {
  const LayerSpec& l = m.layers[i];
  const bool hw = mode == CountMode::Hardware;
  const double in = hw ? padded_channels(l.in_ch) : l.in_ch;
  const double out = hw ? hw_out_channels(m, i) : l.out_ch;
  switch (l.kind) {
    case LayerKind::Conv3x3: return 2.0 * 9 * in * out;
    case LayerKind::Conv1x1: return 2.0 * in * out;
    case LayerKind::ERModule: {
      const double mid = in * l.expand;
      return 2.0 * 9 * in * mid + 2.0 * mid * out;
    }
    case LayerKind::PixelUnshuffleDown2:
      return hw ? 2.0 * 9 * kHwChannels * kHwChannels : 0.0;
    case LayerKind::PixelShuffleUp2:
    case LayerKind::ResidualAdd: return 0.0;
  }
  return 0.0;
}

bool computes_at_input_level(const LayerSpec& l) {
  return l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::PixelUnshuffleDown2;
}

bool consumes_border(const LayerSpec& l) {
  return l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::ERModule || l.kind == LayerKind::PixelUnshuffleDown2;
}

}  // namespace

double layer_ops_per_pixel(const LayerSpec& l, CountMode mode) {
  ModelIR single;
  single.layers.push_back(l);
  return ops_per_pixel(single, 0, mode);
}

double layer_compute_area(const ModelIR& m, std::size_t layer) {
  const LayerSpec& l = m.layers[layer];
  const int level = computes_at_input_level(l) ? m.input_scale_level(layer) : l.scale_level;
  return std::ldexp(1.0, 2 * level);
}

int64_t layer_param_count(const LayerSpec& l) {
  const int64_t in = l.in_ch, out = l.out_ch;
  switch (l.kind) {
    case LayerKind::Conv3x3: return 9 * in * out + out;
    case LayerKind::Conv1x1: return in * out + out;
    case LayerKind::ERModule: {
      const int64_t mid = in * l.expand;
      return 9 * in * mid + mid + mid * out + out;
    }
    default: return 0;
  }
}

ComplexityReport intrinsic_complexity(const ModelIR& m, CountMode mode) {
  ComplexityReport r;
  const double out_area = std::ldexp(1.0, 2 * m.output_scale_level());
  double ops = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    ops += ops_per_pixel(m, i, mode) * layer_compute_area(m, i) / out_area;
    r.param_count += layer_param_count(m.layers[i]);
    const int level = computes_at_input_level(m.layers[i]) ? m.input_scale_level(i) : m.layers[i].scale_level;
    r.depth_profile.push_back(consumes_border(m.layers[i]) ? std::ldexp(1.0, -level) : 0.0);
  }
  r.intrinsic_kop_per_pixel = ops / 1000.0;
  r.effective_kop_per_pixel = r.intrinsic_kop_per_pixel;
  return r;
}

// ---------------------------------------------------------------------------

int64_t floor_div(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

int64_t ceil_div(int64_t a, int64_t b) { return -floor_div(-a, b); }

namespace {
Interval normalized(Interval iv) {
  if (iv.hi < iv.lo) iv.hi = iv.lo;
  return iv;
}
}  // namespace

Interval forward_interval(const LayerSpec& l, Interval in) {
  if (in.empty()) return Interval{in.lo, in.lo};
  switch (l.kind) {
    case LayerKind::Conv3x3:
      if (l.pool == Pool::Stride) return normalized({ceil_div(in.lo + 1, 2), ceil_div(in.hi - 1, 2)});
      if (l.pool == Pool::Max) return normalized({ceil_div(in.lo + 1, 2), floor_div(in.hi - 1, 2)});
      return normalized({in.lo + 1, in.hi - 1});
    case LayerKind::ERModule: return normalized({in.lo + 1, in.hi - 1});
    case LayerKind::PixelUnshuffleDown2: return normalized({ceil_div(in.lo + 1, 2), ceil_div(in.hi - 1, 2)});
    case LayerKind::PixelShuffleUp2: return {2 * in.lo, 2 * in.hi};
    case LayerKind::Conv1x1:
    case LayerKind::ResidualAdd: return in;
  }
  return in;
}

Interval backward_interval(const LayerSpec& l, Interval out) {
  switch (l.kind) {
    case LayerKind::Conv3x3:
      if (l.pool == Pool::Stride) return {2 * out.lo - 1, 2 * out.hi};
      if (l.pool == Pool::Max) return {2 * out.lo - 1, 2 * out.hi + 1};
      return {out.lo - 1, out.hi + 1};
    case LayerKind::ERModule: return {out.lo - 1, out.hi + 1};
    case LayerKind::PixelUnshuffleDown2: return {2 * out.lo - 1, 2 * out.hi};
    case LayerKind::PixelShuffleUp2: return {floor_div(out.lo, 2), ceil_div(out.hi, 2)};
    case LayerKind::Conv1x1:
    case LayerKind::ResidualAdd: return out;
  }
  return out;
}

std::vector<Interval> forward_intervals(const ModelIR& m, Interval in) {
  std::vector<Interval> out;
  out.reserve(m.layers.size());
  Interval cur = in;
  for (const auto& l : m.layers) {
    cur = forward_interval(l, cur);
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<ScanCandidate> scan_models(Family family, double budget_kop_per_pixel, int x_i, int B_min, int B_max,
                                       int channels) {
  std::vector<ScanCandidate> result;
  for (int B = std::max(1, B_min); B <= B_max; ++B) {
    // NCR depends on depth only, so any expansion gives the same geometry.
    double ncr = 0;
    try {
      ncr = ncr_discrete(build_ernet(family, B, 1, 0, channels), x_i);
    } catch (const Error&) {
      continue;
    }
    for (int total = 4 * B; total >= B; --total) {
      const int R = total / B, N = total % B;
      ModelIR m = build_ernet(family, B, R, N, channels);
      ComplexityReport c = intrinsic_complexity(m);
      c.ncr = ncr;
      c.effective_kop_per_pixel = c.intrinsic_kop_per_pixel * ncr;
      if (c.effective_kop_per_pixel <= budget_kop_per_pixel) {
        result.push_back({B, R, N, static_cast<double>(total) / B, c});
        break;
      }
    }
  }
  return result;
}

std::vector<ScanCandidate> rank_candidates(std::vector<ScanCandidate> candidates, const QualityProxy& proxy) {
  QualityProxy score = proxy ? proxy : [](const ScanCandidate& c) { return c.complexity.intrinsic_kop_per_pixel; };
  std::stable_sort(candidates.begin(), candidates.end(),
                   [&](const ScanCandidate& a, const ScanCandidate& b) { return score(a) > score(b); });
  return candidates;
}

}  // namespace ecnn
