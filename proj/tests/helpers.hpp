// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ecnn/compiler.hpp"
#include "ecnn/paramcodec.hpp"
#include "ecnn/qmodel.hpp"
#include "ecnn/tensor.hpp"

namespace ecnn::testing {

// Hand-picked formats that keep random-weight activations in range.
inline std::vector<LayerFormats> simple_formats(const ModelIR& m) {
  std::vector<LayerFormats> f(m.layers.size());
  QFormat prev = UQ(8);
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    if (l.kind == LayerKind::PixelShuffleUp2 || l.kind == LayerKind::PixelUnshuffleDown2)
      f[i].out = prev;
    else
      f[i].out = (l.act == Activation::ReLU && l.kind != LayerKind::ERModule) ? UQ(4) : Q(4);
    if (l.kind == LayerKind::ERModule) f[i].mid = UQ(4);
    if (l.in_ch > kHwChannels) f[i].mid = Q(4);
    if (l.kind == LayerKind::ResidualAdd) f[i].out = f[static_cast<std::size_t>(l.skip_from)].out;
    prev = f[i].out;
  }
  return f;
}

inline Feature random_frame(int w, int h, int c, uint32_t seed, QFormat fmt = UQ(8)) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(fmt.min_code(), fmt.max_code());
  Feature f;
  f.fmt = fmt;
  f.codes = CodeTensor(w, h, c);
  for (auto& v : f.codes.data) v = static_cast<int16_t>(d(rng));
  return f;
}

struct Linked {
  QuantizedModel q;
  CompileResult compiled;
  EncodeResult encoded;
};

inline Linked compile_linked(const ModelIR& m, uint64_t seed, int x_i = 128) {
  Linked r;
  r.q = quantize_model(m, random_weights(m, seed), simple_formats(m));
  MachineConfig mc;
  mc.x_i = x_i;
  r.compiled = compile(r.q, mc);
  r.encoded = encode_params(r.compiled.layout);
  link_params(r.compiled.program, r.compiled.layout, r.encoded.segment_addr);
  return r;
}

// Laplacian codes with scale `sigma`, clipped to `width` bits.
inline int16_t laplace_code(std::mt19937_64& rng, double sigma, int width = 8) {
  std::exponential_distribution<double> e(1.0 / sigma);
  const double v = std::round((rng() & 1 ? 1 : -1) * e(rng));
  const double lim = static_cast<double>((1 << (width - 1)) - 1);
  return static_cast<int16_t>(std::clamp(v, -lim - 1, lim));
}

// Random segments shaped like compiled ones: 1-4 leaves, ER segments with
// 1x1 weights and 64 biases on the first leaf.
inline ParamLayout random_layout(std::mt19937_64& rng, double sigma, int max_segments = 6) {
  ParamLayout l;
  const int n = 1 + static_cast<int>(rng() % static_cast<uint64_t>(max_segments));
  for (int s = 0; s < n; ++s) {
    ParamSegment seg;
    seg.has_1x1 = rng() % 2 == 0;
    const int leaves = 1 + static_cast<int>(rng() % 4);
    const int width = rng() % 4 == 0 ? 7 : 8;
    for (int k = 0; k < leaves; ++k) {
      LeafParams p;
      p.w3.resize(kLeafW3);
      for (auto& v : p.w3) v = laplace_code(rng, sigma, width);
      if (seg.has_1x1) {
        p.w1.resize(kLeafW1);
        for (auto& v : p.w1) v = laplace_code(rng, sigma, width);
      }
      p.bias.resize(seg.has_1x1 && k == 0 ? 64 : 32);
      for (auto& v : p.bias) v = laplace_code(rng, 4 * sigma);
      seg.leaves.push_back(std::move(p));
    }
    l.segments.push_back(std::move(seg));
    l.instr_segment.push_back(l.segments.size() - 1);
  }
  return l;
}

inline std::size_t count_differences(const Feature& a, const Feature& b) {
  if (a.codes.data.size() != b.codes.data.size()) return a.codes.data.size() + b.codes.data.size();
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.codes.data.size(); ++i) n += a.codes.data[i] != b.codes.data[i];
  return n;
}

}  // namespace ecnn::testing
