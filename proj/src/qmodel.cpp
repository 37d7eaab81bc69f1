// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/qmodel.hpp"

#include <cmath>
#include <random>

namespace ecnn {

std::size_t expected_weight_count(const LayerSpec& l) {
  const std::size_t in = l.in_ch, out = l.out_ch;
  switch (l.kind) {
    case LayerKind::Conv3x3: return out * in * 9;
    case LayerKind::Conv1x1: return out * in;
    case LayerKind::ERModule: return in * l.expand * in * 9;
    default: return 0;
  }
}

std::size_t expected_weight2_count(const LayerSpec& l) {
  return l.kind == LayerKind::ERModule ? static_cast<std::size_t>(l.out_ch) * l.in_ch * l.expand : 0;
}

std::size_t expected_bias_count(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv3x3:
    case LayerKind::Conv1x1: return l.out_ch;
    case LayerKind::ERModule: return static_cast<std::size_t>(l.in_ch) * l.expand;
    default: return 0;
  }
}

std::size_t expected_bias2_count(const LayerSpec& l) {
  return l.kind == LayerKind::ERModule ? static_cast<std::size_t>(l.out_ch) : 0;
}

ModelWeights zero_weights(const ModelIR& m) {
  ModelWeights w;
  for (const auto& l : m.layers) {
    LayerWeights lw;
    lw.w.assign(expected_weight_count(l), 0.f);
    lw.b.assign(expected_bias_count(l), 0.f);
    lw.w2.assign(expected_weight2_count(l), 0.f);
    lw.b2.assign(expected_bias2_count(l), 0.f);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

ModelWeights random_weights(const ModelIR& m, uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelWeights w = zero_weights(m);
  auto fill = [&](std::vector<float>& v, double stddev) {
    std::normal_distribution<double> d(0.0, stddev);
    for (float& x : v) x = static_cast<float>(d(rng));
  };
  auto fill_bias = [&](std::vector<float>& v) {
    std::uniform_real_distribution<double> d(-0.05, 0.05);
    for (float& x : v) x = static_cast<float>(d(rng));
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    LayerWeights& lw = w.layers[i];
    switch (l.kind) {
      case LayerKind::Conv3x3: fill(lw.w, std::sqrt(1.0 / (9.0 * l.in_ch))); break;
      case LayerKind::Conv1x1: fill(lw.w, std::sqrt(1.0 / l.in_ch)); break;
      case LayerKind::ERModule:
        fill(lw.w, std::sqrt(2.0 / (9.0 * l.in_ch)));
        fill(lw.w2, 0.5 * std::sqrt(1.0 / (l.in_ch * l.expand)));
        break;
      default: break;
    }
    fill_bias(lw.b);
    fill_bias(lw.b2);
  }
  return w;
}

void check_weights(const ModelIR& m, const ModelWeights& w) {
  if (w.layers.size() != m.layers.size()) throw Error("weights: layer count differs from the model");
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const LayerWeights& lw = w.layers[i];
    if (lw.w.size() != expected_weight_count(l) || lw.b.size() != expected_bias_count(l) ||
        lw.w2.size() != expected_weight2_count(l) || lw.b2.size() != expected_bias2_count(l))
      throw Error("weights: layer " + std::to_string(i) + " has wrong parameter counts");
  }
}

namespace {

std::vector<int16_t> quantize_all(const std::vector<float>& v, QFormat f) {
  std::vector<int16_t> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<int16_t>(quantize_code(v[i], f));
  return out;
}

std::vector<float> dequantize_all(const std::vector<int16_t>& v, QFormat f) {
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i] * f.step());
  return out;
}

bool in_range(const std::vector<int16_t>& v, QFormat f) {
  for (int16_t c : v)
    if (c < f.min_code() || c > f.max_code()) return false;
  return true;
}

}  // namespace

QuantizedModel quantize_model(const ModelIR& m, const ModelWeights& w, const std::vector<LayerFormats>& formats,
                              QFormat input_fmt) {
  check_weights(m, w);
  if (formats.size() != m.layers.size()) throw Error("quantize_model: one format set per layer required");
  QuantizedModel q;
  q.model = m;
  q.input_fmt = input_fmt;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    QuantLayer ql;
    ql.fmt = formats[i];
    ql.w = quantize_all(w.layers[i].w, ql.fmt.w);
    ql.b = quantize_all(w.layers[i].b, ql.fmt.b);
    ql.w2 = quantize_all(w.layers[i].w2, ql.fmt.w);
    ql.b2 = quantize_all(w.layers[i].b2, ql.fmt.b);
    q.layers.push_back(std::move(ql));
  }
  check_quantized(q);
  return q;
}

void check_quantized(const QuantizedModel& q) {
  const ModelIR& m = q.model;
  validate_model(m);
  if (q.layers.size() != m.layers.size()) throw Error("quantized model: layer count differs");
  auto fail = [&](std::size_t i, const std::string& what) {
    throw Error(m.name + ": layer " + std::to_string(i) + " (" + to_string(m.layers[i].kind) + "): " + what);
  };
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const QuantLayer& ql = q.layers[i];
    const LayerFormats& f = ql.fmt;
    const QFormat in = i == 0 ? q.input_fmt : q.layers[i - 1].fmt.out;
    if (ql.w.size() != expected_weight_count(l) || ql.b.size() != expected_bias_count(l) ||
        ql.w2.size() != expected_weight2_count(l) || ql.b2.size() != expected_bias2_count(l))
      fail(i, "parameter counts do not match the layer");
    if (!in_range(ql.w, f.w) || !in_range(ql.w2, f.w)) fail(i, "weight code outside " + f.w.to_string());
    if (!in_range(ql.b, f.b) || !in_range(ql.b2, f.b)) fail(i, "bias code outside " + f.b.to_string());
    if (f.out.width != 8) fail(i, "feature formats are 8-bit");
    switch (l.kind) {
      case LayerKind::Conv3x3:
      case LayerKind::Conv1x1:
        if (f.b.frac_bits > f.w.frac_bits + in.frac_bits) fail(i, "bias format needs a right shift");
        if (l.in_ch > kHwChannels && !f.mid) fail(i, "wide convolution needs a partial-sum format");
        if (f.mid && !f.mid->is_signed) fail(i, "partial sums need a signed format");
        if (l.act == Activation::ReLU && f.out.is_signed) fail(i, "ReLU output needs an unsigned format");
        if (i + 1 < m.layers.size() && m.layers[i + 1].kind == LayerKind::ResidualAdd &&
            f.out != q.layers[i + 1].fmt.out)
          fail(i, "output format must match the residual join");
        break;
      case LayerKind::ERModule:
        if (!f.mid) fail(i, "ERModule needs an intermediate format");
        if (f.mid->width != 8) fail(i, "intermediate format must be 8-bit");
        if ((l.act == Activation::ReLU) == f.mid->is_signed) fail(i, "intermediate signedness must follow the activation");
        if (f.b.frac_bits > f.w.frac_bits + in.frac_bits || f.b.frac_bits > f.w.frac_bits + f.mid->frac_bits)
          fail(i, "bias format needs a right shift");
        break;
      case LayerKind::PixelShuffleUp2:
      case LayerKind::PixelUnshuffleDown2:
        if (f.out != in) fail(i, "rearrangement layers keep their input format");
        break;
      case LayerKind::ResidualAdd:
        if (f.out != q.layers[l.skip_from].fmt.out) fail(i, "join format must equal the skip source format");
        break;
    }
  }
}

ModelWeights dequantize(const QuantizedModel& q) {
  ModelWeights w;
  for (const QuantLayer& ql : q.layers) {
    LayerWeights lw;
    lw.w = dequantize_all(ql.w, ql.fmt.w);
    lw.b = dequantize_all(ql.b, ql.fmt.b);
    lw.w2 = dequantize_all(ql.w2, ql.fmt.w);
    lw.b2 = dequantize_all(ql.b2, ql.fmt.b);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

}  // namespace ecnn
