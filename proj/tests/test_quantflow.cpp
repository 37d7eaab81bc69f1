// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ecnn/oracle.hpp"
#include "ecnn/quantflow.hpp"
#include "ecnn/toolchain.hpp"

using namespace ecnn;

namespace {

ModelIR two_conv() {
  ModelIR m;
  m.name = "two-conv";
  m.layers.push_back({LayerKind::Conv3x3, 3, 32, 1, 0, Activation::ReLU});
  m.layers.push_back({LayerKind::Conv3x3, 32, 3, 1, 0});
  validate_model(m);
  return m;
}

}  // namespace

TEST_CASE("features of a zero-weight model are its biases") {
  const ModelIR m = two_conv();
  ModelWeights w = zero_weights(m);
  std::fill(w.layers[0].b.begin(), w.layers[0].b.end(), 0.25f);
  for (int c = 0; c < 3; ++c) w.layers[1].b[c] = -0.5f + 0.5f * c;
  const auto samples = synthetic_frames(2, 8, 6, 3, 1);
  const ModelStats s = collect_stats(m, w, samples);
  REQUIRE(s.layers.size() == 2);
  CHECK(s.input.size() == 2u * 8 * 6 * 3);
  CHECK(s.layers[0].out.size() == 2u * 8 * 6 * 32);
  for (double v : s.layers[0].out) REQUIRE(v == 0.25);
  CHECK(s.layers[1].out.front() == -0.5);
  CHECK(s.layers[1].out.back() == 0.5);
  CHECK(std::count(s.layers[1].out.begin(), s.layers[1].out.end(), 0.0) == 8 * 6 * 2);
  CHECK(std::is_sorted(s.layers[0].w.begin(), s.layers[0].w.end()));
}

TEST_CASE("statistics do not depend on sample order") {
  const ModelIR m = build_ernet(Family::Dn, 2, 1, 1);
  const ModelWeights w = random_weights(m, 4);
  auto samples = synthetic_frames(3, 16, 12, 3, 2);
  const ModelStats a = collect_stats(m, w, samples);
  std::reverse(samples.begin(), samples.end());
  const ModelStats b = collect_stats(m, w, samples);
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    CHECK(a.layers[i].out == b.layers[i].out);
    CHECK(a.layers[i].mid == b.layers[i].mid);
  }
}

TEST_CASE("float inference") {
  const ModelIR m = two_conv();
  ModelWeights w = zero_weights(m);
  // layer 0 copies channel c into channel c, layer 1 copies back with a sign flip
  for (int c = 0; c < 3; ++c) {
    w.layers[0].w[(static_cast<std::size_t>(c) * 3 + c) * 9 + 4] = 1.0f;
    w.layers[1].w[(static_cast<std::size_t>(c) * 32 + c) * 9 + 4] = -1.0f;
  }
  const FloatTensor x = synthetic_frames(1, 9, 7, 3, 3)[0];
  int taps = 0;
  const FloatTensor y = float_forward(m, w, x, [&](std::size_t, const FloatTensor&) { ++taps; });
  CHECK(taps == 2);
  REQUIRE(y.data.size() == x.data.size());
  for (std::size_t i = 0; i < y.data.size(); ++i) CHECK(y.data[i] == -x.data[i]);

  // a 3x3 box filter on a constant image keeps the constant at the borders
  ModelWeights box = zero_weights(m);
  for (int t = 0; t < 9; ++t) box.layers[0].w[t] = 1.0f / 9;
  box.layers[1].w[4] = 1.0f;
  FloatTensor flat(5, 5, 3, 0.5f);
  const FloatTensor z = float_forward(m, box, flat);
  for (int yy = 0; yy < 5; ++yy)
    for (int xx = 0; xx < 5; ++xx) CHECK(z.at(xx, yy, 0) == doctest::Approx(0.5f));
}

TEST_CASE("format assignment without a budget keeps 8-bit weights") {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const ModelWeights w = random_weights(m, 5);
  const ModelStats s = collect_stats(m, w, synthetic_frames(2, 24, 24, 3, 6));
  const QuantPlan p = assign_formats(m, s, Norm::L2);
  CHECK(p.demoted.empty());
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    if (m.layers[i].kind == LayerKind::ResidualAdd) continue;
    CHECK(p.formats[i].w.width == 8);
    CHECK(p.formats[i].w.is_signed);
    if (m.layers[i].kind == LayerKind::ERModule) CHECK(p.formats[i].mid.has_value());
  }
  for (auto [src, add] : m.residual_links()) {
    CHECK(p.formats[static_cast<std::size_t>(src)].out == p.formats[static_cast<std::size_t>(add)].out);
    CHECK(p.formats[static_cast<std::size_t>(add)].out == p.formats[static_cast<std::size_t>(add) - 1].out);
  }
  // quantize_model accepts the plan as is
  CHECK_NOTHROW(check_quantized(quantize_model(m, w, p.formats)));
  CHECK(assign_formats(m, s, Norm::L2).formats == p.formats);
  const QuantPlan l1 = assign_formats(m, s, Norm::L1);
  CHECK(l1.norm == Norm::L1);
}

TEST_CASE("tight budgets demote weight groups to 7 bits") {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const ModelWeights w = random_weights(m, 7);
  const ModelStats s = collect_stats(m, w, synthetic_frames(2, 24, 24, 3, 8));
  const SizeOracle size = compiled_size_oracle(m, w, UQ(8), MachineConfig{});
  const QuantPlan full = assign_formats(m, s, Norm::L2, UQ(8), size, UINT64_MAX);
  CHECK(full.demoted.empty());
  REQUIRE(full.param_bytes > 0);
  CHECK(full.param_bytes == size(full.formats));

  const QuantPlan tight = assign_formats(m, s, Norm::L2, UQ(8), size, full.param_bytes - 1);
  CHECK_FALSE(tight.demoted.empty());
  CHECK(tight.param_bytes <= full.param_bytes - 1);
  for (std::size_t i : tight.demoted) CHECK(tight.formats[i].w.width == 7);

  CHECK_THROWS_AS(assign_formats(m, s, Norm::L2, UQ(8), size, 1000), Error);
}

TEST_CASE("quantized inference tracks float inference") {
  const ModelIR m = build_ernet(Family::Dn, 3, 1, 0);
  const ModelWeights w = random_weights(m, 9);
  const auto samples = synthetic_frames(2, 32, 32, 3, 10);
  const Build b = build(m, w, samples);
  const FloatTensor test = synthetic_frames(1, 40, 40, 3, 11)[0];
  const Feature q = oracle_frame(b.model, to_feature(test, UQ(8)));
  const FloatTensor ref = float_forward(m, w, to_float(to_feature(test, UQ(8))));
  const FloatTensor got = to_float(q);
  REQUIRE(got.data.size() == ref.data.size());
  double err = 0, energy = 0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    err += std::pow(got.data[i] - ref.data[i], 2);
    energy += std::pow(ref.data[i], 2);
  }
  // within 10% RMS of the float result
  CHECK(std::sqrt(err / energy) < 0.1);
}
