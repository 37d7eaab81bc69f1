// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ecnn/fixedpoint.hpp"

namespace ecnn {

enum class Family { SR2, SR4, Dn, Dn12ch, Custom };
enum class LayerKind { Conv3x3, Conv1x1, ERModule, PixelShuffleUp2, PixelUnshuffleDown2, ResidualAdd };
enum class Activation { None, ReLU };
enum class Pool { None, Stride, Max };

std::string to_string(Family f);
std::string to_string(LayerKind k);
std::string to_string(Pool p);
Family parse_family(const std::string& s);
LayerKind parse_layer_kind(const std::string& s);
Pool parse_pool(const std::string& s);

inline constexpr int kHwChannels = 32;
inline int padded_channels(int ch) { return (ch + kHwChannels - 1) / kHwChannels * kHwChannels; }

struct LayerSpec {
  LayerKind kind = LayerKind::Conv3x3;
  int in_ch = 0;
  int out_ch = 0;
  int expand = 1;       // ERModule: internal width is expand * in_ch
  int scale_level = 0;  // log2 resolution of this layer's output, relative to the model input
  Activation act = Activation::None;  // ERModule: applies after the 3x3 expansion
  Pool pool = Pool::None;  // Conv3x3 only: 2x downsampling applied to the conv output
  int skip_from = -1;      // ResidualAdd: index of the layer whose output is added

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct ModelIR {
  std::string name;
  Family family = Family::Custom;
  int B = 0, R = 0, N = 0;
  int channels = kHwChannels;
  std::vector<LayerSpec> layers;

  int input_channels() const { return layers.empty() ? 0 : layers.front().in_ch; }
  int output_channels() const { return layers.empty() ? 0 : layers.back().out_ch; }
  int output_scale_level() const { return layers.empty() ? 0 : layers.back().scale_level; }
  int input_scale_level(std::size_t layer) const;
  // (skip source layer, layer whose result receives the addition)
  std::vector<std::pair<int, int>> residual_links() const;
  // Mean R_m over the ERModules.
  double expansion_ratio() const;
};

std::string ernet_name(Family f, int B, int R, int N);

// Head conv, B ERModules (first N at R+1), trunk conv with a residual from
// the head, family-specific upsamplers and tail.
ModelIR build_ernet(Family family, int B, int R, int N, int channels = kHwChannels);

// D plain Conv3x3 layers of uniform width, for the analytic comparisons.
ModelIR build_plain(int depth, int channels = kHwChannels);

// Structural checks: channel chaining, strata, residual compatibility.
void validate_model(const ModelIR& m);

// Layers [begin, end) as a standalone model. Residual links must not cross
// the cut.
ModelIR slice_model(const ModelIR& m, std::size_t begin, std::size_t end);
ModelIR concat_models(const ModelIR& a, const ModelIR& b);

// ---------------------------------------------------------------------------
// Complexity accounting

enum class CountMode { Model, Hardware };

struct ComplexityReport {
  double intrinsic_kop_per_pixel = 0;
  double effective_kop_per_pixel = 0;
  double ncr = 1;
  int64_t param_count = 0;
  // Border consumed by each layer, in model-input pixels per side.
  std::vector<double> depth_profile;
};

// Operations (MAC = 2) per pixel of the layer's computation grid.
double layer_ops_per_pixel(const LayerSpec& l, CountMode mode);
// Area of the computation grid relative to the model input grid.
double layer_compute_area(const ModelIR& m, std::size_t layer);
int64_t layer_param_count(const LayerSpec& l);

ComplexityReport intrinsic_complexity(const ModelIR& m, CountMode mode = CountMode::Model);

// ---------------------------------------------------------------------------
// Interval geometry. Positions are absolute pixel indices in each layer's
// own resolution; a 3x3 output pixel is centred on the input pixel with the
// same index.

struct Interval {
  int64_t lo = 0, hi = 0;
  int64_t size() const { return hi > lo ? hi - lo : 0; }
  bool empty() const { return hi <= lo; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

int64_t floor_div(int64_t a, int64_t b);
int64_t ceil_div(int64_t a, int64_t b);

// Valid output region of a layer under truncated inference, as executed by
// the hardware (pixel unshuffle runs as a strided delta convolution).
Interval forward_interval(const LayerSpec& l, Interval in);
// Input region a layer needs to produce `out`.
Interval backward_interval(const LayerSpec& l, Interval out);
// Per-layer valid output intervals starting from `in` at the model input.
std::vector<Interval> forward_intervals(const ModelIR& m, Interval in);

// ---------------------------------------------------------------------------
// Constraint-driven scanning

struct ScanCandidate {
  int B = 0, R = 0, N = 0;
  double R_E = 0;
  ComplexityReport complexity;
};

using QualityProxy = std::function<double(const ScanCandidate&)>;

// For each B in [B_min, B_max], the largest R_E <= 4 whose effective
// complexity at block size x_i stays within the budget.
std::vector<ScanCandidate> scan_models(Family family, double budget_kop_per_pixel, int x_i, int B_min,
                                       int B_max, int channels = kHwChannels);

// Orders candidates by a quality proxy (higher first). The default proxy is
// the intrinsic complexity.
std::vector<ScanCandidate> rank_candidates(std::vector<ScanCandidate> candidates,
                                           const QualityProxy& proxy = {});

}  // namespace ecnn
