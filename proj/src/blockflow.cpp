// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/blockflow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace ecnn {

namespace {

void check_plain_args(int D, int x_i) {
  if (D < 0 || x_i <= 0) throw Error("depth and block size must be non-negative and positive");
  if (2 * D >= x_i) throw Error("block of " + std::to_string(x_i) + " pixels has no valid output at depth " +
                                std::to_string(D));
}

// Output-level coordinate to model-input coordinate (exact for aligned values).
int64_t to_input_units(int64_t v, int level) { return level >= 0 ? floor_div(v, int64_t{1} << level) : v << -level; }

int64_t level_scaled(int64_t v, int level) { return level >= 0 ? v << level : v >> -level; }

}  // namespace

double nbr_plain(int D, int x_i) {
  check_plain_args(D, x_i);
  // integer form of 1 + 1/(1-2b)^2 with b = D/x_i, one rounding
  const int64_t n = x_i - 2 * int64_t{D};
  return static_cast<double>(n * n + int64_t{x_i} * x_i) / static_cast<double>(n * n);
}

double ncr_plain(int D, int x_i) {
  check_plain_args(D, x_i);
  // 1/3 + (2/3)(1-b)/(1-2b)^2
  const int64_t n = x_i - 2 * int64_t{D};
  return static_cast<double>(n * n + 2 * int64_t{x_i} * (x_i - D)) / static_cast<double>(3 * n * n);
}

double frame_bandwidth(double H, double W, double C, double D, double fps, double L_bits) {
  if (D <= 1) return 0.0;
  return H * W * C * (D - 1) * fps * L_bits * 2.0 / 8.0;
}

int conv_depth(const ModelIR& m) {
  int d = 0;
  for (const auto& l : m.layers)
    if (l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::ERModule || l.kind == LayerKind::PixelUnshuffleDown2) ++d;
  return d;
}

BlockGeometry block_geometry(const ModelIR& m, int x_i) {
  if (x_i <= 0) throw Error("block size must be positive");
  BlockGeometry g;
  g.x_i = x_i;
  g.layer_intervals = forward_intervals(m, Interval{0, x_i});
  g.out_level = m.output_scale_level();
  g.out_valid = g.layer_intervals.back();
  if (g.out_valid.empty())
    throw Error(m.name + ": no valid output pixels for " + std::to_string(x_i) + "-pixel blocks");

  // Downsampling layers need their input grid aligned to even positions.
  int64_t input_align = 1;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const bool down = l.kind == LayerKind::PixelUnshuffleDown2 || (l.kind == LayerKind::Conv3x3 && l.pool != Pool::None);
    if (!down) continue;
    const int s_in = m.input_scale_level(i);
    if (1 - s_in > 0) input_align = std::max<int64_t>(input_align, int64_t{1} << (1 - s_in));
  }
  const int L = g.out_level;
  g.align = L >= 0 ? input_align << L : std::max<int64_t>(1, input_align >> -L);
  g.out_start = ceil_div(g.out_valid.lo, g.align) * g.align;
  const int64_t x_o = floor_div(g.out_valid.hi - g.out_start, g.align) * g.align;
  if (x_o <= 0)
    throw Error(m.name + ": no aligned output pixels for " + std::to_string(x_i) + "-pixel blocks");
  g.x_o = static_cast<int>(x_o);
  return g;
}

double ncr_discrete(const ModelIR& m, int x_i) {
  const BlockGeometry g = block_geometry(m, x_i);
  const double out_area = std::ldexp(1.0, 2 * m.output_scale_level());
  const double e_out = static_cast<double>(g.out_valid.size());
  double block_ops = 0, frame_ops = 0;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    const LayerSpec& l = m.layers[i];
    const double ops = layer_ops_per_pixel(l, CountMode::Model);
    if (ops == 0) continue;
    double extent = static_cast<double>(g.layer_intervals[i].size());
    if (l.kind == LayerKind::Conv3x3 || l.kind == LayerKind::PixelUnshuffleDown2) {
      const Interval in = i == 0 ? Interval{0, x_i} : g.layer_intervals[i - 1];
      extent = static_cast<double>(std::max<int64_t>(0, in.size() - 2));
    }
    block_ops += ops * extent * extent;
    frame_ops += ops * e_out * e_out * layer_compute_area(m, i) / out_area;
  }
  if (frame_ops == 0) return 1.0;
  return block_ops / frame_ops;
}

BlockRect BlockPlan::rect(int col, int row) const {
  if (col < 0 || col >= cols || row < 0 || row >= rows) throw Error("block index outside the grid");
  BlockRect r;
  r.col = col;
  r.row = row;
  r.out_x = int64_t{col} * geom.x_o;
  r.out_y = int64_t{row} * geom.x_o;
  r.out_w = std::min<int64_t>(geom.x_o, out_w - r.out_x);
  r.out_h = std::min<int64_t>(geom.x_o, out_h - r.out_y);
  r.in_x = to_input_units(r.out_x - geom.out_start, geom.out_level);
  r.in_y = to_input_units(r.out_y - geom.out_start, geom.out_level);
  return r;
}

BlockPlan plan_blocks(const ModelIR& m, int frame_w, int frame_h, int x_i) {
  if (frame_w <= 0 || frame_h <= 0) throw Error("frame dimensions must be positive");
  if (x_i > kMaxBlockSide)
    throw Error("block size " + std::to_string(x_i) + " exceeds the " + std::to_string(kMaxBlockSide) +
                "-pixel block buffer");
  BlockPlan p;
  p.model_name = m.name;
  p.frame_w = frame_w;
  p.frame_h = frame_h;
  p.geom = block_geometry(m, x_i);
  const int L = p.geom.out_level;
  if (L < 0 && (frame_w % (1 << -L) != 0 || frame_h % (1 << -L) != 0))
    throw Error("frame size must be divisible by the model's downsampling factor");
  p.out_w = static_cast<int>(level_scaled(frame_w, L));
  p.out_h = static_cast<int>(level_scaled(frame_h, L));
  p.cols = static_cast<int>(ceil_div(p.out_w, p.geom.x_o));
  p.rows = static_cast<int>(ceil_div(p.out_h, p.geom.x_o));
  for (const Interval& iv : p.geom.layer_intervals)
    p.extents.emplace_back(static_cast<int>(iv.size()), static_cast<int>(iv.size()));
  return p;
}

namespace {

Interval needed_input(const ModelIR& m, Interval out) {
  for (std::size_t i = m.layers.size(); i-- > 0;) out = backward_interval(m.layers[i], out);
  return out;
}

int64_t clipped(Interval iv, int64_t origin, int64_t size) {
  const int64_t lo = std::max<int64_t>(0, origin + iv.lo);
  const int64_t hi = std::min<int64_t>(size, origin + iv.hi);
  return std::max<int64_t>(0, hi - lo);
}

}  // namespace

BandwidthReport block_bandwidth(const ModelIR& m, const BlockPlan& plan, double fps, double bytes_per_pixel_in,
                                double bytes_per_pixel_out) {
  BandwidthReport r;
  const int64_t start = plan.geom.out_start;
  for (int row = 0; row < plan.rows; ++row) {
    for (int col = 0; col < plan.cols; ++col) {
      const BlockRect b = plan.rect(col, row);
      const Interval nx = needed_input(m, Interval{start, start + b.out_w});
      const Interval ny = needed_input(m, Interval{start, start + b.out_h});
      const double in_px = static_cast<double>(clipped(nx, b.in_x, plan.frame_w)) *
                           static_cast<double>(clipped(ny, b.in_y, plan.frame_h));
      r.input_bytes_per_frame += in_px * bytes_per_pixel_in;
      r.output_bytes_per_frame += static_cast<double>(b.out_w * b.out_h) * bytes_per_pixel_out;
    }
  }
  const double total = r.input_bytes_per_frame + r.output_bytes_per_frame;
  r.nbr = total / r.output_bytes_per_frame;
  r.gb_per_s = total * fps / 1e9;
  return r;
}

SplitReport split_analysis(const ModelIR& m, std::size_t cut, int frame_w, int frame_h, int x_i, double fps,
                           double bytes_per_pixel_io, int feature_bits) {
  if (cut == 0 || cut >= m.layers.size()) throw Error("split_analysis: cut must fall inside the model");
  const ModelIR a = slice_model(m, 0, cut);
  const ModelIR b = slice_model(m, cut, m.layers.size());
  SplitReport s;
  s.ncr_whole = ncr_discrete(m, x_i);
  const double ncr_a = ncr_discrete(a, x_i), ncr_b = ncr_discrete(b, x_i);
  // Intrinsic ops per final output pixel of each part.
  const double scale_a = std::ldexp(1.0, 2 * (a.output_scale_level() - m.output_scale_level()));
  const double ops_a = intrinsic_complexity(a).intrinsic_kop_per_pixel * scale_a;
  const double ops_b = intrinsic_complexity(b).intrinsic_kop_per_pixel;
  s.ncr_split = (ncr_a * ops_a + ncr_b * ops_b) / (ops_a + ops_b);

  const BlockPlan pw = plan_blocks(m, frame_w, frame_h, x_i);
  s.whole = block_bandwidth(m, pw, fps, bytes_per_pixel_io, bytes_per_pixel_io);

  const BlockPlan pa = plan_blocks(a, frame_w, frame_h, x_i);
  const BlockPlan pb = plan_blocks(b, pa.out_w, pa.out_h, x_i);
  const BandwidthReport ra = block_bandwidth(a, pa, fps, bytes_per_pixel_io, 0);
  const BandwidthReport rb = block_bandwidth(b, pb, fps, 0, bytes_per_pixel_io);
  const int C = padded_channels(a.output_channels());
  s.intermediate_bytes_per_frame = 2.0 * C * feature_bits / 8.0 * static_cast<double>(pa.out_w) * pa.out_h;
  s.split.input_bytes_per_frame = ra.input_bytes_per_frame;
  s.split.output_bytes_per_frame = rb.output_bytes_per_frame;
  const double total = s.split.input_bytes_per_frame + s.split.output_bytes_per_frame + s.intermediate_bytes_per_frame;
  s.split.nbr = total / s.split.output_bytes_per_frame;
  s.split.gb_per_s = total * fps / 1e9;
  return s;
}

std::string analysis_csv_header() { return "model,x_i,D,NCR,NBR,GB/s,KOP/pixel"; }

std::string analysis_csv_row(const AnalysisRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%d,%d,%.4f,%.4f,%.4f,%.3f", r.x_i, r.depth, r.ncr, r.nbr, r.gb_per_s,
                r.kop_per_pixel);
  return r.model + buf;
}

}  // namespace ecnn
