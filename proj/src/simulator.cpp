// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace ecnn {

namespace {

struct Buffer {
  bool written = false;
  Rect content;     // local coordinates
  CodeTensor data;  // covers [0, content end), 32 channels
  QFormat fmt;
};

// Padded (w+2) x (h+2) source plane around conv outputs; pixels outside
// the written region read as zero.
std::vector<int16_t> gather_plane(const Buffer& b, int64_t x0, int64_t y0, int w, int h) {
  std::vector<int16_t> plane(static_cast<std::size_t>(w + 2) * (h + 2) * 32, 0);
  const Rect& c = b.content;
  for (int y = 0; y < h + 2; ++y) {
    const int64_t sy = y0 - 1 + y;
    if (sy < c.y || sy >= c.y + c.h) continue;
    const int64_t sx0 = std::max<int64_t>(x0 - 1, c.x), sx1 = std::min<int64_t>(x0 - 1 + w + 2, c.x + c.w);
    if (sx1 <= sx0) continue;
    const int16_t* src = b.data.pixel(static_cast<int>(sx0), static_cast<int>(sy));
    std::copy(src, src + (sx1 - sx0) * 32,
              plane.begin() + (static_cast<std::ptrdiff_t>(y) * (w + 2) + (sx0 - (x0 - 1))) * 32);
  }
  return plane;
}

int64_t aligned_bias(int16_t b, QFormat qb, int scale) { return align_exact(b, qb.frac_bits, scale); }

}  // namespace

Machine::Machine(Program p, const ParamContainer& params, const KernelSet* kernels)
    : program_(std::move(p)), kernels_(kernels ? kernels : &active_kernels()) {
  geometry_ = trace_geometry(program_, program_.config.x_i, program_.config.x_i);
  if (!geometry_.diags.empty()) {
    std::string msg = "program rejected:";
    for (const auto& d : geometry_.diags) msg += "\n  " + format_diagnostic(d);
    throw Error(msg);
  }
  for (const Instruction& ins : program_.instrs) {
    if (params_.count(ins.param)) continue;
    std::vector<PackedLeaf> leaves;
    for (const LeafParams& l : decode_segment(params, ins.param)) {
      PackedLeaf pl;
      pl.w3 = pack_3x3(l.w3.data());
      if (!l.w1.empty()) pl.w1 = pack_1x1(l.w1.data());
      pl.bias = l.bias;
      leaves.push_back(std::move(pl));
    }
    params_[ins.param] = std::move(leaves);
  }
  for (const Instruction& ins : program_.instrs) {
    const auto& leaves = params_.at(ins.param);
    if (static_cast<int>(leaves.size()) < ins.lm)
      throw Error("parameter segment @" + std::to_string(ins.param) + " holds fewer leaf-modules than lm=" +
                  std::to_string(ins.lm));
    if (ins.op == Opcode::ER && (leaves.front().w1.empty() || leaves.front().bias.size() < 64))
      throw Error("parameter segment @" + std::to_string(ins.param) + " lacks ER 1x1 parameters");
  }
}

BlockResult Machine::run_block(const Feature& input) const {
  const int xi = program_.config.x_i;
  if (input.codes.w != xi || input.codes.h != xi || input.codes.c > 32)
    throw Error("block input must be " + std::to_string(xi) + "x" + std::to_string(xi) + " with at most 32 channels");
  if (input.fmt != program_.input_fmt) throw Error("block input format differs from the program's input format");

  Buffer bufs[5];
  Buffer& di = bufs[static_cast<int>(BufferId::DI)];
  di.written = true;
  di.content = Rect{0, 0, xi, xi};
  di.fmt = input.fmt;
  di.data = CodeTensor(xi, xi, 32);
  for (int y = 0; y < xi; ++y)
    for (int x = 0; x < xi; ++x)
      std::copy(input.codes.pixel(x, y), input.codes.pixel(x, y) + input.codes.c, di.data.pixel(x, y));

  const BufferState& fd = geometry_.final_do;
  Buffer& dout = bufs[static_cast<int>(BufferId::DO)];
  dout.content = fd.content;
  dout.fmt = fd.fmt;
  dout.data = CodeTensor(static_cast<int>(fd.content.x + fd.content.w), static_cast<int>(fd.content.y + fd.content.h), 32);

  for (std::size_t i = 0; i < program_.instrs.size(); ++i) {
    const Instruction& ins = program_.instrs[i];
    const InstrGeometry& g = geometry_.instrs[i];
    const Buffer& src = bufs[static_cast<int>(ins.src.id)];
    const auto& leaves = params_.at(ins.param);
    const int ew = static_cast<int>(g.conv.w), eh = static_cast<int>(g.conv.h);
    const int64_t shift = ins.type == InferType::ZeroPadded ? 0 : 1;
    const std::vector<int16_t> plane = gather_plane(src, ins.src.off_x + shift, ins.src.off_y + shift, ew, eh);
    const std::size_t npx = static_cast<std::size_t>(ew) * eh;

    const BufferRef dref = ins.dst ? *ins.dst : *ins.dstS;
    const QFormat out_fmt = ins.dstS ? *ins.qs : ins.qo;
    const int scale3 = ins.qw.frac_bits + src.fmt.frac_bits;
    CodeTensor result(static_cast<int>(g.out.w), static_cast<int>(g.out.h), 32);

    const Buffer* ss = ins.srcS ? &bufs[static_cast<int>(ins.srcS->id)] : nullptr;
    // Adds the srcS partial at output pixel (ox, oy), aligned to the larger
    // fractional position, and requantizes.
    auto finish = [&](int64_t v, int scale, int ox, int oy, int ch) -> int16_t {
      if (ss) {
        const int64_t p = ss->data.at(static_cast<int>(ins.srcS->off_x + ox), static_cast<int>(ins.srcS->off_y + oy), ch);
        const int S = std::max(scale, ss->fmt.frac_bits);
        v = align_exact(v, scale, S) + align_exact(p, ss->fmt.frac_bits, S);
        scale = S;
      }
      return static_cast<int16_t>(requantize_code(v, scale, out_fmt));
    };

    std::vector<int32_t> acc(npx * 32);
    switch (ins.op) {
      case Opcode::CONV:
      case Opcode::DNX2: {
        kernels_->conv3x3(plane.data(), ew, eh, leaves[0].w3.data(), acc.data());
        CodeTensor conv(ew, eh, 32);
        for (int y = 0; y < eh; ++y)
          for (int x = 0; x < ew; ++x)
            for (int o = 0; o < 32; ++o) {
              const int64_t v = acc[(static_cast<std::size_t>(y) * ew + x) * 32 + o] +
                                aligned_bias(leaves[0].bias[o], ins.qb, scale3);
              conv.at(x, y, o) = ins.op == Opcode::CONV ? finish(v, scale3, x, y, o)
                                                        : static_cast<int16_t>(requantize_code(v, scale3, out_fmt));
            }
        if (ins.op == Opcode::CONV) {
          result = std::move(conv);
          break;
        }
        for (int y = 0; y < result.h; ++y)
          for (int x = 0; x < result.w; ++x) {
            const int cx = static_cast<int>(2 * (g.out.x + x) - g.conv.x), cy = static_cast<int>(2 * (g.out.y + y) - g.conv.y);
            for (int o = 0; o < 32; ++o) {
              int16_t v = conv.at(cx, cy, o);
              if (ins.pool == Pool::Max)
                v = std::max({v, conv.at(cx + 1, cy, o), conv.at(cx, cy + 1, o), conv.at(cx + 1, cy + 1, o)});
              result.at(x, y, o) = v;
            }
          }
        break;
      }
      case Opcode::UPX2:
        for (int gidx = 0; gidx < 4; ++gidx) {
          std::fill(acc.begin(), acc.end(), 0);
          kernels_->conv3x3(plane.data(), ew, eh, leaves[gidx].w3.data(), acc.data());
          const int dx = gidx % 2, dy = gidx / 2;
          for (int y = 0; y < eh; ++y)
            for (int x = 0; x < ew; ++x)
              for (int o = 0; o < 32; ++o) {
                const int64_t v = acc[(static_cast<std::size_t>(y) * ew + x) * 32 + o] +
                                  aligned_bias(leaves[gidx].bias[o], ins.qb, scale3);
                result.at(2 * x + dx, 2 * y + dy, o) = finish(v, scale3, 2 * x + dx, 2 * y + dy, o);
              }
        }
        break;
      case Opcode::ER: {
        const QFormat qs = *ins.qs;
        const int scale1 = ins.qw.frac_bits + qs.frac_bits;
        std::vector<int32_t> acc1(npx * 32, 0);
        std::vector<int16_t> mid(npx * 32);
        for (int l = 0; l < ins.lm; ++l) {
          std::fill(acc.begin(), acc.end(), 0);
          kernels_->conv3x3(plane.data(), ew, eh, leaves[l].w3.data(), acc.data());
          for (std::size_t k = 0; k < npx * 32; ++k)
            mid[k] = static_cast<int16_t>(
                requantize_code(acc[k] + aligned_bias(leaves[l].bias[k % 32], ins.qb, scale3), scale3, qs));
          kernels_->conv1x1(mid.data(), static_cast<int>(npx), leaves[l].w1.data(), acc1.data());
        }
        const int S = std::max(scale1, src.fmt.frac_bits);
        for (int y = 0; y < eh; ++y)
          for (int x = 0; x < ew; ++x) {
            const int16_t* centre = plane.data() + (static_cast<std::size_t>(y + 1) * (ew + 2) + (x + 1)) * 32;
            for (int o = 0; o < 32; ++o) {
              const int64_t v = acc1[(static_cast<std::size_t>(y) * ew + x) * 32 + o] +
                                aligned_bias(leaves[0].bias[32 + o], ins.qb, scale1);
              const int64_t sum = align_exact(v, scale1, S) + align_exact(centre[o], src.fmt.frac_bits, S);
              result.at(x, y, o) = finish(sum, S, x, y, o);
            }
          }
        break;
      }
    }

    Buffer& d = bufs[static_cast<int>(dref.id)];
    if (dref.id == BufferId::DO) {
      for (int y = 0; y < result.h; ++y)
        std::copy(result.pixel(0, y), result.pixel(0, y) + static_cast<std::ptrdiff_t>(result.w) * 32,
                  d.data.pixel(dref.off_x, dref.off_y + y));
    } else {
      Buffer nb;
      nb.written = true;
      nb.content = Rect{dref.off_x, dref.off_y, result.w, result.h};
      nb.fmt = out_fmt;
      nb.data = CodeTensor(dref.off_x + result.w, dref.off_y + result.h, 32);
      for (int y = 0; y < result.h; ++y)
        std::copy(result.pixel(0, y), result.pixel(0, y) + static_cast<std::ptrdiff_t>(result.w) * 32,
                  nb.data.pixel(dref.off_x, dref.off_y + y));
      d = std::move(nb);
    }
  }

  BlockResult r;
  r.level = fd.level;
  r.origin_x = fd.origin_x + fd.content.x;
  r.origin_y = fd.origin_y + fd.content.y;
  r.out.fmt = fd.fmt;
  r.out.codes = CodeTensor(static_cast<int>(fd.content.w), static_cast<int>(fd.content.h), 32);
  for (int y = 0; y < r.out.codes.h; ++y)
    std::copy(dout.data.pixel(static_cast<int>(fd.content.x), static_cast<int>(fd.content.y) + y),
              dout.data.pixel(static_cast<int>(fd.content.x), static_cast<int>(fd.content.y) + y) + r.out.codes.w * 32,
              r.out.codes.pixel(0, y));
  return r;
}

int worker_count() {
  if (const char* env = std::getenv("ECNNKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

Feature block_input(const Feature& frame, const BlockRect& r, int x_i) {
  Feature in;
  in.fmt = frame.fmt;
  in.codes = CodeTensor(x_i, x_i, frame.codes.c);
  for (int y = 0; y < x_i; ++y)
    for (int x = 0; x < x_i; ++x)
      for (int ch = 0; ch < frame.codes.c; ++ch) in.codes.at(x, y, ch) = clamped(frame.codes, r.in_x + x, r.in_y + y, ch);
  return in;
}

Feature run_image(const Machine& m, const Feature& frame, const BlockPlan& plan, int out_channels, int threads,
                  const std::vector<int>& order) {
  if (plan.x_i() != m.program().config.x_i) throw Error("block plan and program disagree on the block size");
  if (frame.codes.w != plan.frame_w || frame.codes.h != plan.frame_h) throw Error("frame size differs from the plan");
  if (out_channels < 1 || out_channels > 32) throw Error("output channel count out of range");
  const int n = plan.block_count();
  std::vector<int> seq = order;
  if (seq.empty())
    for (int i = 0; i < n; ++i) seq.push_back(i);
  if (static_cast<int>(seq.size()) != n) throw Error("block order must list every block once");

  std::vector<BlockOutput<int16_t>> outs(static_cast<std::size_t>(n));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t k; (k = next++) < seq.size();) {
      try {
        const int idx = seq[k];
        const BlockRect r = plan.rect(idx % plan.cols, idx / plan.cols);
        const BlockResult br = m.run_block(block_input(frame, r, plan.x_i()));
        const int64_t lx = plan.geom.out_start - br.origin_x, ly = plan.geom.out_start - br.origin_y;
        if (lx < 0 || ly < 0 || lx + r.out_w > br.out.codes.w || ly + r.out_h > br.out.codes.h)
          throw Error("program output does not cover block (" + std::to_string(r.col) + "," + std::to_string(r.row) + ")");
        BlockOutput<int16_t> bo;
        bo.col = r.col;
        bo.row = r.row;
        bo.data = CodeTensor(static_cast<int>(r.out_w), static_cast<int>(r.out_h), out_channels);
        for (int y = 0; y < bo.data.h; ++y)
          for (int x = 0; x < bo.data.w; ++x)
            std::copy(br.out.codes.pixel(static_cast<int>(lx) + x, static_cast<int>(ly) + y),
                      br.out.codes.pixel(static_cast<int>(lx) + x, static_cast<int>(ly) + y) + out_channels,
                      bo.data.pixel(x, y));
        outs[static_cast<std::size_t>(idx)] = std::move(bo);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int nt = std::min(threads > 0 ? threads : worker_count(), n);
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return Feature{stitch(outs, plan), m.geometry().final_do.fmt};
}

}  // namespace ecnn
