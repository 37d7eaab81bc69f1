// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/paramcodec.hpp"

#include <algorithm>

namespace ecnn {

namespace {

// Symbols of stream `s` for a segment, in stream order.
std::vector<int16_t> gather(const ParamSegment& seg, int s) {
  std::vector<int16_t> out;
  if (s == kBiasStream) {
    for (const auto& leaf : seg.leaves) out.insert(out.end(), leaf.bias.begin(), leaf.bias.end());
    return out;
  }
  if (s >= kW3Streams && !seg.has_1x1) return out;
  const int half = s % 2;
  for (const auto& leaf : seg.leaves) {
    for (int o = 0; o < 16; ++o) {
      const int out_ch = half * 16 + o;
      for (int in = 0; in < 32; ++in) {
        if (s < kW3Streams)
          out.push_back(leaf.w3[(static_cast<std::size_t>(s / 2) * 32 + out_ch) * 32 + in]);
        else
          out.push_back(leaf.w1[static_cast<std::size_t>(out_ch) * 32 + in]);
      }
    }
  }
  return out;
}

void check_segment(const ParamSegment& seg) {
  if (seg.leaves.empty() || seg.leaves.size() > 255) throw Error("parameter segment needs 1 to 255 leaf-modules");
  for (const auto& leaf : seg.leaves) {
    if (leaf.w3.size() != kLeafW3) throw Error("leaf-module needs 9x32x32 3x3 weights");
    if (seg.has_1x1 != !leaf.w1.empty() || (seg.has_1x1 && leaf.w1.size() != kLeafW1))
      throw Error("leaf-module 1x1 weights do not match the segment");
    if (leaf.bias.size() > 64) throw Error("leaf-module carries more than 64 biases");
  }
}

struct EncodedStream {
  std::vector<uint8_t> bytes;
  StreamStats stats;
};

EncodedStream encode_stream(const std::vector<int16_t>& symbols) {
  EncodedStream e;
  if (symbols.empty()) return e;
  Histogram hist{};
  for (int16_t v : symbols) ++hist[category(v)];
  const HuffTable t = build_table(hist);
  BitWriter w;
  write_table(w, t);
  for (int16_t v : symbols) encode_value(w, t, v);
  e.bytes = w.finish();
  e.stats.symbols = symbols.size();
  e.stats.table_bits = 8 * t.serialized_size();
  e.stats.code_bits = coded_bits(t, hist);
  e.stats.value_bits = raw_value_bits(hist);
  e.stats.entropy_bits = entropy_bits(hist);
  e.stats.bytes = e.bytes.size();
  return e;
}

std::size_t stream_symbol_count(const SegmentEntry& e, int s) {
  if (s == kBiasStream) {
    std::size_t n = 0;
    for (uint8_t c : e.bias_counts) n += c;
    return n;
  }
  if (s >= kW3Streams && !e.has_1x1) return 0;
  return e.bias_counts.size() * kCoeffsPerStream;
}

}  // namespace

ParamOverflow::ParamOverflow(uint64_t n, uint64_t c)
    : Error("parameters need " + std::to_string(n) + " bytes of parameter memory, " + std::to_string(n - c) +
            " more than the " + std::to_string(c) + " available"),
      needed(n),
      capacity(c) {}

uint64_t ParamContainer::memory_bytes() const {
  return streams[kBiasStream].size() * (1 + kWeightAddrScale * (kStreamCount - 1));
}

const SegmentEntry& ParamContainer::segment_at(uint32_t restart_attr) const {
  auto it = std::lower_bound(directory.begin(), directory.end(), restart_attr,
                             [](const SegmentEntry& e, uint32_t a) { return e.bias_addr < a; });
  if (it == directory.end() || it->bias_addr != restart_attr)
    throw Error("no parameter segment starts at restart attribute " + std::to_string(restart_attr));
  return *it;
}

double SegmentStats::cross_entropy() const {
  uint64_t bits = 0, n = 0;
  for (const auto& s : streams) {
    bits += s.code_bits;
    n += s.symbols;
  }
  return n ? static_cast<double>(bits) / static_cast<double>(n) : 0.0;
}

double SegmentStats::entropy() const {
  double bits = 0;
  uint64_t n = 0;
  for (const auto& s : streams) {
    bits += s.entropy_bits;
    n += s.symbols;
  }
  return n ? bits / static_cast<double>(n) : 0.0;
}

EncodeResult encode_params(const ParamLayout& layout, uint64_t capacity_bytes, const std::vector<int>& widths) {
  if (!widths.empty() && widths.size() != layout.segments.size())
    throw Error("one width per parameter segment required");
  EncodeResult r;
  uint32_t addr = 0;
  for (std::size_t k = 0; k < layout.segments.size(); ++k) {
    const ParamSegment& seg = layout.segments[k];
    check_segment(seg);
    SegmentStats stats;
    std::array<std::vector<uint8_t>, kStreamCount> enc;
    uint64_t max_w = 0;
    for (int s = 0; s < kStreamCount; ++s) {
      EncodedStream e = encode_stream(gather(seg, s));
      stats.streams[s] = e.stats;
      r.report.compressed_bytes += e.bytes.size();
      r.report.raw_bits += e.stats.symbols * static_cast<uint64_t>(widths.empty() ? 8 : widths[k]);
      if (s != kBiasStream) max_w = std::max<uint64_t>(max_w, e.bytes.size());
      enc[s] = std::move(e.bytes);
    }
    const uint64_t sync = std::max<uint64_t>({1, enc[kBiasStream].size(), (max_w + kWeightAddrScale - 1) / kWeightAddrScale});
    SegmentEntry entry;
    entry.bias_addr = addr;
    entry.sync_len = static_cast<uint32_t>(sync);
    entry.has_1x1 = seg.has_1x1;
    for (const auto& leaf : seg.leaves) entry.bias_counts.push_back(static_cast<uint8_t>(leaf.bias.size()));
    for (int s = 0; s < kStreamCount; ++s) {
      enc[s].resize(s == kBiasStream ? sync : sync * kWeightAddrScale, 0x00);
      r.container.streams[s].insert(r.container.streams[s].end(), enc[s].begin(), enc[s].end());
    }
    r.container.directory.push_back(entry);
    r.segment_addr.push_back(addr);
    r.report.segments.push_back(stats);
    addr += static_cast<uint32_t>(sync);
  }
  r.report.memory_bytes = r.container.memory_bytes();
  if (capacity_bytes && r.report.memory_bytes > capacity_bytes) throw ParamOverflow(r.report.memory_bytes, capacity_bytes);
  return r;
}

uint64_t encoded_memory_bytes(const ParamLayout& layout) { return encode_params(layout).report.memory_bytes; }

std::vector<int16_t> decode_stream_segment(const ParamContainer& c, int s, uint32_t restart_attr) {
  if (s < 0 || s >= kStreamCount) throw Error("stream index out of range");
  const SegmentEntry& e = c.segment_at(restart_attr);
  const std::size_t n = stream_symbol_count(e, s);
  std::vector<int16_t> out;
  if (n == 0) return out;
  const uint64_t scale = s == kBiasStream ? 1 : kWeightAddrScale;
  const uint64_t begin = uint64_t{restart_attr} * scale, len = uint64_t{e.sync_len} * scale;
  if (begin + len > c.streams[s].size()) throw Error("truncated parameter stream " + std::to_string(s));
  BitReader r(c.streams[s].data() + begin, len);
  const HuffTable t = read_table(r);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<int16_t>(decode_value(r, t)));
  return out;
}

std::vector<LeafParams> decode_segment(const ParamContainer& c, uint32_t restart_attr) {
  const SegmentEntry& e = c.segment_at(restart_attr);
  std::array<std::vector<int16_t>, kStreamCount> sym;
  for (int s = 0; s < kStreamCount; ++s) sym[s] = decode_stream_segment(c, s, restart_attr);
  std::vector<LeafParams> leaves(e.bias_counts.size());
  std::size_t bias_pos = 0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    LeafParams& p = leaves[l];
    p.w3.resize(kLeafW3);
    if (e.has_1x1) p.w1.resize(kLeafW1);
    for (int s = 0; s < kStreamCount - 1; ++s) {
      if (s >= kW3Streams && !e.has_1x1) continue;
      const int half = s % 2;
      const int16_t* src = sym[s].data() + l * kCoeffsPerStream;
      for (int o = 0; o < 16; ++o) {
        const int out_ch = half * 16 + o;
        for (int in = 0; in < 32; ++in) {
          const int16_t v = src[coeff_index(o, in)];
          if (s < kW3Streams)
            p.w3[(static_cast<std::size_t>(s / 2) * 32 + out_ch) * 32 + in] = v;
          else
            p.w1[static_cast<std::size_t>(out_ch) * 32 + in] = v;
        }
      }
    }
    p.bias.assign(sym[kBiasStream].begin() + static_cast<std::ptrdiff_t>(bias_pos),
                  sym[kBiasStream].begin() + static_cast<std::ptrdiff_t>(bias_pos + e.bias_counts[l]));
    bias_pos += e.bias_counts[l];
  }
  return leaves;
}

LeafParams decode_leaf_module(const ParamContainer& c, uint32_t restart_attr, int leaf) {
  const SegmentEntry& e = c.segment_at(restart_attr);
  if (leaf < 0 || static_cast<std::size_t>(leaf) >= e.bias_counts.size())
    throw Error("leaf-module " + std::to_string(leaf) + " beyond the segment's " +
                std::to_string(e.bias_counts.size()));
  return decode_segment(c, restart_attr)[static_cast<std::size_t>(leaf)];
}

namespace {

const char kMagic[4] = {'F', 'B', 'P', 'C'};

void put32(std::vector<uint8_t>& o, uint32_t v) {
  for (int i = 0; i < 4; ++i) o.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<uint8_t>& b) : b_(b) {}
  uint8_t u8() {
    if (pos_ >= b_.size()) throw Error("truncated parameter container");
    return b_[pos_++];
  }
  uint32_t u32() {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t{u8()} << (8 * i);
    return v;
  }
  std::vector<uint8_t> bytes(std::size_t n) {
    if (n > b_.size() - pos_) throw Error("truncated parameter container");
    std::vector<uint8_t> v(b_.begin() + static_cast<std::ptrdiff_t>(pos_), b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> serialize_container(const ParamContainer& c) {
  std::vector<uint8_t> o(kMagic, kMagic + 4);
  put32(o, kContainerVersion);
  put32(o, static_cast<uint32_t>(c.directory.size()));
  for (const auto& e : c.directory) {
    put32(o, e.bias_addr);
    put32(o, e.sync_len);
    o.push_back(e.has_1x1 ? 1 : 0);
    o.push_back(static_cast<uint8_t>(e.bias_counts.size()));
    o.insert(o.end(), e.bias_counts.begin(), e.bias_counts.end());
  }
  for (const auto& s : c.streams) {
    put32(o, static_cast<uint32_t>(s.size()));
    o.insert(o.end(), s.begin(), s.end());
  }
  return o;
}

ParamContainer parse_container(const std::vector<uint8_t>& bytes) {
  Reader r(bytes);
  for (char m : kMagic)
    if (r.u8() != static_cast<uint8_t>(m)) throw Error("not a parameter container");
  if (r.u32() != kContainerVersion) throw Error("unsupported parameter container version");
  ParamContainer c;
  const uint32_t n = r.u32();
  uint64_t addr = 0;
  for (uint32_t i = 0; i < n; ++i) {
    SegmentEntry e;
    e.bias_addr = r.u32();
    e.sync_len = r.u32();
    e.has_1x1 = r.u8() != 0;
    const uint8_t leaves = r.u8();
    for (uint8_t l = 0; l < leaves; ++l) e.bias_counts.push_back(r.u8());
    if (e.bias_addr != addr || e.sync_len == 0 || leaves == 0) throw Error("corrupt parameter directory");
    addr += e.sync_len;
    c.directory.push_back(std::move(e));
  }
  for (int s = 0; s < kStreamCount; ++s) {
    c.streams[s] = r.bytes(r.u32());
    if (c.streams[s].size() != addr * (s == kBiasStream ? 1 : kWeightAddrScale))
      throw Error("parameter stream " + std::to_string(s) + " length disagrees with the directory");
  }
  if (!r.done()) throw Error("trailing bytes after parameter container");
  return c;
}

}  // namespace ecnn
