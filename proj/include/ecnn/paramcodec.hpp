// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ecnn/compiler.hpp"
#include "ecnn/huffman.hpp"

namespace ecnn {

// Streams 0..17 carry 3x3 weights (2 per filter tap, one per 16-channel
// output half), 18..19 the 1x1 weights, 20 the biases.
inline constexpr int kStreamCount = 21;
inline constexpr int kW3Streams = 18;
inline constexpr int kW1Stream = 18;
inline constexpr int kBiasStream = 20;
inline constexpr std::size_t kCoeffsPerStream = 512;
// Weight streams are addressed at 8x the bias stream address.
inline constexpr uint32_t kWeightAddrScale = 8;
// Each decoder emits two weights per cycle.
inline constexpr int kDecodeWeightsPerCycle = 2;
inline constexpr uint32_t kContainerVersion = 1;

// Stream and position of 3x3 weight (tap, out, in) inside a leaf-module.
inline int w3_stream(int tap, int out) { return 2 * tap + out / 16; }
inline int coeff_index(int out, int in) { return (out % 16) * 32 + in; }

struct SegmentEntry {
  uint32_t bias_addr = 0;  // restart attribute, in bias-stream bytes
  uint32_t sync_len = 0;   // bias-stream bytes; weight streams span 8x this
  bool has_1x1 = false;
  std::vector<uint8_t> bias_counts;  // per leaf-module
  friend bool operator==(const SegmentEntry&, const SegmentEntry&) = default;
};

struct ParamContainer {
  std::array<std::vector<uint8_t>, kStreamCount> streams;
  std::vector<SegmentEntry> directory;

  // Physical parameter memory occupied: bias bytes plus 8x for each of the
  // 20 weight streams.
  uint64_t memory_bytes() const;
  const SegmentEntry& segment_at(uint32_t restart_attr) const;
  friend bool operator==(const ParamContainer&, const ParamContainer&) = default;
};

struct StreamStats {
  uint64_t symbols = 0;
  uint64_t table_bits = 0;
  uint64_t code_bits = 0;   // Huffman-coded categories
  uint64_t value_bits = 0;  // raw bits after each category
  double entropy_bits = 0;  // Shannon bound for the categories
  uint64_t bytes = 0;       // before synchronization padding
};

struct SegmentStats {
  std::array<StreamStats, kStreamCount> streams;
  double cross_entropy() const;  // mean coded bits per category symbol
  double entropy() const;        // Shannon entropy per category symbol
};

struct CodecReport {
  uint64_t raw_bits = 0;         // parameters at their stored widths
  uint64_t compressed_bytes = 0; // stream bytes before padding
  uint64_t memory_bytes = 0;     // after synchronization padding
  std::vector<SegmentStats> segments;
  double compression_ratio() const { return static_cast<double>(raw_bits) / (8.0 * static_cast<double>(compressed_bytes)); }
  double memory_ratio() const { return static_cast<double>(raw_bits) / (8.0 * static_cast<double>(memory_bytes)); }
};

class ParamOverflow : public Error {
 public:
  ParamOverflow(uint64_t needed, uint64_t capacity);
  uint64_t needed, capacity;
  uint64_t overflow() const { return needed - capacity; }
};

struct EncodeResult {
  ParamContainer container;
  std::vector<uint32_t> segment_addr;  // restart attribute of each layout segment
  CodecReport report;
};

// Encodes every segment. `widths` gives the bit width of each segment's
// weights for the raw-size report (8 when empty). Throws ParamOverflow past
// `capacity_bytes` (0 = unlimited).
EncodeResult encode_params(const ParamLayout& layout, uint64_t capacity_bytes = 0,
                           const std::vector<int>& widths = {});

// Memory the encoded layout would occupy; never throws on capacity.
uint64_t encoded_memory_bytes(const ParamLayout& layout);

// All symbols of one stream in the segment starting at `restart_attr`.
std::vector<int16_t> decode_stream_segment(const ParamContainer& c, int stream, uint32_t restart_attr);
// The parameters of leaf-module `leaf` of a segment.
LeafParams decode_leaf_module(const ParamContainer& c, uint32_t restart_attr, int leaf);
// Every leaf of a segment, decoding the 21 streams independently.
std::vector<LeafParams> decode_segment(const ParamContainer& c, uint32_t restart_attr);

// Cycles the 21 parallel decoders spend on one leaf-module.
inline constexpr int decode_cycles_per_leaf() { return static_cast<int>(kCoeffsPerStream) / kDecodeWeightsPerCycle; }

std::vector<uint8_t> serialize_container(const ParamContainer& c);
ParamContainer parse_container(const std::vector<uint8_t>& bytes);

}  // namespace ecnn
