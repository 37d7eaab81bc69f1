// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/huffman.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <queue>
#include <tuple>

namespace ecnn {

int category(int v) {
  unsigned m = static_cast<unsigned>(std::abs(v));
  int c = 0;
  while (m) {
    ++c;
    m >>= 1;
  }
  return c;
}

uint32_t value_bits(int v, int cat) {
  if (cat == 0) return 0;
  return static_cast<uint32_t>(v > 0 ? v : v + (1 << cat) - 1);
}

int value_from_bits(uint32_t bits, int cat) {
  if (cat == 0) return 0;
  // Leading bit set means a positive value, as in JPEG.
  if (bits >> (cat - 1)) return static_cast<int>(bits);
  return static_cast<int>(bits) - (1 << cat) + 1;
}

HuffTable table_from_counts(const std::array<uint8_t, kMaxCodeLength>& counts, const std::vector<uint8_t>& symbols) {
  HuffTable t;
  t.counts = counts;
  t.symbols = symbols;
  std::size_t total = 0;
  for (uint8_t c : counts) total += c;
  if (total != symbols.size() || total == 0 || total > kCategories) throw Error("corrupt Huffman table");
  uint32_t code = 0;
  std::size_t k = 0;
  for (int l = 1; l <= kMaxCodeLength; ++l) {
    for (int i = 0; i < counts[l - 1]; ++i, ++k) {
      const uint8_t s = symbols[k];
      if (s >= kCategories || t.length[s]) throw Error("corrupt Huffman table");
      if (code >= (1u << l)) throw Error("Huffman table is not a prefix code");
      t.length[s] = static_cast<uint8_t>(l);
      t.code[s] = static_cast<uint16_t>(code++);
    }
    code <<= 1;
  }
  return t;
}

HuffTable build_table(const Histogram& hist) {
  std::vector<int> used;
  for (int s = 0; s < kCategories; ++s)
    if (hist[s]) used.push_back(s);
  if (used.empty()) throw Error("cannot build a Huffman table from an empty histogram");

  std::array<int, kCategories> len{};
  if (used.size() == 1) {
    len[used[0]] = 1;
  } else {
    // Nodes: leaves first, then merges. Ties resolve on node index.
    struct Node {
      uint64_t weight;
      int parent = -1;
    };
    std::vector<Node> nodes;
    using Item = std::tuple<uint64_t, int>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
    for (int s : used) {
      nodes.push_back({hist[s]});
      pq.emplace(hist[s], static_cast<int>(nodes.size()) - 1);
    }
    while (pq.size() > 1) {
      const auto [wa, a] = pq.top();
      pq.pop();
      const auto [wb, b] = pq.top();
      pq.pop();
      nodes.push_back({wa + wb});
      const int p = static_cast<int>(nodes.size()) - 1;
      nodes[a].parent = p;
      nodes[b].parent = p;
      pq.emplace(wa + wb, p);
    }
    for (std::size_t i = 0; i < used.size(); ++i) {
      int d = 0;
      for (int n = static_cast<int>(i); nodes[n].parent >= 0; n = nodes[n].parent) ++d;
      len[used[i]] = d;
    }
  }

  std::vector<int> order = used;
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return len[a] < len[b]; });
  std::array<uint8_t, kMaxCodeLength> counts{};
  std::vector<uint8_t> symbols;
  for (int s : order) {
    ++counts[len[s] - 1];
    symbols.push_back(static_cast<uint8_t>(s));
  }
  return table_from_counts(counts, symbols);
}

double entropy_bits(const Histogram& hist) {
  uint64_t n = 0;
  for (uint64_t c : hist) n += c;
  double h = 0;
  for (uint64_t c : hist)
    if (c) h -= static_cast<double>(c) * std::log2(static_cast<double>(c) / static_cast<double>(n));
  return h;
}

uint64_t coded_bits(const HuffTable& t, const Histogram& hist) {
  uint64_t bits = 0;
  for (int s = 0; s < kCategories; ++s) bits += hist[s] * t.length[s];
  return bits;
}

uint64_t raw_value_bits(const Histogram& hist) {
  uint64_t bits = 0;
  for (int s = 0; s < kCategories; ++s) bits += hist[s] * static_cast<uint64_t>(s);
  return bits;
}

void BitWriter::put(uint32_t bits, int n) {
  for (int i = n - 1; i >= 0; --i, ++bits_) {
    if (bits_ % 8 == 0) out_.push_back(0);
    if ((bits >> i) & 1) out_.back() |= static_cast<uint8_t>(0x80u >> (bits_ % 8));
  }
}

std::vector<uint8_t> BitWriter::finish() { return std::move(out_); }

uint32_t BitReader::get(int n) {
  if (pos_ + static_cast<std::size_t>(n) > size_ * 8) throw Error("truncated parameter stream");
  uint32_t v = 0;
  for (int i = 0; i < n; ++i, ++pos_) v = (v << 1) | ((data_[pos_ / 8] >> (7 - pos_ % 8)) & 1u);
  return v;
}

void write_table(BitWriter& w, const HuffTable& t) {
  for (uint8_t c : t.counts) w.put_byte(c);
  for (uint8_t s : t.symbols) w.put_byte(s);
}

HuffTable read_table(BitReader& r) {
  std::array<uint8_t, kMaxCodeLength> counts{};
  std::size_t total = 0;
  for (auto& c : counts) {
    c = r.get_byte();
    total += c;
  }
  if (total == 0 || total > kCategories) throw Error("corrupt Huffman table");
  std::vector<uint8_t> symbols(total);
  for (auto& s : symbols) s = r.get_byte();
  return table_from_counts(counts, symbols);
}

void encode_value(BitWriter& w, const HuffTable& t, int v) {
  const int cat = category(v);
  if (cat >= kCategories || !t.length[cat]) throw Error("value outside the Huffman table's categories");
  w.put(t.code[cat], t.length[cat]);
  w.put(value_bits(v, cat), cat);
}

int decode_value(BitReader& r, const HuffTable& t) {
  uint32_t code = 0;
  uint32_t first = 0;
  std::size_t index = 0;
  for (int l = 1; l <= kMaxCodeLength; ++l) {
    code = (code << 1) | r.get(1);
    const uint32_t n = t.counts[l - 1];
    if (code - first < n) {
      const int cat = t.symbols[index + (code - first)];
      return value_from_bits(r.get(cat), cat);
    }
    index += n;
    first = (first + n) << 1;
  }
  throw Error("corrupt prefix in parameter stream");
}

}  // namespace ecnn
