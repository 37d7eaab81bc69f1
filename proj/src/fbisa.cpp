// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecnn/fbisa.hpp"

#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

namespace ecnn {

std::string to_string(Opcode op) {
  switch (op) {
    case Opcode::CONV: return "CONV";
    case Opcode::ER: return "ER";
    case Opcode::UPX2: return "UPX2";
    case Opcode::DNX2: return "DNX2";
  }
  return "?";
}

std::string to_string(BufferId id) {
  switch (id) {
    case BufferId::BB0: return "BB0";
    case BufferId::BB1: return "BB1";
    case BufferId::BB2: return "BB2";
    case BufferId::DI: return "DI";
    case BufferId::DO: return "DO";
  }
  return "?";
}

std::string to_string(InferType t) { return t == InferType::Truncated ? "truncated" : "zero"; }

std::string to_string(const BufferRef& r) {
  std::string s = to_string(r.id);
  if (r.off_x != 0 || r.off_y != 0) s += ":" + std::to_string(r.off_x) + "," + std::to_string(r.off_y);
  return s;
}

bool lm_allowed(Opcode op, int lm) {
  switch (op) {
    case Opcode::CONV:
    case Opcode::DNX2: return lm == 1;
    case Opcode::UPX2: return lm == 4;
    case Opcode::ER: return lm >= 1 && lm <= 4;
  }
  return false;
}

std::vector<std::string> operand_errors(const Instruction& ins) {
  std::vector<std::string> e;
  if (!lm_allowed(ins.op, ins.lm)) e.push_back(to_string(ins.op) + " cannot use lm=" + std::to_string(ins.lm));
  if (ins.tiles_x < 1 || ins.tiles_y < 1) e.push_back("output tile counts must be positive");
  if (ins.src.id == BufferId::DO) e.push_back("DO is write-only and cannot be a source");
  if (ins.srcS && ins.srcS->id == BufferId::DO) e.push_back("DO is write-only and cannot be srcS");
  if (ins.srcS && ins.srcS->id == ins.src.id) e.push_back("src and srcS must be different buffers");
  if (ins.dst.has_value() == ins.dstS.has_value()) e.push_back("exactly one of dst and dstS is required");
  if (ins.dst && ins.dst->id == BufferId::DI) e.push_back("DI is read-only and cannot be a destination");
  if (ins.dstS && (ins.dstS->id == BufferId::DI || ins.dstS->id == BufferId::DO))
    e.push_back("dstS must be a block buffer");
  const BufferId out = ins.dst ? ins.dst->id : ins.dstS ? ins.dstS->id : BufferId::DO;
  if ((ins.dst || ins.dstS) && out == ins.src.id) e.push_back("destination must differ from src");
  if (ins.op == Opcode::DNX2 && ins.pool == Pool::None) e.push_back("DNX2 needs pool=stride or pool=max");
  if (ins.op != Opcode::DNX2 && ins.pool != Pool::None) e.push_back("pool is only valid on DNX2");
  if (ins.op == Opcode::ER && !ins.qs) e.push_back("ER needs an intermediate format qs");
  if (ins.op == Opcode::ER && (ins.srcS || ins.dstS)) e.push_back("ER does not take partial sums");
  if (ins.dstS && !ins.qs) e.push_back("dstS needs a partial-sum format qs");
  if ((ins.op == Opcode::UPX2 || ins.op == Opcode::DNX2) && (ins.srcS || ins.dstS))
    e.push_back(to_string(ins.op) + " does not take partial sums");
  if (ins.op != Opcode::CONV && ins.type == InferType::ZeroPadded)
    e.push_back("zero-padded inference is only defined for CONV");
  if (ins.qo.width != 8) e.push_back("output features are 8-bit");
  return e;
}

std::string format_diagnostic(const Diagnostic& d) {
  std::string s;
  if (d.line) s += std::to_string(d.line) + ":";
  if (d.column) s += std::to_string(d.column) + ":";
  if (!s.empty()) s += " ";
  return s + d.message;
}

namespace {

std::string join_diags(const std::vector<Diagnostic>& diags) {
  std::string s;
  for (const auto& d : diags) s += (s.empty() ? "" : "\n") + format_diagnostic(d);
  return s;
}

struct Token {
  std::string text;
  std::size_t column;
};

std::vector<Token> tokenize(const std::string& line) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < line.size()) {
    if (line[i] == '#') break;
    if (std::isspace(static_cast<unsigned char>(line[i]))) {
      ++i;
      continue;
    }
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '#') ++i;
    out.push_back({line.substr(start, i - start), start + 1});
  }
  return out;
}

bool parse_int(std::string_view s, int64_t& v) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc{} && p == s.data() + s.size();
}

std::optional<Opcode> parse_opcode(const std::string& s) {
  for (Opcode op : {Opcode::CONV, Opcode::ER, Opcode::UPX2, Opcode::DNX2})
    if (to_string(op) == s) return op;
  return std::nullopt;
}

std::optional<BufferRef> parse_buffer(const std::string& s) {
  BufferRef r;
  std::string name = s, offs;
  if (auto c = s.find(':'); c != std::string::npos) {
    name = s.substr(0, c);
    offs = s.substr(c + 1);
  }
  bool found = false;
  for (BufferId id : {BufferId::BB0, BufferId::BB1, BufferId::BB2, BufferId::DI, BufferId::DO})
    if (to_string(id) == name) {
      r.id = id;
      found = true;
    }
  if (!found) return std::nullopt;
  if (!offs.empty()) {
    const auto comma = offs.find(',');
    int64_t x = 0, y = 0;
    if (comma == std::string::npos || !parse_int(std::string_view(offs).substr(0, comma), x) ||
        !parse_int(std::string_view(offs).substr(comma + 1), y) || x < 0 || y < 0 || x > 4096 || y > 4096)
      return std::nullopt;
    r.off_x = static_cast<int>(x);
    r.off_y = static_cast<int>(y);
  }
  return r;
}

}  // namespace

AsmError::AsmError(std::vector<Diagnostic> diags) : Error(join_diags(diags)), diags_(std::move(diags)) {}

Program assemble(const std::string& text) {
  Program p;
  std::vector<Diagnostic> diags;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto toks = tokenize(line);
    if (toks.empty()) continue;
    auto err = [&](std::size_t col, const std::string& msg) { diags.push_back({lineno, col, msg}); };
    const Token& head = toks.front();
    if (head.text.starts_with(".")) {
      if (head.text == ".submodel") {
        if (toks.size() != 1) err(toks[1].column, ".submodel takes no arguments");
        p.submodel_boundaries.push_back(p.instrs.size());
      } else if (head.text == ".block") {
        int64_t v = 0;
        if (toks.size() != 2 || !parse_int(toks[1].text, v) || v < 4 || v > 4096)
          err(head.column, ".block needs a block size");
        else
          p.config.x_i = static_cast<int>(v);
      } else if (head.text == ".input") {
        if (toks.size() != 2) {
          err(head.column, ".input needs a Q-format");
        } else {
          try {
            p.input_fmt = QFormat::parse(toks[1].text);
          } catch (const Error& e) {
            err(toks[1].column, e.what());
          }
        }
      } else if (head.text == ".parammem") {
        int64_t v = 0;
        if (toks.size() != 2 || !parse_int(toks[1].text, v) || v <= 0)
          err(head.column, ".parammem needs a byte count");
        else
          p.config.param_mem_bytes = v;
      } else {
        err(head.column, "unknown directive '" + head.text + "'");
      }
      continue;
    }
    const auto op = parse_opcode(head.text);
    if (!op) {
      err(head.column, "unknown opcode '" + head.text + "'");
      continue;
    }
    Instruction ins;
    ins.op = *op;
    ins.lm = *op == Opcode::UPX2 ? 4 : 1;
    std::map<std::string, bool> seen;
    bool ok = true;
    for (std::size_t t = 1; t < toks.size(); ++t) {
      const Token& tok = toks[t];
      const auto eq = tok.text.find('=');
      if (eq == std::string::npos || eq == 0) {
        err(tok.column, "expected key=value, got '" + tok.text + "'");
        ok = false;
        continue;
      }
      const std::string key = tok.text.substr(0, eq), val = tok.text.substr(eq + 1);
      const std::size_t vcol = tok.column + eq + 1;
      if (seen[key]) {
        err(tok.column, "duplicate operand '" + key + "'");
        ok = false;
        continue;
      }
      seen[key] = true;
      auto qfmt = [&](QFormat& dst) {
        try {
          dst = QFormat::parse(val);
        } catch (const Error& e) {
          err(vcol, e.what());
          ok = false;
        }
      };
      auto buffer = [&]() -> std::optional<BufferRef> {
        auto r = parse_buffer(val);
        if (!r) {
          err(vcol, "unknown buffer operand '" + val + "'");
          ok = false;
        }
        return r;
      };
      if (key == "out") {
        const auto x = val.find('x');
        int64_t w = 0, h = 0;
        if (x == std::string::npos || !parse_int(std::string_view(val).substr(0, x), w) ||
            !parse_int(std::string_view(val).substr(x + 1), h) || w < 1 || h < 1 || w > 1024 || h > 1024) {
          err(vcol, "out expects <tiles_x>x<tiles_y>");
          ok = false;
        } else {
          ins.tiles_x = static_cast<int>(w);
          ins.tiles_y = static_cast<int>(h);
        }
      } else if (key == "lm") {
        int64_t v = 0;
        if (!parse_int(val, v) || v < 1 || v > 4) {
          err(vcol, "lm expects 1..4");
          ok = false;
        } else {
          ins.lm = static_cast<int>(v);
        }
      } else if (key == "src") {
        if (auto r = buffer()) ins.src = *r;
      } else if (key == "dst") {
        if (auto r = buffer()) ins.dst = *r;
      } else if (key == "srcS") {
        if (auto r = buffer()) ins.srcS = *r;
      } else if (key == "dstS") {
        if (auto r = buffer()) ins.dstS = *r;
      } else if (key == "param") {
        int64_t v = 0;
        const std::string_view num = val.starts_with("@") ? std::string_view(val).substr(1) : std::string_view(val);
        if (!parse_int(num, v) || v < 0 || v > 0xFFFF) {
          err(vcol, "param expects @<restart address>");
          ok = false;
        } else {
          ins.param = static_cast<uint32_t>(v);
        }
      } else if (key == "qw") {
        qfmt(ins.qw);
      } else if (key == "qb") {
        qfmt(ins.qb);
      } else if (key == "qo") {
        qfmt(ins.qo);
      } else if (key == "qs") {
        QFormat f;
        qfmt(f);
        ins.qs = f;
      } else if (key == "type") {
        if (val == "truncated") {
          ins.type = InferType::Truncated;
        } else if (val == "zero") {
          ins.type = InferType::ZeroPadded;
        } else {
          err(vcol, "type expects truncated or zero");
          ok = false;
        }
      } else if (key == "pool") {
        if (val == "stride") {
          ins.pool = Pool::Stride;
        } else if (val == "max") {
          ins.pool = Pool::Max;
        } else {
          err(vcol, "pool expects stride or max");
          ok = false;
        }
      } else {
        err(tok.column, "unknown operand '" + key + "'");
        ok = false;
      }
    }
    for (const char* req : {"out", "src", "param", "qw", "qb", "qo"})
      if (!seen[req]) {
        err(head.column, std::string("missing operand '") + req + "'");
        ok = false;
      }
    if (!ok) continue;
    // ER without an explicit intermediate format clips at zero on the output grid.
    if (ins.op == Opcode::ER && !ins.qs) ins.qs = UQ(ins.qo.frac_bits);
    for (const auto& e : operand_errors(ins)) err(head.column, e);
    p.instrs.push_back(ins);
  }
  if (!diags.empty()) throw AsmError(std::move(diags));
  return p;
}

std::string disassemble(const Instruction& ins) {
  std::string s = to_string(ins.op);
  s += " out=" + std::to_string(ins.tiles_x) + "x" + std::to_string(ins.tiles_y);
  s += " lm=" + std::to_string(ins.lm);
  if (ins.type == InferType::ZeroPadded) s += " type=zero";
  if (ins.pool != Pool::None) s += " pool=" + to_string(ins.pool);
  s += " src=" + to_string(ins.src);
  if (ins.dst) s += " dst=" + to_string(*ins.dst);
  if (ins.srcS) s += " srcS=" + to_string(*ins.srcS);
  if (ins.dstS) s += " dstS=" + to_string(*ins.dstS);
  s += " param=@" + std::to_string(ins.param);
  s += " qw=" + ins.qw.to_string() + " qb=" + ins.qb.to_string() + " qo=" + ins.qo.to_string();
  if (ins.qs) s += " qs=" + ins.qs->to_string();
  return s;
}

std::string disassemble(const Program& p) {
  std::string s;
  s += ".block " + std::to_string(p.config.x_i) + "\n";
  s += ".input " + p.input_fmt.to_string() + "\n";
  if (p.config.param_mem_bytes != MachineConfig{}.param_mem_bytes)
    s += ".parammem " + std::to_string(p.config.param_mem_bytes) + "\n";
  std::size_t b = 0;
  for (std::size_t i = 0; i <= p.instrs.size(); ++i) {
    while (b < p.submodel_boundaries.size() && p.submodel_boundaries[b] == i) {
      s += ".submodel\n";
      ++b;
    }
    if (i < p.instrs.size()) s += disassemble(p.instrs[i]) + "\n";
  }
  return s;
}

}  // namespace ecnn
