// Copyright 2026 The ecnnkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "ecnn/fbisa.hpp"

using namespace ecnn;

namespace {

Instruction random_instruction(std::mt19937& rng) {
  for (;;) {
    Instruction ins;
    ins.op = static_cast<Opcode>(rng() % 4);
    ins.lm = ins.op == Opcode::UPX2 ? 4 : ins.op == Opcode::ER ? 1 + static_cast<int>(rng() % 4) : 1;
    ins.tiles_x = 1 + static_cast<int>(rng() % 32);
    ins.tiles_y = 1 + static_cast<int>(rng() % 64);
    const BufferId srcs[] = {BufferId::BB0, BufferId::BB1, BufferId::BB2, BufferId::DI};
    const BufferId outs[] = {BufferId::BB0, BufferId::BB1, BufferId::BB2, BufferId::DO};
    ins.src = {srcs[rng() % 4], static_cast<int>(rng() % 128), static_cast<int>(rng() % 128)};
    const bool partial = ins.op == Opcode::CONV && rng() % 3 == 0;
    const BufferRef out{outs[rng() % (partial ? 3 : 4)], static_cast<int>(rng() % 256), static_cast<int>(rng() % 256)};
    if (partial)
      ins.dstS = out;
    else
      ins.dst = out;
    if (ins.op == Opcode::CONV && rng() % 2) ins.srcS = BufferRef{srcs[rng() % 3], static_cast<int>(rng() % 128), 0};
    if (ins.op == Opcode::CONV && rng() % 4 == 0) ins.type = InferType::ZeroPadded;
    if (ins.op == Opcode::DNX2) ins.pool = rng() % 2 ? Pool::Max : Pool::Stride;
    ins.param = static_cast<uint32_t>(rng() % 8000);
    auto fmt = [&](bool s, int width) { return QFormat{s, static_cast<int>(rng() % 24) - 8, width}; };
    ins.qw = fmt(true, rng() % 2 ? 7 : 8);
    ins.qb = fmt(true, 8);
    ins.qo = fmt(rng() % 2 == 0, 8);
    if (ins.op == Opcode::ER || ins.dstS || rng() % 5 == 0) ins.qs = fmt(rng() % 2 == 0, 8);
    if (operand_errors(ins).empty()) return ins;
  }
}

const char* kDnProgram = R"(# DnERNet-B3R1N0
.block 128
.input UQ8
CONV out=32x63 lm=1 src=DI dst=BB0 param=@0 qw=Q7 qb=Q11 qo=Q5
ER out=31x62 lm=1 src=BB0 dst=BB1 param=@52 qw=Q8 qb=Q11 qo=Q5 qs=UQ6
ER out=31x61 lm=1 src=BB1 dst=BB2 param=@136 qw=Q8 qb=Q11 qo=Q6 qs=UQ6
ER out=30x60 lm=1 src=BB2 dst=BB1 param=@223 qw=Q8 qb=Q11 qo=Q5 qs=UQ6
CONV out=30x59 lm=1 src=BB1 dst=BB2 srcS=BB0:4,4 param=@308 qw=Q9 qb=Q11 qo=Q5
CONV out=29x58 lm=1 src=BB2 dst=DO param=@369 qw=Q9 qb=Q11 qo=Q6
)";

}  // namespace

TEST_CASE("assemble a single ER line") {
  const Program p = assemble("ER out=30x29 lm=2 src=BB0 dst=BB1 param=@64 qw=Q6 qb=Q8 qo=UQ4");
  REQUIRE(p.instrs.size() == 1);
  const Instruction& i = p.instrs[0];
  CHECK(i.op == Opcode::ER);
  CHECK(i.lm == 2);
  CHECK(i.tiles_x == 30);
  CHECK(i.tiles_y == 29);
  CHECK(i.src.id == BufferId::BB0);
  CHECK(i.dst->id == BufferId::BB1);
  CHECK(i.param == 64);
  CHECK(i.qw == Q(6));
  CHECK(i.qb == Q(8));
  CHECK(i.qo == UQ(4));
  CHECK(i.qs == UQ(4));  // intermediate format defaults to UQ at qo's position
}

TEST_CASE("six-line program") {
  const Program p = assemble(kDnProgram);
  CHECK(p.instrs.size() == 6);
  CHECK(p.config.x_i == 128);
  CHECK(validate(p).empty());
  CHECK(assemble(disassemble(p)) == p);
}

TEST_CASE("disassembly is canonical") {
  const Program a = assemble("CONV  param=@3 qo=Q2 dst=BB1 src=BB0:4,2 out=2x3 srcS=BB2 qb=Q4 qw=Q5");
  const std::string text = disassemble(a.instrs[0]);
  CHECK(text == "CONV out=2x3 lm=1 src=BB0:4,2 dst=BB1 srcS=BB2 param=@3 qw=Q5 qb=Q4 qo=Q2");
  CHECK(disassemble(assemble(disassemble(a))) == disassemble(a));
}

TEST_CASE("assembler diagnostics carry line and column") {
  try {
    assemble("CONV out=1x1 src=BB0 dst=BB1 param=@0 qw=Q1 qb=Q1 qo=Q1\nFOO out=1x1\nCONV out=1x1 src=DO dst=BB1 qo=Q9x");
    FAIL("expected AsmError");
  } catch (const AsmError& e) {
    REQUIRE(e.diagnostics().size() >= 2);
    CHECK(e.diagnostics()[0].line == 2);
    bool bad_fmt = false;
    for (const auto& d : e.diagnostics()) bad_fmt |= d.line == 3 && d.message.find("Q9x") != std::string::npos;
    CHECK(bad_fmt);
  }
  CHECK_THROWS_AS(assemble("CONV out=1x1 src=BB0 dst=BB1 lm=2"), AsmError);
  CHECK_THROWS_AS(assemble("DNX2 out=1x1 src=BB0 dst=BB1"), AsmError);
  CHECK_THROWS_AS(assemble("UPX2 out=1x1 lm=4 src=BB0 dst=DI"), AsmError);
  CHECK_THROWS_AS(assemble("CONV out=1x1 src=BB0 dst=BB1 dstS=BB2 qs=Q3"), AsmError);
}

TEST_CASE("random programs round-trip through text and binary") {
  std::mt19937 rng(77);
  for (int it = 0; it < 300; ++it) {
    Program p;
    const int n = 1 + static_cast<int>(rng() % 12);
    for (int k = 0; k < n; ++k) p.instrs.push_back(random_instruction(rng));
    if (n > 3) p.submodel_boundaries = {0, static_cast<std::size_t>(n / 2)};
    p.config.x_i = 64 + static_cast<int>(rng() % 65);
    p.input_fmt = rng() % 2 ? UQ(8) : Q(6);
    const std::string text = disassemble(p);
    REQUIRE(assemble(text) == p);
    REQUIRE(decode_program(encode_program(p)) == p);
  }
}

TEST_CASE("binary format") {
  const Program p = assemble(kDnProgram);
  const auto bytes = encode_program(p);
  CHECK(std::string(bytes.begin(), bytes.begin() + 6) == std::string("FBISA\0", 6));
  // header 8 + config 12 + boundary count 4 + instruction count 4
  CHECK(bytes.size() == 8 + 12 + 4 + 4 + 16 * p.instrs.size());
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_program(bad), Error);
  auto cut = bytes;
  cut.resize(cut.size() - 3);
  CHECK_THROWS_AS(decode_program(cut), Error);
  Program big = p;
  big.instrs[0].tiles_x = 200;
  CHECK_THROWS_AS(encode_program(big), Error);
}

TEST_CASE("validator") {
  const Program ok = assemble(kDnProgram);

  Program twice = ok;
  twice.instrs.push_back(twice.instrs.back());
  CHECK_FALSE(validate(twice).empty());

  Program no_do = ok;
  no_do.instrs.pop_back();
  CHECK_FALSE(validate(no_do).empty());

  Program from_do = ok;
  from_do.instrs[1].src.id = BufferId::DO;
  CHECK_FALSE(validate(from_do).empty());

  Program stale = ok;
  stale.instrs[0].dst->id = BufferId::BB2;  // BB0 is then read before written
  CHECK_FALSE(validate(stale).empty());

  Program di_twice = ok;
  di_twice.instrs[1].src.id = BufferId::DI;
  CHECK_FALSE(validate(di_twice).empty());

  Program too_big = ok;
  too_big.instrs[2].tiles_x = 40;  // 160 pixels wide
  CHECK_FALSE(validate(too_big).empty());

  Program far_param = ok;
  far_param.instrs[3].param = static_cast<uint32_t>(ok.config.param_mem_bytes / kParamBytesPerBiasByte);
  CHECK_FALSE(validate(far_param).empty());
}
