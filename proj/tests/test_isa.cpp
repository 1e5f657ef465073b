// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "bpsim/isa.hpp"
#include "program_gen.hpp"

using namespace bpsim;
using namespace bpsim::isa;

namespace {
arch::ChipConfig default_chip() {
  arch::ChipConfig chip;
  chip.validate();
  return chip;
}
}  // namespace

TEST_CASE("empty program round-trips header-only") {
  Program p;
  p.chip_hash = default_chip().config_hash();
  auto bytes = encode(p);
  CHECK(bytes.size() == 4 + 1 + 1 + 8 + 4);
  CHECK(decode(bytes) == p);
}

TEST_CASE("one comm + one compute program round-trips byte-identically") {
  Rng rng(1);
  auto chip = default_chip();
  Program p;
  bool made = false;
  while (!made) {
    p = testing::make_random_program(rng, chip);
    made = !p.blocks.empty();
  }
  auto bytes = encode(p);
  auto back = decode(bytes);
  CHECK(back == p);
  CHECK(encode(back) == bytes);
}

TEST_CASE("decode errors name the offset") {
  Program p;
  auto bytes = encode(p);
  bytes[0] = 'X';
  try {
    decode(bytes);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad magic") != std::string::npos);
    CHECK(std::string(e.what()).find("program byte") != std::string::npos);
  }

  auto good = encode(p);
  good.pop_back();  // truncate the block count
  CHECK_THROWS_AS(decode(good), ParseError);

  auto vers = encode(p);
  vers[4] = 99;
  CHECK_THROWS_AS(decode(vers), ParseError);
}

TEST_CASE("generated programs validate cleanly and round-trip") {
  Rng rng(0x15a);
  auto chip = default_chip();
  for (int trial = 0; trial < 200; ++trial) {
    auto p = testing::make_random_program(rng, chip);
    auto diags = validate(p, chip);
    if (!diags.empty()) {
      CAPTURE(trial, diags[0].block_id, diags[0].message);
      FAIL("unexpected diagnostic");
    }
    REQUIRE(decode(encode(p)) == p);
  }
}

TEST_CASE("validate reports dangling dependencies and mask errors") {
  auto chip = default_chip();
  Program p;
  p.chip_hash = chip.config_hash();

  ComputeBlock c;
  c.block_id = 5;
  c.partition_bits = 2;
  c.operand_bits = 8;
  c.accumulation_cycles = 32;
  c.depends_on = {77};  // nowhere
  p.blocks.emplace_back(c);

  auto diags = validate(p, chip);
  bool found = false;
  for (const auto& d : diags)
    found |= d.message.find("unresolved dependency") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate flags capacity violations") {
  auto chip = default_chip();
  Program p;
  p.chip_hash = chip.config_hash();
  CommBlock big;
  big.block_id = 1;
  big.vault_mask = 1;
  big.core_mask = 1;
  big.target = Scratchpad::kIbuf;
  big.chunk_len = static_cast<std::uint32_t>(chip.core.ibuf_bytes);  // > half
  big.count1 = 1;
  big.count2 = 1;
  big.length = big.chunk_len;
  p.blocks.emplace_back(big);

  auto diags = validate(p, chip);
  bool found = false;
  for (const auto& d : diags)
    found |= d.message.find("half-capacity of IBUF") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate flags bank reuse before release and late dependencies") {
  auto chip = default_chip();
  Rng rng(7);
  Program p;
  while (p.blocks.size() < 8) p = testing::make_random_program(rng, chip);

  SECTION("bank reuse") {
    // Duplicate the first fetch at the end: its bank is already released by
    // then, so instead retarget the *same* bank before the release happens.
    auto clone = std::get<CommBlock>(p.blocks[0]);
    clone.block_id = 9000;
    // Insert right after the original fetch, before the releasing compute.
    p.blocks.insert(p.blocks.begin() + 1, clone);
    auto diags = validate(p, chip);
    bool found = false;
    for (const auto& d : diags)
      found |= d.message.find("not yet released") != std::string::npos;
    CHECK(found);
  }

  SECTION("compute before its dependency") {
    // Move the first compute block to the front.
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
      if (std::holds_alternative<ComputeBlock>(p.blocks[i])) {
        auto blk = p.blocks[i];
        p.blocks.erase(p.blocks.begin() + i);
        p.blocks.insert(p.blocks.begin(), blk);
        break;
      }
    }
    auto diags = validate(p, chip);
    bool found = false;
    for (const auto& d : diags)
      found |= d.message.find("scheduled after it") != std::string::npos;
    CHECK(found);
  }

  SECTION("duplicate ids") {
    auto clone = p.blocks[0];
    p.blocks.push_back(clone);
    auto diags = validate(p, chip);
    bool found = false;
    for (const auto& d : diags) found |= d.message.find("duplicate block id") != std::string::npos;
    CHECK(found);
  }

  SECTION("chip hash mismatch") {
    p.chip_hash ^= 0xdead;
    auto diags = validate(p, chip);
    bool found = false;
    for (const auto& d : diags) found |= d.message.find("hash mismatch") != std::string::npos;
    CHECK(found);
  }
}

TEST_CASE("single-byte corruption never silently accepts a dangling dependency") {
  Rng rng(0xc0de);
  auto chip = default_chip();
  int rejected = 0, flagged = 0, benign = 0, attempts = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Program p = testing::make_random_program(rng, chip);
    while (p.blocks.empty()) p = testing::make_random_program(rng, chip);
    ++attempts;
    auto bytes = encode(p);
    auto corrupt = bytes;
    const std::size_t pos = static_cast<std::size_t>(rng.next_int(0, bytes.size() - 1));
    corrupt[pos] ^= static_cast<std::uint8_t>(1u << rng.next_int(0, 7));
    Program q;
    try {
      q = decode(corrupt);
    } catch (const ParseError&) {
      ++rejected;
      continue;
    }
    auto diags = validate(q, chip);
    if (!diags.empty()) {
      ++flagged;
      continue;
    }
    ++benign;
    // Passed validation: independently confirm no dangling references.
    std::vector<std::uint32_t> ids;
    for (const auto& b : q.blocks) ids.push_back(block_id(b));
    for (const auto& b : q.blocks)
      if (const auto* c = std::get_if<ComputeBlock>(&b))
        for (auto dep : c->depends_on)
          CHECK(std::find(ids.begin(), ids.end(), dep) != ids.end());
  }
  CHECK(rejected + flagged + benign == attempts);
  CHECK(attempts == 300);
  CHECK(rejected + flagged > 0);
}

TEST_CASE("disassembly mentions every block") {
  Rng rng(3);
  auto chip = default_chip();
  Program p;
  while (p.blocks.empty()) p = testing::make_random_program(rng, chip);
  auto text = disassemble(p);
  CHECK(text.find("comm") != std::string::npos);
  CHECK(text.find("compute") != std::string::npos);
  CHECK(text.find("dot(fc)") != std::string::npos);
}

TEST_CASE("references after release are flagged") {
  Rng rng(42);
  auto chip = default_chip();
  Program p;
  while (p.blocks.size() < 8) p = testing::make_random_program(rng, chip);
  // Make a later compute block depend on a tile the first compute released.
  const auto& first_compute = std::get<ComputeBlock>(p.blocks[2]);
  const std::uint32_t released_tile = first_compute.depends_on[0];
  for (std::size_t i = 4; i < p.blocks.size(); ++i)
    if (auto* c = std::get_if<ComputeBlock>(&p.blocks[i])) {
      c->depends_on.push_back(released_tile);
      break;
    }
  auto diags = validate(p, chip);
  bool found = false;
  for (const auto& d : diags)
    found |= d.message.find("after its release") != std::string::npos ||
             d.message.find("not in depends_on") != std::string::npos ||
             d.message.find("deliver") != std::string::npos;
  CHECK(found);
}
