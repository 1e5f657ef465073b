// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"

using namespace bpsim;
using namespace bpsim::bitpart;

namespace {

QuantizedVector qv(const std::vector<std::int64_t>& vals, int ob, int pb) {
  return QuantizedVector::from_magnitudes(vals, PartitionScheme(ob, pb));
}

}  // namespace

TEST_CASE("to_sign_magnitude basic conversions") {
  auto p = to_sign_magnitude(13, 8);
  CHECK(p.value.sign == +1);
  CHECK(p.value.magnitude == 13);
  CHECK_FALSE(p.saturated);

  auto n = to_sign_magnitude(-9, 8);
  CHECK(n.value.sign == -1);
  CHECK(n.value.magnitude == 9);
  CHECK_FALSE(n.saturated);

  // -128 needs 8 magnitude bits, one more than sign-magnitude has.
  auto s = to_sign_magnitude(-128, 8);
  CHECK(s.value.sign == -1);
  CHECK(s.value.magnitude == 127);
  CHECK(s.saturated);

  auto z = to_sign_magnitude(0, 8);
  CHECK(z.value.sign == +1);
  CHECK(z.value.magnitude == 0);

  CHECK_THROWS_AS(to_sign_magnitude(129, 8), ContractViolation);
}

TEST_CASE("bit_partition splits magnitudes into significance groups") {
  // 13 = 1101b: low 2-bit digit 01b, high digit 11b.
  auto groups = bit_partition(qv({13}, 4, 2));
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].significance == 0);
  CHECK(groups[0].partitions == std::vector<std::uint8_t>{1});
  CHECK(groups[1].significance == 2);
  CHECK(groups[1].partitions == std::vector<std::uint8_t>{3});

  auto zeros = bit_partition(qv({0, 0}, 8, 2));
  REQUIRE(zeros.size() == 4);
  for (const auto& g : zeros)
    for (auto part : g.partitions) CHECK(part == 0);

  // Saturated magnitude 127; radix-4 digits of 127 are [3,3,3,1].
  CHECK_THROWS_AS(to_sign_magnitude(255, 8), ContractViolation);
  auto sat = to_sign_magnitude(-128, 8);
  auto g127 = bit_partition(
      QuantizedVector{{sat.value}, PartitionScheme(8, 2)});
  REQUIRE(g127.size() == 4);
  CHECK(g127[0].partitions == std::vector<std::uint8_t>{3});
  CHECK(g127[1].partitions == std::vector<std::uint8_t>{3});
  CHECK(g127[2].partitions == std::vector<std::uint8_t>{3});
  CHECK(g127[3].partitions == std::vector<std::uint8_t>{1});
  CHECK(g127[0].significance == 0);
  CHECK(g127[1].significance == 2);
  CHECK(g127[2].significance == 4);
  CHECK(g127[3].significance == 6);
}

TEST_CASE("bit_partition reassembly recovers magnitudes and replicates signs") {
  Rng rng(0x5eed);
  for (int trial = 0; trial < 200; ++trial) {
    const int ob = (trial % 2) ? 8 : 4;
    const int pbs[] = {1, 2, 4, 8};
    const int pb = pbs[trial % 4];
    if (ob % pb != 0 || pb > ob) continue;
    PartitionScheme scheme(ob, pb);
    std::vector<std::int64_t> vals(1 + rng.next_int(0, 31));
    for (auto& x : vals) x = rng.next_int(-scheme.digit_capacity(), scheme.digit_capacity());
    auto v = QuantizedVector::from_magnitudes(vals, scheme);
    auto groups = bit_partition(v);
    REQUIRE(static_cast<int>(groups.size()) == scheme.partitions_per_operand());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      std::int64_t mag = 0;
      for (const auto& g : groups) {
        mag += static_cast<std::int64_t>(g.partitions[i]) << g.significance;
        CHECK(g.signs[i] == v.elements[i].sign);
        CHECK(g.partitions[i] < scheme.partition_radix());
      }
      CHECK(mag == v.elements[i].magnitude);
    }
  }
}

TEST_CASE("wide_bp_dot matches direct products on the worked examples") {
  // Oracle: 13*9 + 9*13 = 234.
  CHECK(wide_bp_dot(qv({13, 9}, 4, 2), qv({9, 13}, 4, 2)) == 234);

  // Annihilator.
  CHECK(wide_bp_dot(qv({13}, 4, 2), qv({0}, 4, 2)) == 0);

  // 13*9 = 117 decomposed as (3*2<<4)+(3*1<<2)+(1*2<<2)+(1*1<<0).
  CHECK(wide_bp_dot(qv({13}, 4, 2), qv({9}, 4, 2)) == 117);
  CHECK((3 * 2 << 4) + (3 * 1 << 2) + (1 * 2 << 2) + (1 * 1 << 0) == 117);
}

TEST_CASE("wide_bp_dot rejects mismatched operands") {
  CHECK_THROWS_AS(wide_bp_dot(qv({1, 2}, 8, 2), qv({1}, 8, 2)), ContractViolation);
  CHECK_THROWS_AS(wide_bp_dot(qv({1}, 8, 2), qv({1}, 8, 4)), ContractViolation);
}

TEST_CASE("reaggregate shift-and-add") {
  // Same 117 oracle, as explicit partials.
  std::vector<GroupPartial> partials{{2, 2, 6}, {2, 0, 3}, {0, 2, 2}, {0, 0, 1}};
  CHECK(reaggregate(partials) == 117);

  CHECK(reaggregate({{0, 0, 42}}) == 42);
  CHECK(reaggregate({{0, 0, 0}, {0, 2, 0}, {2, 0, 0}, {2, 2, 0}}) == 0);

  CHECK_THROWS_AS(reaggregate({{0, 0, 1}, {0, 0, 2}}), ContractViolation);
}

TEST_CASE("exactness property against plain integer dot products") {
  Rng rng(0xb17);
  const int operand_widths[] = {4, 8};
  const int partition_widths[] = {1, 2, 4, 8};
  for (int trial = 0; trial < 500; ++trial) {
    const int ob = operand_widths[rng.next_int(0, 1)];
    const int pb = partition_widths[rng.next_int(0, 3)];
    if (pb > ob || ob % pb != 0) continue;
    PartitionScheme scheme(ob, pb);
    const std::int64_t len = rng.next_int(1, 256);
    std::vector<std::int64_t> xv(len), wv(len);
    for (auto& x : xv) x = rng.next_int(-scheme.digit_capacity(), scheme.digit_capacity());
    for (auto& w : wv) w = rng.next_int(-scheme.digit_capacity(), scheme.digit_capacity());
    auto x = QuantizedVector::from_magnitudes(xv, scheme);
    auto w = QuantizedVector::from_magnitudes(wv, scheme);
    std::int64_t expect = 0;
    for (std::int64_t i = 0; i < len; ++i) expect += xv[i] * wv[i];
    REQUIRE(wide_bp_dot(x, w) == expect);
    REQUIRE(direct_dot(x, w) == expect);
    REQUIRE(wide_bp_dot(w, x) == expect);  // commutativity
  }
}

TEST_CASE("scheme independence") {
  Rng rng(0xdeed);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t len = rng.next_int(1, 64);
    std::vector<std::int64_t> xv(len), wv(len);
    for (auto& x : xv) x = rng.next_int(-127, 127);
    for (auto& w : wv) w = rng.next_int(-127, 127);
    std::int64_t first = 0;
    bool have_first = false;
    for (int pb : {1, 2, 4, 8}) {
      PartitionScheme scheme(8, pb);
      auto r = wide_bp_dot(QuantizedVector::from_ints(xv, scheme),
                           QuantizedVector::from_ints(wv, scheme));
      if (!have_first) {
        first = r;
        have_first = true;
      } else {
        REQUIRE(r == first);
      }
    }
  }
}

TEST_CASE("group-count law") {
  PartitionScheme s82(8, 2);
  CHECK(s82.partitions_per_operand() == 4);
  auto partials = group_partials(qv({1, 2, 3}, 8, 2), qv({3, 2, 1}, 8, 2));
  CHECK(partials.size() == 16);  // 16 MS-BPMACCs per aggregator at 8b/2b

  PartitionScheme s81(8, 1);
  CHECK(group_partials(qv({5}, 8, 1), qv({5}, 8, 1)).size() == 64);
}

TEST_CASE("shift_sum constant") {
  CHECK(shift_sum(PartitionScheme(8, 2)) == 85);  // 1 + 4 + 16 + 64
  CHECK(shift_sum(PartitionScheme(8, 8)) == 1);
  CHECK(shift_sum(PartitionScheme(4, 2)) == 5);
  CHECK(shift_sum(PartitionScheme(8, 1)) == 255);
}

TEST_CASE("32-bit accumulator mode flags overflow") {
  PartitionScheme scheme(8, 2);
  std::vector<std::int64_t> big(40000, 127), alt(40000, 127);
  auto x = QuantizedVector::from_ints(big, scheme);
  auto w = QuantizedVector::from_ints(alt, scheme);
  auto checked = wide_bp_dot_checked32(x, w);
  // 40000 * 127 * 127 = 645_160_000 < 2^31 - 1: no overflow, exact value.
  CHECK_FALSE(checked.overflow);
  CHECK(checked.value == 645160000);

  std::vector<std::int64_t> huge(200000, 127);
  auto x2 = QuantizedVector::from_ints(huge, scheme);
  auto r2 = wide_bp_dot_checked32(x2, x2);
  CHECK(r2.overflow);
  CHECK(r2.value == std::int64_t{200000} * 127 * 127);  // value still exact in 64-bit
}

TEST_CASE("zero canonicalization makes equality testable") {
  auto a = to_sign_magnitude(0, 8).value;
  auto b = SignMagnitudeValue{+1, 0};
  CHECK(a == b);
  QuantizedVector bad{{SignMagnitudeValue{-1, 0}}, PartitionScheme(8, 2)};
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}
