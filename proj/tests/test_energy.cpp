// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>

#include "bpsim/energy.hpp"

using namespace bpsim;
using namespace bpsim::energy;
using Catch::Approx;

TEST_CASE("per-MACC energy reproduces the default table breakdown") {
  EnergyTable t;
  bitpart::PartitionScheme scheme(8, 2);
  auto e = macc_energy_8b(t, scheme, 8, 32);

  // (8*32*5.1 + 1660) / 256 = 11.584; printed values are 11.6 and 185.3.
  CHECK(e.per_partition_fj == Approx(11.584375));
  CHECK(std::abs(e.per_partition_fj - 11.6) / 11.6 < 0.005);
  CHECK(e.per_8b_fj == Approx(16.0 * e.per_partition_fj));
  CHECK(std::abs(e.per_8b_fj - 185.3) / 185.3 < 0.005);

  // Digital baseline ratio: 1 pJ / 185.35 fJ = 5.4x.
  const double ratio = t.digital_macc_8b_pj * 1000.0 / e.per_8b_fj;
  CHECK(std::abs(ratio - 5.4) / 5.4 < 0.02);

  EnergyTable no_adc = t;
  no_adc.adc_conversion_fj = 0.0;
  CHECK(macc_energy_8b(no_adc, scheme, 8, 32).per_partition_fj == Approx(5.1));
}

TEST_CASE("window energy") {
  EnergyTable t;
  CHECK(window_energy_fj(t, 8, 32) == Approx(2965.6));
  CHECK(window_energy_fj(t, 1, 1) == Approx(1665.1));
  EnergyTable zero_macc = t;
  zero_macc.macc_2b_fj = 0.0;
  CHECK(window_energy_fj(zero_macc, 8, 32) == Approx(1660.0));

  // Linear in n and m.
  CHECK(window_energy_fj(t, 16, 32) - t.adc_conversion_fj ==
        Approx(2.0 * (window_energy_fj(t, 8, 32) - t.adc_conversion_fj)));
  CHECK_THROWS_AS(window_energy_fj(t, 0, 1), ContractViolation);
}

TEST_CASE("report accumulation") {
  CHECK(accumulate_report({}) == EnergyReport{});

  // 64 bytes at 10 pJ/B = 640 pJ = 6.4e8 aJ.
  EnergyTable t;
  std::vector<CostedEvent> one{{EnergyCategory::kDram, 64 * t.dram_aj_per_byte()}};
  CHECK(accumulate_report(one).dram_aj == 640'000'000);

  Rng rng(0xeeee);
  std::vector<CostedEvent> events;
  for (int i = 0; i < 500; ++i)
    events.push_back({static_cast<EnergyCategory>(rng.next_int(0, 3)), rng.next_int(0, 1 << 20)});

  // Brute-force per-category sums.
  std::int64_t sums[4] = {0, 0, 0, 0};
  for (const auto& e : events) sums[static_cast<int>(e.category)] += e.attojoules;
  auto r = accumulate_report(events);
  CHECK(r.compute_aj == sums[0]);
  CHECK(r.onchip_memory_aj == sums[1]);
  CHECK(r.interconnect_aj == sums[2]);
  CHECK(r.dram_aj == sums[3]);
  CHECK(r.total_aj() == sums[0] + sums[1] + sums[2] + sums[3]);

  // Reordering leaves totals bit-identical.
  auto shuffled = events;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[rng.next_int(0, static_cast<std::int64_t>(i) - 1)]);
  CHECK(accumulate_report(shuffled) == r);

  // Merge is an exact monoid.
  std::vector<CostedEvent> lo(events.begin(), events.begin() + 250);
  std::vector<CostedEvent> hi(events.begin() + 250, events.end());
  auto merged = accumulate_report(lo);
  merged.merge(accumulate_report(hi));
  CHECK(merged == r);
}

TEST_CASE("category tags") {
  CHECK(category_from_name("dram") == EnergyCategory::kDram);
  CHECK(category_name(EnergyCategory::kInterconnect) == std::string("interconnect"));
  CHECK_THROWS_AS(category_from_name("leakage"), ContractViolation);
}

TEST_CASE("report serialization has the fixed layout") {
  EnergyReport r;
  r.compute_aj = 1'000'000'000'000;  // 1 uJ
  auto table = to_table(r);
  CHECK(table.find("category\tjoules\n") == 0);
  CHECK(table.find("compute\t1.000000000e-06") != std::string::npos);
  CHECK(table.find("total\t1.000000000e-06") != std::string::npos);
  // Category rows appear in the fixed order.
  CHECK(table.find("compute") < table.find("onchip_memory"));
  CHECK(table.find("onchip_memory") < table.find("interconnect"));
  CHECK(table.find("interconnect") < table.find("dram"));
}
