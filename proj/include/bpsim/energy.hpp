// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// energy.hpp - closed-form energy accounting. Reports are kept in integer
// attojoules so totals are exact, reorder-invariant, and identical between
// the compiler's estimator and the simulator.

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"

namespace bpsim::energy {

struct EnergyTable {
  double macc_2b_fj = 5.1;          // one low-bitwidth charge-domain MACC
  double adc_conversion_fj = 1660.0;  // one conversion (per MS-BPMACC window)
  double digital_macc_8b_pj = 1.0;  // digital baseline / digital-unit op
  // Placeholder per-byte costs; the source platform adopts memory-system
  // numbers by reference without printing them. Config-overridable.
  double sram_fj_per_byte = 80.0;
  double dram_pj_per_byte = 10.0;
  double bus_fj_per_byte = 40.0;

  void validate() const {
    const double entries[] = {macc_2b_fj,       adc_conversion_fj, digital_macc_8b_pj,
                              sram_fj_per_byte, dram_pj_per_byte,  bus_fj_per_byte};
    for (double e : entries)
      if (e < 0.0 || !std::isfinite(e))
        throw ContractViolation("EnergyTable: entries must be finite and >= 0");
  }

  std::int64_t macc_2b_aj() const { return std::llround(macc_2b_fj * 1e3); }
  std::int64_t adc_conversion_aj() const { return std::llround(adc_conversion_fj * 1e3); }
  std::int64_t digital_op_aj() const { return std::llround(digital_macc_8b_pj * 1e6); }
  std::int64_t sram_aj_per_byte() const { return std::llround(sram_fj_per_byte * 1e3); }
  std::int64_t dram_aj_per_byte() const { return std::llround(dram_pj_per_byte * 1e6); }
  std::int64_t bus_aj_per_byte() const { return std::llround(bus_fj_per_byte * 1e3); }
};

// Energy of one conversion window on one MACC group: n*m MACCs plus the
// shared conversion (2,965.6 fJ at the defaults).
inline double window_energy_fj(const EnergyTable& t, int n, int m) {
  if (n < 1 || m < 1) throw ContractViolation("window_energy: n and m must be >= 1");
  return static_cast<double>(n) * static_cast<double>(m) * t.macc_2b_fj + t.adc_conversion_fj;
}

struct MaccEnergy {
  double per_partition_fj = 0.0;  // per low-bitwidth MACC, conversion amortized
  double per_8b_fj = 0.0;         // per full-width MACC under the scheme
};

// Amortized MACC energy: per-partition = window/(n*m); per full-width
// operation = per-partition * partitions^2 (one low-bitwidth MACC per
// partition pair). 11.58 fJ / 185.3 fJ at the defaults.
inline MaccEnergy macc_energy_8b(const EnergyTable& t, const bitpart::PartitionScheme& scheme,
                                 int n, int m) {
  if (static_cast<std::int64_t>(n) * m <= 0)
    throw ContractViolation("macc_energy_8b: n*m must be positive");
  MaccEnergy e;
  e.per_partition_fj = window_energy_fj(t, n, m) / (static_cast<double>(n) * m);
  const double p = static_cast<double>(scheme.partitions_per_operand());
  e.per_8b_fj = e.per_partition_fj * p * p;
  return e;
}

enum class EnergyCategory : int { kCompute = 0, kOnchipMemory = 1, kInterconnect = 2, kDram = 3 };

inline const char* category_name(EnergyCategory c) {
  switch (c) {
    case EnergyCategory::kCompute: return "compute";
    case EnergyCategory::kOnchipMemory: return "onchip_memory";
    case EnergyCategory::kInterconnect: return "interconnect";
    case EnergyCategory::kDram: return "dram";
  }
  throw ContractViolation("unknown energy category");
}

inline EnergyCategory category_from_name(const std::string& name) {
  if (name == "compute") return EnergyCategory::kCompute;
  if (name == "onchip_memory") return EnergyCategory::kOnchipMemory;
  if (name == "interconnect") return EnergyCategory::kInterconnect;
  if (name == "dram") return EnergyCategory::kDram;
  throw ContractViolation("unknown energy category tag: " + name);
}

struct CostedEvent {
  EnergyCategory category;
  std::int64_t attojoules = 0;
};

struct EnergyReport {
  std::int64_t compute_aj = 0;
  std::int64_t onchip_memory_aj = 0;
  std::int64_t interconnect_aj = 0;
  std::int64_t dram_aj = 0;

  std::int64_t total_aj() const {
    // Fixed accumulation order: compute, memory, interconnect, dram.
    return compute_aj + onchip_memory_aj + interconnect_aj + dram_aj;
  }
  double total_joules() const { return static_cast<double>(total_aj()) * 1e-18; }

  void add(EnergyCategory c, std::int64_t aj) {
    switch (c) {
      case EnergyCategory::kCompute: compute_aj += aj; return;
      case EnergyCategory::kOnchipMemory: onchip_memory_aj += aj; return;
      case EnergyCategory::kInterconnect: interconnect_aj += aj; return;
      case EnergyCategory::kDram: dram_aj += aj; return;
    }
    throw ContractViolation("unknown energy category");
  }

  // Reports are a monoid; partial reports from concurrent accumulation merge
  // exactly because the representation is integral.
  EnergyReport& merge(const EnergyReport& other) {
    compute_aj += other.compute_aj;
    onchip_memory_aj += other.onchip_memory_aj;
    interconnect_aj += other.interconnect_aj;
    dram_aj += other.dram_aj;
    return *this;
  }

  bool operator==(const EnergyReport&) const = default;
};

inline EnergyReport accumulate_report(const std::vector<CostedEvent>& events) {
  EnergyReport r;
  for (const auto& e : events) r.add(e.category, e.attojoules);
  return r;
}

// Tabular serialization: one row per category plus total, fixed order.
inline std::string to_table(const EnergyReport& r) {
  auto row = [](const char* name, std::int64_t aj) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%s\t%.9e\n", name, static_cast<double>(aj) * 1e-18);
    return std::string(buf);
  };
  std::string out = "category\tjoules\n";
  out += row("compute", r.compute_aj);
  out += row("onchip_memory", r.onchip_memory_aj);
  out += row("interconnect", r.interconnect_aj);
  out += row("dram", r.dram_aj);
  out += row("total", r.total_aj());
  return out;
}

}  // namespace bpsim::energy
