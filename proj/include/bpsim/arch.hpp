// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// arch.hpp - the hierarchy's configuration records: a wide MACC group with
// its shared ADC, the aggregator grid, the systolic core with its
// scratchpads, and the vault-clustered chip. Cycle statistics live here too.

#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>

#include "bpsim/analog.hpp"
#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"

namespace bpsim::arch {

struct MsBpMaccConfig {
  int n_lanes = 8;   // parallel low-bitwidth MACC lanes sharing one ADC
  int m_cycles = 32; // accumulation cycles per conversion window
  analog::AdcModel adc;

  // A window occupies m MACC cycles plus one aggregation cycle; the
  // conversion itself takes the same m+1 cycles and overlaps the next
  // window, so full windows pipeline with zero bubbles.
  int window_period() const { return m_cycles + 1; }

  void validate() const {
    if (n_lanes < 1 || m_cycles < 1)
      throw ContractViolation("MsBpMaccConfig: n_lanes and m_cycles must be >= 1");
    if (adc.resolution_bits < 1 || adc.sample_rate <= 0)
      throw ContractViolation("MsBpMaccConfig: invalid ADC");
  }
};

struct MswaggConfig {
  bitpart::PartitionScheme scheme;
  int output_register_bits = 32;  // digital accumulation width; 64 optional

  // One MS-BPMACC per (p, q) partition-significance pair.
  int grid() const {
    const int p = scheme.partitions_per_operand();
    return p * p;
  }

  void validate() const {
    scheme.validate();
    if (output_register_bits != 32 && output_register_bits != 64)
      throw ContractViolation("MswaggConfig: register width must be 32 or 64");
  }
};

struct CoreConfig {
  int rows = 8;
  int cols = 4;
  std::int64_t ibuf_bytes = 32 * 1024;            // shared across columns
  std::int64_t wbuf_bytes_per_mswagg = 3 * 1024;  // private per aggregator
  std::int64_t obuf_bytes = 16 * 1024;            // shared across rows
  std::int64_t digital_throughput = 16;           // pool/act/norm elements per cycle

  int mswaggs() const { return rows * cols; }

  void validate() const {
    if (rows < 1 || cols < 1) throw ContractViolation("CoreConfig: rows and cols must be >= 1");
    if (ibuf_bytes < 2 || wbuf_bytes_per_mswagg < 2 || obuf_bytes < 2)
      throw ContractViolation("CoreConfig: scratchpads too small to double-buffer");
    if (digital_throughput < 1)
      throw ContractViolation("CoreConfig: digital throughput must be >= 1");
  }
};

struct DramConfig {
  std::int64_t bytes_per_cycle = 32;  // per-vault bandwidth
  std::int64_t latency_cycles = 64;
};

struct ChipConfig {
  int vaults = 16;
  int cores_per_vault = 4;
  std::int64_t bus_bytes_per_cycle = 32;
  double frequency_hz = 500e6;
  MsBpMaccConfig macc;
  MswaggConfig mswagg;
  CoreConfig core;
  DramConfig dram;

  int total_cores() const { return vaults * cores_per_vault; }

  std::int64_t total_partition_lanes() const {
    return static_cast<std::int64_t>(vaults) * cores_per_vault * core.mswaggs() *
           mswagg.grid() * macc.n_lanes;
  }

  // Full-width MACC slots per cycle: one per lane per aggregator.
  std::int64_t total_macc_slots() const {
    return static_cast<std::int64_t>(vaults) * cores_per_vault * core.mswaggs() * macc.n_lanes;
  }

  std::int64_t effective_bandwidth() const {
    return std::min(bus_bytes_per_cycle, dram.bytes_per_cycle);
  }

  double required_adc_rate() const { return frequency_hz / macc.window_period(); }

  // DSE points whose window cadence demands a faster converter than the
  // reference pay a superlinear per-conversion energy penalty; the grace
  // band absorbs rounding of the nominal reference rate.
  double adc_energy_scale() const {
    const double ratio = required_adc_rate() / macc.adc.sample_rate;
    if (ratio <= 1.0 + adc_rate_grace) return 1.0;
    return std::pow(ratio, adc_rate_energy_exponent);
  }

  double adc_rate_grace = 0.05;
  double adc_rate_energy_exponent = 2.0;

  void validate() const {
    if (vaults < 1 || vaults > 16) throw ContractViolation("ChipConfig: vaults must be 1..16");
    if (cores_per_vault < 1 || cores_per_vault > 8)
      throw ContractViolation("ChipConfig: cores_per_vault must be 1..8");
    if (bus_bytes_per_cycle < 1 || dram.bytes_per_cycle < 1 || dram.latency_cycles < 0)
      throw ContractViolation("ChipConfig: invalid interconnect/DRAM parameters");
    if (frequency_hz <= 0) throw ContractViolation("ChipConfig: frequency must be positive");
    macc.validate();
    mswagg.validate();
    core.validate();
  }

  // FNV-1a over the canonical parameter string; stamped into program headers
  // so a program cannot silently run on a different chip shape.
  std::uint64_t config_hash() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "v%d c%d r%d cl%d n%d m%d p%d/%d ib%lld wb%lld ob%lld",
                  vaults, cores_per_vault, core.rows, core.cols, macc.n_lanes, macc.m_cycles,
                  mswagg.scheme.operand_bits, mswagg.scheme.partition_bits,
                  static_cast<long long>(core.ibuf_bytes),
                  static_cast<long long>(core.wbuf_bytes_per_mswagg),
                  static_cast<long long>(core.obuf_bytes));
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char* p = buf; *p; ++p) {
      h ^= static_cast<unsigned char>(*p);
      h *= 0x100000001b3ull;
    }
    return h;
  }
};

struct CycleStats {
  std::uint64_t total_cycles = 0;
  std::uint64_t bus_busy_cycles = 0;
  std::uint64_t mswagg_busy_cycles = 0;
  std::uint64_t digital_busy_cycles = 0;
  std::uint64_t compute_stall_cycles = 0;
  std::uint64_t adc_conversions = 0;  // aggregated conversion windows
  std::uint64_t macc_substeps = 0;    // sub-vector MACC cycles across aggregators
  std::uint64_t dram_bytes_read = 0;
  std::uint64_t dram_bytes_written = 0;
  std::uint64_t scratchpad_bytes_written = 0;
  std::uint64_t scratchpad_bytes_read = 0;
  std::uint64_t obuf_element_writes = 0;
  std::uint64_t sm_saturations = 0;
  std::uint64_t adc_clamps = 0;
  std::uint64_t register_overflows = 0;
  std::uint64_t comm_blocks_executed = 0;
  std::uint64_t compute_blocks_executed = 0;

  std::uint64_t dram_bytes() const { return dram_bytes_read + dram_bytes_written; }

  double bus_utilization() const {
    return total_cycles ? static_cast<double>(bus_busy_cycles) / total_cycles : 0.0;
  }
};

inline std::string stats_table(const CycleStats& s) {
  std::string out = "stat\tvalue\n";
  auto row = [&out](const char* k, std::uint64_t v) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%s\t%llu\n", k, static_cast<unsigned long long>(v));
    out += buf;
  };
  row("total_cycles", s.total_cycles);
  row("bus_busy_cycles", s.bus_busy_cycles);
  row("mswagg_busy_cycles", s.mswagg_busy_cycles);
  row("digital_busy_cycles", s.digital_busy_cycles);
  row("compute_stall_cycles", s.compute_stall_cycles);
  row("adc_conversions", s.adc_conversions);
  row("macc_substeps", s.macc_substeps);
  row("dram_bytes_read", s.dram_bytes_read);
  row("dram_bytes_written", s.dram_bytes_written);
  row("scratchpad_bytes_written", s.scratchpad_bytes_written);
  row("scratchpad_bytes_read", s.scratchpad_bytes_read);
  row("obuf_element_writes", s.obuf_element_writes);
  row("sm_saturations", s.sm_saturations);
  row("adc_clamps", s.adc_clamps);
  row("register_overflows", s.register_overflows);
  row("comm_blocks_executed", s.comm_blocks_executed);
  row("compute_blocks_executed", s.compute_blocks_executed);
  return out;
}

}  // namespace bpsim::arch
