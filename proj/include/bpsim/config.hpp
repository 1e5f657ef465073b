// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// config.hpp - the run configuration: a flat hierarchical key=value file
// (dotted keys, '#' comments) plus command-line overrides, with every
// default pinned to the nominal operating point (n=8, m=32,
// 2-bit partitions, 16 vaults x 4 cores, 10-bit 15 MS/s ADC, 500 MHz).
// Key reference in docs/config_format.md.

#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bpsim/arch.hpp"
#include "bpsim/common.hpp"
#include "bpsim/energy.hpp"
#include "bpsim/sim.hpp"

namespace bpsim::config {

class RunConfig {
public:
  RunConfig() = default;

  static RunConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, "cannot open config file");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str(), path);
  }

  static RunConfig from_text(const std::string& text, const std::string& filename) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        bool blank = true;
        for (char ch : line) blank &= std::isspace(static_cast<unsigned char>(ch)) != 0;
        if (blank) continue;
        throw ParseError(filename + ":" + std::to_string(lineno), "expected key = value");
      }
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ParseError(filename + ":" + std::to_string(lineno), "empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  // Command-line overrides win over the file.
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void apply_overrides(const std::vector<std::string>& assignments) {
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos || eq == 0)
        throw ParseError("--set " + a, "expected key=value");
      set(a.substr(0, eq), a.substr(eq + 1));
    }
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }

  std::int64_t integer(const std::string& key, std::int64_t dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      std::size_t pos = 0;
      const std::int64_t v = std::stoll(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ParseError(key, "not an integer: '" + it->second + "'");
    }
  }

  double real(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument(it->second);
      return v;
    } catch (const std::exception&) {
      throw ParseError(key, "not a number: '" + it->second + "'");
    }
  }

  bool boolean(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ParseError(key, "not a boolean: '" + it->second + "'");
  }

  std::vector<std::int64_t> integer_list(const std::string& key,
                                         std::vector<std::int64_t> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<std::int64_t> out;
    std::istringstream in(it->second);
    std::string tok;
    while (std::getline(in, tok, ',')) {
      try {
        out.push_back(std::stoll(tok));
      } catch (const std::exception&) {
        throw ParseError(key, "not an integer list: '" + it->second + "'");
      }
    }
    if (out.empty()) throw ParseError(key, "empty list");
    return out;
  }

  // -- assembled objects -----------------------------------------------------

  arch::ChipConfig chip() const {
    arch::ChipConfig c;
    c.vaults = static_cast<int>(integer("chip.vaults", 16));
    c.cores_per_vault = static_cast<int>(integer("chip.cores_per_vault", 4));
    c.frequency_hz = real("chip.frequency_mhz", 500.0) * 1e6;
    c.bus_bytes_per_cycle = integer("chip.bus_bytes_per_cycle", 32);
    c.dram.bytes_per_cycle = integer("chip.dram_bytes_per_cycle", 32);
    c.dram.latency_cycles = integer("chip.dram_latency_cycles", 64);
    c.macc.n_lanes = static_cast<int>(integer("macc.n_lanes", 8));
    c.macc.m_cycles = static_cast<int>(integer("macc.m_cycles", 32));
    c.macc.adc.resolution_bits = static_cast<int>(integer("adc.resolution_bits", 10));
    c.macc.adc.sample_rate = real("adc.sample_rate_msps", 15.0) * 1e6;
    c.macc.adc.fullscale = real("adc.fullscale", 0.0);
    c.adc_rate_grace = real("adc.rate_grace", 0.05);
    c.adc_rate_energy_exponent = real("adc.rate_energy_exponent", 2.0);
    c.mswagg.scheme = bitpart::PartitionScheme(
        static_cast<int>(integer("scheme.operand_bits", 8)),
        static_cast<int>(integer("scheme.partition_bits", 2)));
    c.mswagg.output_register_bits = static_cast<int>(integer("core.register_bits", 32));
    c.core.rows = static_cast<int>(integer("core.rows", 8));
    c.core.cols = static_cast<int>(integer("core.cols", 4));
    c.core.digital_throughput = integer("core.digital_throughput", 16);

    // Scratchpads default to an even split of the chip's on-chip memory
    // across cores (ibuf : wbuf : obuf = 2 : 6 : 1); explicit keys win.
    const std::int64_t onchip_kb = integer("chip.onchip_memory_kb", 9216);
    const std::int64_t per_core = onchip_kb * 1024 / (c.vaults * c.cores_per_vault);
    c.core.ibuf_bytes = integer("core.ibuf_bytes", per_core * 2 / 9);
    c.core.obuf_bytes = integer("core.obuf_bytes", per_core / 9);
    c.core.wbuf_bytes_per_mswagg =
        integer("core.wbuf_bytes_per_mswagg", per_core * 6 / 9 / c.core.mswaggs());
    c.validate();
    return c;
  }

  energy::EnergyTable energy_table() const {
    energy::EnergyTable t;
    t.macc_2b_fj = real("energy.macc_2b_fj", 5.1);
    t.adc_conversion_fj = real("energy.adc_conversion_fj", 1660.0);
    t.digital_macc_8b_pj = real("energy.digital_macc_8b_pj", 1.0);
    t.sram_fj_per_byte = real("energy.sram_fj_per_byte", 80.0);
    t.dram_pj_per_byte = real("energy.dram_pj_per_byte", 10.0);
    t.bus_fj_per_byte = real("energy.bus_fj_per_byte", 40.0);
    t.validate();
    return t;
  }

  analog::CapacitorBank bank() const {
    analog::CapacitorBank b;
    b.cx = real("analog.cx_ff", 3.0) * 1e-15;
    b.cw = real("analog.cw_ff", 1.0) * 1e-15;
    b.cacc = real("analog.cacc_ff", 24.0) * 1e-15;
    b.validate();
    return b;
  }

  analog::SupplyThermalModel supply() const {
    analog::SupplyThermalModel s;
    s.vdd_nominal = real("analog.vdd", 1.0);
    s.vdd_sigma = real("analog.vdd_sigma", 0.0);
    s.t_nominal = real("analog.t_nominal", 329.0);
    s.t_sigma = real("analog.t_sigma", (358.0 - 300.0) / 6.0);
    s.vdd_clamp_rel = real("analog.vdd_clamp_rel", 0.20);
    return s;
  }

  analog::ProcessModel process() const {
    analog::ProcessModel p;
    p.cap_mismatch_sigma = real("analog.process_sigma", 0.01);
    p.clamp = real("analog.process_clamp", 0.06);
    return p;
  }

  sim::SimOptions sim_options() const {
    sim::SimOptions o;
    const std::string mode = str("sim.mode", "ideal");
    if (mode == "ideal")
      o.mode = sim::SimOptions::Mode::kIdeal;
    else if (mode == "nonideal")
      o.mode = sim::SimOptions::Mode::kNonideal;
    else
      throw ParseError("sim.mode", "must be ideal or nonideal");
    o.seed = static_cast<std::uint64_t>(integer("sim.seed", 1));
    o.thermal_noise = boolean("noise.thermal", true);
    o.computational_error = boolean("noise.computational", false);
    o.adc_quantization = boolean("noise.adc_quantization", false);
    o.pvt = boolean("noise.pvt", false);
    o.quadrature_noise = boolean("noise.quadrature", false);
    o.sigma_acc = real("analog.sigma_acc", -1.0);
    o.bank = bank();
    o.supply = supply();
    o.process = process();
    return o;
  }

  const std::map<std::string, std::string>& raw() const { return values_; }

private:
  std::map<std::string, std::string> values_;
};

}  // namespace bpsim::config
