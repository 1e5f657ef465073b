// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// dse.hpp - the design-space sweep: a finite grid over partition width,
// lane count n, accumulation depth m, and cores per vault. Every point
// compiles and simulates the whole bundled corpus independently; infeasible
// points are reported as rows, not failures. Rows come out in grid order no
// matter how many workers run.

#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <thread>
#include <vector>

#include "bpsim/compiler.hpp"
#include "bpsim/config.hpp"
#include "bpsim/energy.hpp"
#include "bpsim/model.hpp"
#include "bpsim/sim.hpp"

namespace bpsim::dse {

struct GridPoint {
  int partition_bits = 2;
  int n_lanes = 8;
  int m_cycles = 32;
  int cores_per_vault = 4;
};

struct Row {
  GridPoint point;
  bool feasible = false;
  std::string error;
  std::int64_t cycles = 0;
  std::int64_t energy_aj = 0;
  double adc_rate_required_msps = 0.0;
  double macc_energy_8b_fj = 0.0;

  unsigned __int128 edp() const {
    return static_cast<unsigned __int128>(cycles) * static_cast<unsigned __int128>(energy_aj);
  }
};

struct SweepResult {
  std::vector<Row> rows;  // grid order
  int best_index = -1;    // per the requested metric
};

inline std::vector<GridPoint> grid_points(const config::RunConfig& cfg) {
  const auto pbs = cfg.integer_list("dse.partition_bits", {2});
  const auto ns = cfg.integer_list("dse.n_lanes", {8});
  const auto ms = cfg.integer_list("dse.m_cycles", {32});
  const auto cores = cfg.integer_list("dse.cores_per_vault", {4});
  std::vector<GridPoint> out;
  for (auto pb : pbs)
    for (auto n : ns)
      for (auto m : ms)
        for (auto c : cores)
          out.push_back({static_cast<int>(pb), static_cast<int>(n), static_cast<int>(m),
                         static_cast<int>(c)});
  return out;
}

// The point's chip is the base config with the four knobs overridden; the
// scratchpad split re-derives from the fixed on-chip memory budget unless
// the base config pinned explicit sizes.
inline arch::ChipConfig chip_for(const config::RunConfig& base, const GridPoint& p) {
  config::RunConfig cfg = base;
  cfg.set("scheme.partition_bits", std::to_string(p.partition_bits));
  cfg.set("macc.n_lanes", std::to_string(p.n_lanes));
  cfg.set("macc.m_cycles", std::to_string(p.m_cycles));
  cfg.set("chip.cores_per_vault", std::to_string(p.cores_per_vault));
  return cfg.chip();
}

inline Row evaluate_point(const config::RunConfig& base, const GridPoint& p,
                          const std::vector<model::LayerDFG>& corpus, std::uint64_t seed) {
  Row row;
  row.point = p;
  try {
    const arch::ChipConfig chip = chip_for(base, p);
    const energy::EnergyTable table = base.energy_table();
    row.adc_rate_required_msps = chip.required_adc_rate() / 1e6;
    row.macc_energy_8b_fj =
        energy::macc_energy_8b(table, chip.mswagg.scheme, p.n_lanes, p.m_cycles).per_8b_fj;
    for (const auto& dfg : corpus) {
      auto compiled = compiler::compile(dfg, chip, table);
      auto image = compiler::build_image(compiled.layout, seed);
      sim::SimOptions options;  // sweeps run the exact digital path
      options.seed = seed;
      auto result = sim::simulate(compiled.program, chip, table, options, std::move(image));
      row.cycles += static_cast<std::int64_t>(result.stats.total_cycles);
      row.energy_aj += result.energy.total_aj();
    }
    row.feasible = true;
  } catch (const InfeasibleError& e) {
    row.error = e.what();
  } catch (const ContractViolation& e) {
    row.error = e.what();
  }
  return row;
}

inline SweepResult sweep(const config::RunConfig& base,
                         const std::vector<model::LayerDFG>& corpus, int workers) {
  const auto points = grid_points(base);
  const std::uint64_t seed = static_cast<std::uint64_t>(base.integer("sim.seed", 1));
  SweepResult result;
  result.rows.resize(points.size());

  if (workers < 1) workers = 1;
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size()) return;
      result.rows[i] = evaluate_point(base, points[i], corpus, seed);
    }
  };
  if (workers == 1 || points.size() <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  const std::string metric = base.str("dse.metric", "edp");
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    if (!r.feasible) continue;
    if (result.best_index < 0) {
      result.best_index = static_cast<int>(i);
      continue;
    }
    const auto& b = result.rows[static_cast<std::size_t>(result.best_index)];
    bool better = false;
    if (metric == "cycles")
      better = r.cycles < b.cycles;
    else if (metric == "energy")
      better = r.energy_aj < b.energy_aj;
    else
      better = r.edp() < b.edp();
    if (better) result.best_index = static_cast<int>(i);
  }
  return result;
}

inline std::string sweep_table(const SweepResult& result) {
  std::string out =
      "partition_bits\tn_lanes\tm_cycles\tcores_per_vault\tstatus\tcycles\tenergy_j\t"
      "edp_j_cycles\tadc_rate_msps\tmacc_8b_fj\tbest\n";
  char buf[320];
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const auto& r = result.rows[i];
    if (r.feasible) {
      const double energy_j = static_cast<double>(r.energy_aj) * 1e-18;
      std::snprintf(buf, sizeof(buf), "%d\t%d\t%d\t%d\tok\t%lld\t%.9e\t%.9e\t%.3f\t%.2f\t%s\n",
                    r.point.partition_bits, r.point.n_lanes, r.point.m_cycles,
                    r.point.cores_per_vault, static_cast<long long>(r.cycles), energy_j,
                    static_cast<double>(r.cycles) * energy_j, r.adc_rate_required_msps,
                    r.macc_energy_8b_fj,
                    static_cast<int>(i) == result.best_index ? "*" : "-");
    } else {
      std::snprintf(buf, sizeof(buf), "%d\t%d\t%d\t%d\tinfeasible\t-\t-\t-\t%.3f\t%.2f\t-\n",
                    r.point.partition_bits, r.point.n_lanes, r.point.m_cycles,
                    r.point.cores_per_vault, r.adc_rate_required_msps, r.macc_energy_8b_fj);
    }
    out += buf;
  }
  return out;
}

}  // namespace bpsim::dse
