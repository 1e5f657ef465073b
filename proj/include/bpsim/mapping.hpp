// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// mapping.hpp - how one core's aggregator array executes a tile, and what it
// costs. The compiler's estimator, the ISA validator, and the simulator all
// call these functions, which is what makes estimated window counts and
// capacity checks exactly agree with simulated ones.
//
// Work assignment inside a core: output channels are spread across the
// rows*cols aggregators. A channel's filter lives in the private weight
// buffer of every aggregator computing that channel, so the per-aggregator
// weight footprint is (channels assigned) * dot_length. When there are fewer
// channels than aggregators, each channel's outputs are split across a group
// of aggregators (weights replicated within the group).
//
// Timing law per aggregator: one sub-vector of n elements per cycle; a
// window is up to m sub-vector cycles plus one aggregation cycle; the
// converter occupies m+1 cycles per window, so consecutive aggregations are
// at least m+1 apart. Full windows therefore pipeline with zero bubbles and
// short windows are converter-gated. The final conversion plus the digital
// shift-add commit trail the last aggregation by m+2 cycles.

#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "bpsim/arch.hpp"
#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"

namespace bpsim::mapping {

struct DotWork {
  std::int64_t batch = 0;
  std::int64_t out_ch = 0;
  std::int64_t out_rows = 1;
  std::int64_t out_cols = 1;
  std::int64_t dot_length = 0;

  std::int64_t outputs_per_channel() const { return batch * out_rows * out_cols; }
  std::int64_t outputs() const { return out_ch * outputs_per_channel(); }
};

// Outputs handled by each aggregator, all with the same dot length.
// Also reports how many distinct channels land on each unit.
struct UnitAssignment {
  std::vector<std::int64_t> outputs;   // per unit
  std::vector<std::int64_t> channels;  // per unit
};

inline UnitAssignment distribute_outputs(const DotWork& w, int units) {
  UnitAssignment a;
  a.outputs.assign(units, 0);
  a.channels.assign(units, 0);
  if (w.out_ch <= 0 || w.outputs_per_channel() <= 0) return a;
  if (w.out_ch >= units) {
    for (std::int64_t c = 0; c < w.out_ch; ++c) {
      const int u = static_cast<int>(c % units);
      a.outputs[u] += w.outputs_per_channel();
      a.channels[u] += 1;
    }
  } else {
    const std::int64_t group = units / w.out_ch;  // aggregators per channel
    const std::int64_t e = w.outputs_per_channel();
    for (std::int64_t c = 0; c < w.out_ch; ++c)
      for (std::int64_t j = 0; j < group; ++j) {
        const int u = static_cast<int>(c * group + j);
        a.outputs[u] += e / group + (j < e % group ? 1 : 0);
        a.channels[u] = 1;
      }
  }
  return a;
}

// Cycle at which an aggregator working through `k` outputs of `substeps`
// sub-vector cycles each commits its last result. After the first window,
// every aggregation is converter-gated to exactly one per m+1 cycles.
inline std::int64_t unit_timeline_end(std::int64_t k, std::int64_t substeps, int m) {
  if (k <= 0 || substeps <= 0) return 0;
  const std::int64_t period = m + 1;
  const std::int64_t windows_per_output = ceil_div(substeps, m);
  const std::int64_t first_agg = std::min<std::int64_t>(m, substeps) + 1;
  const std::int64_t last_agg = first_agg + (k * windows_per_output - 1) * period;
  return last_agg + period + 1;  // trailing conversion + shift-add commit
}

struct DotCost {
  std::int64_t duration = 0;      // block cycles, conversion tail included
  std::int64_t busy_cycles = 0;   // occupied aggregator cycles (MACC + aggregation)
  std::int64_t windows = 0;       // conversion windows across all outputs
  std::int64_t substeps = 0;      // sub-vector MACC cycles across all outputs
  std::int64_t outputs = 0;
  std::int64_t wbuf_bytes_per_mswagg = 0;  // max private footprint
  std::int64_t ibuf_read_bytes = 0;
  std::int64_t wbuf_read_bytes = 0;
  std::int64_t obuf_write_bytes = 0;
};

inline DotCost dot_cost(const DotWork& w, const arch::CoreConfig& core,
                        const arch::MsBpMaccConfig& macc) {
  DotCost c;
  if (w.outputs() == 0 || w.dot_length == 0) return c;
  const int units = core.mswaggs();
  const auto assign = distribute_outputs(w, units);
  const std::int64_t S = ceil_div(w.dot_length, macc.n_lanes);
  const std::int64_t r = ceil_div(S, macc.m_cycles);
  for (int u = 0; u < units; ++u) {
    const std::int64_t k = assign.outputs[u];
    if (k == 0) continue;
    c.duration = std::max(c.duration, unit_timeline_end(k, S, macc.m_cycles));
    c.busy_cycles += k * (S + r);
    c.windows += k * r;
    c.substeps += k * S;
    c.wbuf_bytes_per_mswagg =
        std::max(c.wbuf_bytes_per_mswagg, assign.channels[u] * w.dot_length);
  }
  c.outputs = w.outputs();
  c.ibuf_read_bytes = c.substeps * macc.n_lanes;
  c.wbuf_read_bytes = c.substeps * macc.n_lanes;
  c.obuf_write_bytes = c.outputs;  // final int8 per output element
  return c;
}

// Windows needed for one output: the simulator's conversion-count law.
inline std::int64_t windows_per_output(std::int64_t dot_length, const arch::MsBpMaccConfig& m) {
  return ceil_div(dot_length, static_cast<std::int64_t>(m.n_lanes) * m.m_cycles);
}

struct DigitalCost {
  std::int64_t duration = 0;
  std::int64_t ops = 0;
  std::int64_t read_bytes = 0;
  std::int64_t write_bytes = 0;
};

inline DigitalCost digital_cost(std::int64_t out_elems, std::int64_t in_bytes_per_out,
                                const arch::CoreConfig& core) {
  DigitalCost c;
  if (out_elems <= 0) return c;
  c.duration = ceil_div(out_elems, core.digital_throughput);
  c.ops = out_elems;
  c.read_bytes = out_elems * in_bytes_per_out;
  c.write_bytes = out_elems;
  return c;
}

}  // namespace bpsim::mapping
