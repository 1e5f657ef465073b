// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// compiler.hpp - lowers a layer graph onto the chip: enumerates (tile, cut)
// candidates, scores each with a closed-form runtime/energy estimator, picks
// the per-layer argmin of runtime*energy, and emits the block-structured
// program with multicast-aware data movement.
//
// Tiles partition (batch, out-channel, output-rows); columns and the
// reduction are never split, so every output element is produced by exactly
// one compute block and partial sums never leave the accumulators. A cut
// spreads one tile across cores along one axis; the operand shared by all
// parts (weights for batch/row cuts, inputs for channel cuts) is fetched
// once and multicast.
//
// The estimator and the code generator walk the same step plan, so window
// counts, DRAM bytes, and per-block durations agree exactly with the
// simulator executing the emitted program.

#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "bpsim/arch.hpp"
#include "bpsim/common.hpp"
#include "bpsim/energy.hpp"
#include "bpsim/isa.hpp"
#include "bpsim/mapping.hpp"
#include "bpsim/model.hpp"
#include "bpsim/reference.hpp"

namespace bpsim::compiler {

// ---------------------------------------------------------------------------
// DRAM layout

struct LayoutEntry {
  std::string name;
  ref::TensorRole role = ref::TensorRole::kIntermediate;
  std::uint64_t address = 0;
  std::int64_t bytes = 0;
  std::uint64_t ordinal = 0;
  int layer_index = -1;
};

struct Layout {
  std::vector<LayoutEntry> entries;
  std::uint64_t end_address = 0;

  const LayoutEntry& find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw ContractViolation("layout: unknown tensor '" + name + "'");
  }
};

inline Layout assign_layout(const model::LayerDFG& dfg) {
  Layout layout;
  std::uint64_t addr = 0;
  for (const auto& t : ref::enumerate_tensors(dfg)) {
    LayoutEntry e{t.name, t.role, addr, t.bytes, t.ordinal, t.layer_index};
    layout.entries.push_back(e);
    addr += static_cast<std::uint64_t>((t.bytes + 63) / 64 * 64);
  }
  layout.end_address = addr;
  return layout;
}

inline std::vector<std::uint8_t> build_image(const Layout& layout, std::uint64_t seed) {
  std::vector<std::uint8_t> image(layout.end_address, 0);
  for (const auto& e : layout.entries) {
    if (e.role == ref::TensorRole::kIntermediate) continue;
    auto data = ref::generate_tensor_data(seed, e.ordinal, e.bytes);
    for (std::int64_t i = 0; i < e.bytes; ++i)
      image[e.address + i] = static_cast<std::uint8_t>(data[i]);
  }
  return image;
}

inline std::string layout_to_tsv(const Layout& layout) {
  std::string out = "tensor\trole\taddress\tbytes\tordinal\tlayer\n";
  char buf[256];
  for (const auto& e : layout.entries) {
    const char* role = e.role == ref::TensorRole::kInput
                           ? "input"
                           : (e.role == ref::TensorRole::kWeight ? "weight" : "intermediate");
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%llu\t%lld\t%llu\t%d\n", e.name.c_str(), role,
                  static_cast<unsigned long long>(e.address),
                  static_cast<long long>(e.bytes), static_cast<unsigned long long>(e.ordinal),
                  e.layer_index);
    out += buf;
  }
  return out;
}

inline Layout layout_from_tsv(const std::string& text, const std::string& where) {
  Layout layout;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1 || line.empty()) continue;
    std::istringstream ls(line);
    LayoutEntry e;
    std::string role;
    unsigned long long addr = 0, ord = 0;
    long long bytes = 0;
    if (!(ls >> e.name >> role >> addr >> bytes >> ord >> e.layer_index))
      throw ParseError(where + ":" + std::to_string(lineno), "malformed layout row");
    e.address = addr;
    e.bytes = bytes;
    e.ordinal = ord;
    e.role = role == "input" ? ref::TensorRole::kInput
                             : (role == "weight" ? ref::TensorRole::kWeight
                                                 : ref::TensorRole::kIntermediate);
    layout.entries.push_back(e);
    layout.end_address =
        std::max(layout.end_address, e.address + static_cast<std::uint64_t>((e.bytes + 63) / 64 * 64));
  }
  return layout;
}

// ---------------------------------------------------------------------------
// Tiles and cuts

struct TileSpec {
  std::int64_t batch = 1;
  std::int64_t out_ch = 1;
  std::int64_t rows = 1;
  std::int64_t cols = 1;   // always the full output width
  std::int64_t in_ch = 1;  // always the full reduction
};

enum class CutAxis { kBatch = 0, kOutChannel = 1, kRows = 2 };

inline const char* axis_name(CutAxis a) {
  switch (a) {
    case CutAxis::kBatch: return "batch";
    case CutAxis::kOutChannel: return "out_channel";
    case CutAxis::kRows: return "rows";
  }
  return "?";
}

struct CutSpec {
  CutAxis axis = CutAxis::kBatch;
  int parts = 1;

  // The operand every part shares and therefore multicast: weights for
  // batch/row cuts, the input tile for channel cuts.
  bool broadcasts_weights() const { return axis != CutAxis::kOutChannel; }
  bool operator==(const CutSpec&) const = default;
};

struct Candidate {
  TileSpec tile;
  std::vector<CutSpec> cuts;
};

struct Estimate {
  std::int64_t cycles = 0;
  std::int64_t energy_aj = 0;
  std::int64_t windows = 0;
  std::int64_t dram_bytes = 0;

  double energy_joules() const { return static_cast<double>(energy_aj) * 1e-18; }
};

// ---------------------------------------------------------------------------
// Step planner

namespace detail {

struct SubRange {
  std::int64_t b0 = 0, bt = 0;
  std::int64_t oc0 = 0, oct = 0;
  std::int64_t oy0 = 0, oyt = 0;
  int vault = 0, core = 0;
};

struct Slab {  // a two-level strided DRAM region
  std::uint64_t address = 0;
  std::uint32_t chunk_len = 0;
  std::uint32_t count1 = 1;
  std::uint64_t stride1 = 0;
  std::uint32_t count2 = 1;
  std::uint64_t stride2 = 0;

  std::int64_t bytes() const {
    return static_cast<std::int64_t>(chunk_len) * count1 * count2;
  }
};

struct InputWindow {
  std::int64_t fetch_y0 = 0;
  std::int64_t fetch_rows = 0;
  int row_offset = 0;  // kernel row 0 of output row 0, relative to the slab
};

// Rows of the input tensor a row-range of outputs needs, clamped to the
// tensor; everything outside is padding handled at compute time.
inline InputWindow input_window(const model::Layer& l, std::int64_t oy0, std::int64_t oyt) {
  InputWindow w;
  if (l.kind == model::LayerKind::kFc) {
    w.fetch_rows = 1;
    return w;
  }
  const int pad = l.kind == model::LayerKind::kConv ? l.pad : 0;
  const std::int64_t want0 = oy0 * l.stride - pad;
  const std::int64_t want1 = (oy0 + oyt - 1) * l.stride - pad + l.kernel;  // exclusive
  w.fetch_y0 = std::max<std::int64_t>(0, want0);
  const std::int64_t y1 = std::min(l.in_shape.height, want1);
  w.fetch_rows = std::max<std::int64_t>(0, y1 - w.fetch_y0);
  w.row_offset = static_cast<int>(want0 - w.fetch_y0);
  return w;
}

// Whether the layer is elementwise in the spatial sense (1:1 rows).
inline bool elementwise(const model::Layer& l) {
  return l.kind == model::LayerKind::kActivation || l.kind == model::LayerKind::kNormalization;
}

inline InputWindow digital_input_window(const model::Layer& l, std::int64_t oy0,
                                        std::int64_t oyt) {
  if (elementwise(l)) return {oy0, oyt, 0};
  return input_window(l, oy0, oyt);  // pool
}

// Input slab for a sub-range. Conv/pool fetch all input channels; act/norm
// fetch the matching channel range (their channels pass through 1:1).
inline Slab input_slab(const model::Layer& l, const LayoutEntry& tensor, const SubRange& s,
                       const InputWindow& w) {
  const auto& is = l.in_shape;
  Slab slab;
  if (l.kind == model::LayerKind::kFc) {
    const std::int64_t flat = is.channels * is.height * is.width;
    slab.address = tensor.address + static_cast<std::uint64_t>(s.b0 * flat);
    slab.chunk_len = static_cast<std::uint32_t>(s.bt * flat);  // batches contiguous
    return slab;
  }
  const bool channel_sliced = elementwise(l) || l.kind == model::LayerKind::kPool;
  const std::int64_t c0 = channel_sliced ? s.oc0 : 0;
  const std::int64_t ct = channel_sliced ? s.oct : is.channels;
  slab.address = tensor.address +
                 static_cast<std::uint64_t>(((s.b0 * is.channels + c0) * is.height + w.fetch_y0) *
                                            is.width);
  slab.chunk_len = static_cast<std::uint32_t>(w.fetch_rows * is.width);
  slab.count1 = static_cast<std::uint32_t>(ct);
  slab.stride1 = static_cast<std::uint64_t>(is.height * is.width);
  slab.count2 = static_cast<std::uint32_t>(s.bt);
  slab.stride2 = static_cast<std::uint64_t>(is.channels * is.height * is.width);
  // Coalesce contiguous levels to keep descriptor (and block) counts low.
  if (w.fetch_rows == is.height) {
    slab.chunk_len = static_cast<std::uint32_t>(ct * is.height * is.width);
    slab.count1 = 1;
    if (ct == is.channels) {
      slab.chunk_len = static_cast<std::uint32_t>(s.bt) * slab.chunk_len;
      slab.count2 = 1;
      slab.address = tensor.address + static_cast<std::uint64_t>(s.b0 * slab.stride2);
    }
  }
  return slab;
}

inline Slab weight_slab(const model::Layer& l, const LayoutEntry& tensor, std::int64_t oc0,
                        std::int64_t oct) {
  Slab slab;
  const std::int64_t L = l.dot_length();
  slab.address = tensor.address + static_cast<std::uint64_t>(oc0 * L);
  slab.chunk_len = static_cast<std::uint32_t>(oct * L);
  return slab;
}

inline Slab output_slab(const model::Layer& l, const LayoutEntry& tensor, const SubRange& s) {
  const auto& os = l.out_shape;
  Slab slab;
  slab.address = tensor.address +
                 static_cast<std::uint64_t>(((s.b0 * os.channels + s.oc0) * os.height + s.oy0) *
                                            os.width);
  slab.chunk_len = static_cast<std::uint32_t>(s.oyt * os.width);
  slab.count1 = static_cast<std::uint32_t>(s.oct);
  slab.stride1 = static_cast<std::uint64_t>(os.height * os.width);
  slab.count2 = static_cast<std::uint32_t>(s.bt);
  slab.stride2 = static_cast<std::uint64_t>(os.channels * os.height * os.width);
  if (s.oyt == os.height) {
    slab.chunk_len = static_cast<std::uint32_t>(s.oct * os.height * os.width);
    slab.count1 = 1;
    if (s.oct == os.channels) {
      slab.chunk_len = static_cast<std::uint32_t>(s.bt) * slab.chunk_len;
      slab.count2 = 1;
      slab.address = tensor.address + static_cast<std::uint64_t>(s.b0 * slab.stride2);
    }
  }
  return slab;
}

inline std::int64_t transfer_cycles(std::int64_t bytes, const arch::ChipConfig& chip) {
  return chip.dram.latency_cycles + ceil_div(bytes, chip.effective_bandwidth());
}

struct StepPlan {
  std::vector<SubRange> parts;  // non-empty only
};

// (vault, core) of the p-th part.
inline std::pair<int, int> part_placement(int p, const arch::ChipConfig& chip) {
  return {p / chip.cores_per_vault, p % chip.cores_per_vault};
}

}  // namespace detail

class TilePlanner {
public:
  TilePlanner(const model::Layer& layer, const TileSpec& tile, const CutSpec& cut,
              const arch::ChipConfig& chip)
      : layer_(layer), tile_(tile), cut_(cut), chip_(chip) {}

  std::int64_t batch_tiles() const { return ceil_div(layer_.out_shape.batch, tile_.batch); }
  std::int64_t oc_tiles() const { return ceil_div(layer_.out_shape.channels, tile_.out_ch); }
  std::int64_t row_tiles() const { return ceil_div(layer_.out_shape.height, tile_.rows); }
  std::int64_t step_count() const { return batch_tiles() * oc_tiles() * row_tiles(); }

  // Tile-step order is lexicographic over (batch, out-channel, rows).
  detail::StepPlan step(std::int64_t index) const {
    const std::int64_t rt = row_tiles(), ot = oc_tiles();
    const std::int64_t bi = index / (ot * rt);
    const std::int64_t oi = (index / rt) % ot;
    const std::int64_t ri = index % rt;
    detail::SubRange whole;
    whole.b0 = bi * tile_.batch;
    whole.bt = std::min(tile_.batch, layer_.out_shape.batch - whole.b0);
    whole.oc0 = oi * tile_.out_ch;
    whole.oct = std::min(tile_.out_ch, layer_.out_shape.channels - whole.oc0);
    whole.oy0 = ri * tile_.rows;
    whole.oyt = std::min(tile_.rows, layer_.out_shape.height - whole.oy0);

    std::int64_t extent = 0, offset0 = 0;
    switch (cut_.axis) {
      case CutAxis::kBatch: extent = whole.bt; offset0 = whole.b0; break;
      case CutAxis::kOutChannel: extent = whole.oct; offset0 = whole.oc0; break;
      case CutAxis::kRows: extent = whole.oyt; offset0 = whole.oy0; break;
    }
    // Every active part must sit in a vault_mask x core_mask rectangle, so
    // the part count rounds down to a prefix of one vault or whole vaults;
    // the extent is then split evenly so every part is non-empty.
    std::int64_t parts = std::min<std::int64_t>(cut_.parts, extent);
    if (parts > chip_.cores_per_vault) parts -= parts % chip_.cores_per_vault;
    parts = std::max<std::int64_t>(parts, 1);

    detail::StepPlan plan;
    std::int64_t lo = 0;
    for (std::int64_t p = 0; p < parts; ++p) {
      const std::int64_t share = extent / parts + (p < extent % parts ? 1 : 0);
      detail::SubRange s = whole;
      switch (cut_.axis) {
        case CutAxis::kBatch: s.b0 = offset0 + lo; s.bt = share; break;
        case CutAxis::kOutChannel: s.oc0 = offset0 + lo; s.oct = share; break;
        case CutAxis::kRows: s.oy0 = offset0 + lo; s.oyt = share; break;
      }
      lo += share;
      auto [vault, core] = detail::part_placement(static_cast<int>(p), chip_);
      s.vault = vault;
      s.core = core;
      plan.parts.push_back(s);
    }
    return plan;
  }

  mapping::DotWork dot_work(const detail::SubRange& s) const {
    mapping::DotWork w;
    w.batch = s.bt;
    w.out_ch = s.oct;
    w.out_rows = layer_.kind == model::LayerKind::kFc ? 1 : s.oyt;
    w.out_cols = layer_.kind == model::LayerKind::kFc ? 1 : layer_.out_shape.width;
    w.dot_length = layer_.dot_length();
    return w;
  }

  std::int64_t input_bytes(const detail::SubRange& s) const {
    const auto w = detail::digital_input_window(layer_, s.oy0, s.oyt);
    if (layer_.kind == model::LayerKind::kFc)
      return s.bt * layer_.in_shape.channels * layer_.in_shape.height * layer_.in_shape.width;
    const bool sliced =
        detail::elementwise(layer_) || layer_.kind == model::LayerKind::kPool;
    const std::int64_t ct = sliced ? s.oct : layer_.in_shape.channels;
    return s.bt * ct * w.fetch_rows * layer_.in_shape.width;
  }

  std::int64_t output_bytes(const detail::SubRange& s) const {
    const std::int64_t cols = layer_.kind == model::LayerKind::kFc ? 1 : layer_.out_shape.width;
    const std::int64_t rows = layer_.kind == model::LayerKind::kFc ? 1 : s.oyt;
    return s.bt * s.oct * rows * cols;
  }

  // Feasibility of the worst-case (first, full) tile; names the binding
  // buffer on failure.
  bool feasible(std::string* binding = nullptr) const {
    if (step_count() == 0) return true;
    auto plan = step(0);
    if (plan.parts.empty()) return true;
    for (const auto& s : plan.parts) {
      if (input_bytes(s) > chip_.core.ibuf_bytes / 2) {
        if (binding) *binding = "IBUF";
        return false;
      }
      if (output_bytes(s) > chip_.core.obuf_bytes / 2) {
        if (binding) *binding = "OBUF";
        return false;
      }
      if (layer_.mixed_signal()) {
        const std::int64_t core_bytes = s.oct * layer_.dot_length();
        if (core_bytes > chip_.core.wbuf_bytes_per_mswagg * chip_.core.mswaggs() / 2) {
          if (binding) *binding = "WBUF";
          return false;
        }
        auto cost = mapping::dot_cost(dot_work(s), chip_.core, chip_.macc);
        if (cost.wbuf_bytes_per_mswagg > chip_.core.wbuf_bytes_per_mswagg / 2) {
          if (binding) *binding = "WBUF";
          return false;
        }
      }
    }
    return true;
  }

  const model::Layer& layer() const { return layer_; }
  const TileSpec& tile() const { return tile_; }
  const CutSpec& cut() const { return cut_; }
  const arch::ChipConfig& chip() const { return chip_; }

private:
  model::Layer layer_;
  TileSpec tile_;
  CutSpec cut_;
  arch::ChipConfig chip_;
};

// ---------------------------------------------------------------------------
// Estimation

namespace detail {

struct StepCost {
  // Fetch durations in emission order; per part, the index of the last fetch
  // it needs, its core, and its compute/writeback durations. The timeline
  // below replays these the way the serial bus and the cores do.
  std::vector<std::int64_t> fetch_cycles;
  std::vector<int> part_gate;
  std::vector<int> part_core;
  std::vector<std::int64_t> compute_cycles;
  std::vector<std::int64_t> writeback_cycles;
  std::int64_t windows = 0;
  std::int64_t dram_bytes = 0;
  std::int64_t energy_aj = 0;
};

inline std::int64_t scaled_adc_aj(const energy::EnergyTable& t, const arch::ChipConfig& chip) {
  return std::llround(t.adc_conversion_fj * chip.adc_energy_scale() * 1e3);
}

inline StepCost step_cost(const TilePlanner& tp, std::int64_t index,
                          const energy::EnergyTable& table) {
  const auto& chip = tp.chip();
  const auto& layer = tp.layer();
  auto plan = tp.step(index);
  StepCost c;
  if (plan.parts.empty()) return c;
  const std::int64_t adc_aj = scaled_adc_aj(table, chip);
  const int grid = chip.mswagg.grid();
  const std::size_t nparts = plan.parts.size();
  c.part_gate.assign(nparts, 0);
  c.part_core.assign(nparts, 0);
  for (std::size_t p = 0; p < nparts; ++p)
    c.part_core[p] = plan.parts[p].vault * chip.cores_per_vault + plan.parts[p].core;

  // Input fetches: one multicast for channel cuts of mixed-signal layers
  // (conv/fc read every input channel anyway), otherwise unicast per part.
  const bool input_broadcast = layer.mixed_signal() && !tp.cut().broadcasts_weights() &&
                               nparts > 1;
  if (input_broadcast) {
    const std::int64_t bytes = tp.input_bytes(plan.parts[0]);
    for (std::size_t p = 0; p < nparts; ++p) c.part_gate[p] = 0;
    c.fetch_cycles.push_back(transfer_cycles(bytes, chip));
    c.dram_bytes += bytes;
    c.energy_aj += bytes * table.dram_aj_per_byte() + bytes * table.bus_aj_per_byte() +
                   static_cast<std::int64_t>(nparts) * bytes * table.sram_aj_per_byte();
  } else {
    for (std::size_t p = 0; p < nparts; ++p) {
      const std::int64_t bytes = tp.input_bytes(plan.parts[p]);
      c.part_gate[p] = static_cast<int>(c.fetch_cycles.size());
      c.fetch_cycles.push_back(transfer_cycles(bytes, chip));
      c.dram_bytes += bytes;
      c.energy_aj += bytes * (table.dram_aj_per_byte() + table.bus_aj_per_byte() +
                              table.sram_aj_per_byte());
    }
  }

  // Weight fetches follow the inputs, so they gate their consumers.
  if (layer.mixed_signal()) {
    if (tp.cut().broadcasts_weights()) {
      const std::int64_t bytes = plan.parts[0].oct * layer.dot_length();
      for (std::size_t p = 0; p < nparts; ++p)
        c.part_gate[p] = static_cast<int>(c.fetch_cycles.size());
      c.fetch_cycles.push_back(transfer_cycles(bytes, chip));
      c.dram_bytes += bytes;
      c.energy_aj += bytes * table.dram_aj_per_byte() + bytes * table.bus_aj_per_byte() +
                     static_cast<std::int64_t>(nparts) * bytes * table.sram_aj_per_byte();
    } else {
      for (std::size_t p = 0; p < nparts; ++p) {
        const std::int64_t bytes = plan.parts[p].oct * layer.dot_length();
        c.part_gate[p] = static_cast<int>(c.fetch_cycles.size());
        c.fetch_cycles.push_back(transfer_cycles(bytes, chip));
        c.dram_bytes += bytes;
        c.energy_aj += bytes * (table.dram_aj_per_byte() + table.bus_aj_per_byte() +
                                table.sram_aj_per_byte());
      }
    }
  }

  // Compute.
  for (const auto& s : plan.parts) {
    if (layer.mixed_signal()) {
      auto cost = mapping::dot_cost(tp.dot_work(s), chip.core, chip.macc);
      c.compute_cycles.push_back(cost.duration);
      c.windows += cost.windows;
      c.energy_aj += cost.substeps * chip.macc.n_lanes * grid * table.macc_2b_aj();
      c.energy_aj += cost.windows * grid * adc_aj;
      c.energy_aj += (cost.ibuf_read_bytes + cost.wbuf_read_bytes + cost.obuf_write_bytes) *
                     table.sram_aj_per_byte();
    } else {
      const std::int64_t outs = tp.output_bytes(s);
      const std::int64_t in_per_out =
          layer.kind == model::LayerKind::kPool
              ? static_cast<std::int64_t>(layer.kernel) * layer.kernel
              : 1;
      auto cost = mapping::digital_cost(outs, in_per_out, chip.core);
      c.compute_cycles.push_back(cost.duration);
      c.energy_aj += cost.ops * table.digital_op_aj();
      c.energy_aj +=
          (cost.read_bytes + cost.write_bytes) * table.sram_aj_per_byte();
    }
  }

  // Writebacks.
  for (const auto& s : plan.parts) {
    const std::int64_t bytes = tp.output_bytes(s);
    c.writeback_cycles.push_back(transfer_cycles(bytes, chip));
    c.dram_bytes += bytes;
    c.energy_aj += bytes * (table.dram_aj_per_byte() + table.bus_aj_per_byte() +
                            table.sram_aj_per_byte());
  }
  return c;
}

// The double-buffered timeline. Bus order per layer is F(0), F(1), then for
// each step t: writebacks of t as its parts finish, fetches of t+2. A part's
// compute starts when its gating fetch has landed and its core is free.
struct TimelineState {
  std::int64_t bus = 0;
  std::vector<std::int64_t> core_free;

  std::int64_t cores_max() const {
    std::int64_t m = 0;
    for (auto c : core_free) m = std::max(m, c);
    return m;
  }
};

inline std::int64_t run_timeline(TimelineState& st, const std::vector<StepCost>& steps) {
  const std::int64_t T = static_cast<std::int64_t>(steps.size());
  if (T == 0) return std::max(st.bus, st.cores_max());
  std::vector<std::vector<std::int64_t>> fetch_done(static_cast<std::size_t>(T));
  auto run_fetches = [&](std::int64_t t) {
    fetch_done[static_cast<std::size_t>(t)].clear();
    for (auto f : steps[static_cast<std::size_t>(t)].fetch_cycles) {
      st.bus += f;
      fetch_done[static_cast<std::size_t>(t)].push_back(st.bus);
    }
  };
  run_fetches(0);
  if (T > 1) run_fetches(1);
  for (std::int64_t t = 0; t < T; ++t) {
    const auto& step = steps[static_cast<std::size_t>(t)];
    std::vector<std::int64_t> part_end(step.compute_cycles.size(), 0);
    for (std::size_t p = 0; p < step.compute_cycles.size(); ++p) {
      const int core = step.part_core[p];
      if (core >= static_cast<int>(st.core_free.size())) st.core_free.resize(core + 1, 0);
      const std::int64_t ready =
          fetch_done[static_cast<std::size_t>(t)][static_cast<std::size_t>(step.part_gate[p])];
      const std::int64_t start = std::max(ready, st.core_free[core]);
      part_end[p] = start + step.compute_cycles[p];
      st.core_free[core] = part_end[p];
    }
    for (std::size_t p = 0; p < step.writeback_cycles.size(); ++p)
      st.bus = std::max(st.bus, part_end[p]) + step.writeback_cycles[p];
    if (t + 2 < T) run_fetches(t + 2);
  }
  return std::max(st.bus, st.cores_max());
}

}  // namespace detail

// Most tile steps are congruent (only edge remainders differ), so costs are
// memoized on the step's shape signature.
inline std::vector<detail::StepCost> step_costs(const TilePlanner& tp,
                                                const energy::EnergyTable& table) {
  std::vector<detail::StepCost> out;
  const std::int64_t T = tp.step_count();
  out.reserve(static_cast<std::size_t>(T));
  std::map<std::vector<std::int64_t>, detail::StepCost> cache;
  for (std::int64_t t = 0; t < T; ++t) {
    auto plan = tp.step(t);
    std::vector<std::int64_t> key;
    key.reserve(plan.parts.size() * 4);
    for (const auto& s : plan.parts) {
      key.push_back(s.bt);
      key.push_back(s.oct);
      key.push_back(s.oyt);
      key.push_back(detail::digital_input_window(tp.layer(), s.oy0, s.oyt).fetch_rows);
    }
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, detail::step_cost(tp, t, table)).first;
    out.push_back(it->second);
  }
  return out;
}

// Closed-form runtime/energy for one layer under one (tile, cut), evaluated
// in isolation. Zero-size layers cost (0, 0).
inline Estimate estimate(const model::Layer& layer, const TileSpec& tile, const CutSpec& cut,
                         const arch::ChipConfig& chip, const energy::EnergyTable& table) {
  TilePlanner tp(layer, tile, cut, chip);
  Estimate e;
  if (layer.out_shape.elements() == 0) return e;
  auto steps = step_costs(tp, table);
  detail::TimelineState st;
  e.cycles = detail::run_timeline(st, steps);
  for (const auto& s : steps) {
    e.energy_aj += s.energy_aj;
    e.windows += s.windows;
    e.dram_bytes += s.dram_bytes;
  }
  return e;
}

// ---------------------------------------------------------------------------
// Candidate enumeration

namespace detail {

inline std::vector<std::int64_t> pow2_options(std::int64_t dim) {
  std::vector<std::int64_t> out;
  for (std::int64_t v = 1; v < dim; v *= 2) out.push_back(v);
  out.push_back(dim);  // the exact-fit option
  return out;
}

inline std::vector<int> cut_part_options(const arch::ChipConfig& chip) {
  std::vector<int> out;
  for (int p = 1; p <= chip.total_cores(); p *= 2)
    if (p <= chip.cores_per_vault || p % chip.cores_per_vault == 0) out.push_back(p);
  return out;
}

}  // namespace detail

// Deterministic, duplicate-free candidates; every listed cut is feasible for
// its tile. Throws InfeasibleError naming the binding buffer when even the
// minimal tile cannot be mapped.
inline std::vector<Candidate> enumerate_candidates(const model::Layer& layer,
                                                   const arch::ChipConfig& chip) {
  std::vector<Candidate> out;
  if (layer.out_shape.elements() == 0) return out;
  const auto batches = detail::pow2_options(layer.out_shape.batch);
  const auto channels = detail::pow2_options(layer.out_shape.channels);
  const auto rows = detail::pow2_options(layer.out_shape.height);
  const auto parts = detail::cut_part_options(chip);

  for (auto b : batches)
    for (auto oc : channels)
      for (auto r : rows) {
        TileSpec tile{b, oc, r, layer.out_shape.width, layer.dot_length()};
        Candidate cand;
        cand.tile = tile;
        for (auto axis : {CutAxis::kBatch, CutAxis::kOutChannel, CutAxis::kRows})
          for (int p : parts) {
            if (p > 1) {
              const std::int64_t extent = axis == CutAxis::kBatch
                                              ? b
                                              : (axis == CutAxis::kOutChannel ? oc : r);
              if (p > extent) continue;
            } else if (axis != CutAxis::kBatch) {
              continue;  // parts=1 is the same cut on every axis; keep one
            }
            CutSpec cut{axis, p};
            if (TilePlanner(layer, tile, cut, chip).feasible()) cand.cuts.push_back(cut);
          }
        if (!cand.cuts.empty()) out.push_back(std::move(cand));
      }

  if (out.empty()) {
    std::string binding = "IBUF";
    TileSpec minimal{1, 1, 1, layer.out_shape.width, layer.dot_length()};
    TilePlanner(layer, minimal, CutSpec{CutAxis::kBatch, 1}, chip).feasible(&binding);
    throw InfeasibleError("layer '" + layer.name + "' has no feasible tile (binding buffer " +
                              binding + ")",
                          binding);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimization (the exhaustive per-layer argmin of runtime x energy)

struct LayerChoice {
  TileSpec tile;
  CutSpec cut;
  Estimate estimate;
  std::int64_t candidate_count = 0;
};

struct Schedule {
  std::vector<LayerChoice> layers;
  std::int64_t chained_cycles = 0;  // whole-program estimate
  std::int64_t total_energy_aj = 0;
};

namespace detail {

// s = runtime * energy, compared exactly in 128-bit; ties broken by lower
// energy, then lower runtime, then enumeration order.
struct Score {
  unsigned __int128 s = 0;
  std::int64_t energy = 0;
  std::int64_t cycles = 0;

  static Score of(const Estimate& e) {
    return {static_cast<unsigned __int128>(e.cycles) * static_cast<unsigned __int128>(e.energy_aj),
            e.energy_aj, e.cycles};
  }
  bool better_than(const Score& o) const {
    if (s != o.s) return s < o.s;
    if (energy != o.energy) return energy < o.energy;
    return cycles < o.cycles;
  }
};

}  // namespace detail

inline Schedule optimize(const model::LayerDFG& dfg, const arch::ChipConfig& chip,
                         const energy::EnergyTable& table) {
  Schedule schedule;
  detail::TimelineState chained;
  for (const auto& layer : dfg.layers) {
    auto candidates = enumerate_candidates(layer, chip);
    LayerChoice choice;
    bool have = false;
    detail::Score best;
    for (const auto& cand : candidates)
      for (const auto& cut : cand.cuts) {
        ++choice.candidate_count;
        const Estimate e = estimate(layer, cand.tile, cut, chip, table);
        const auto score = detail::Score::of(e);
        if (!have || score.better_than(best)) {
          have = true;
          best = score;
          choice.tile = cand.tile;
          choice.cut = cut;
          choice.estimate = e;
        }
      }
    if (!have && layer.out_shape.elements() != 0)
      throw InfeasibleError("layer '" + layer.name + "' has no feasible candidate", "IBUF");
    schedule.total_energy_aj += choice.estimate.energy_aj;
    // Chain the layer into the whole-program timeline.
    TilePlanner tp(layer, choice.tile, choice.cut, chip);
    schedule.chained_cycles = detail::run_timeline(chained, step_costs(tp, table));
    schedule.layers.push_back(std::move(choice));
  }
  return schedule;
}

inline std::string schedule_summary(const model::LayerDFG& dfg, const Schedule& s) {
  std::string out =
      "layer\tkind\ttile_batch\ttile_oc\ttile_rows\tcut_axis\tcut_parts\test_cycles\t"
      "est_energy_j\tcandidates\n";
  char buf[256];
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& l = dfg.layers[i];
    const auto& c = s.layers[i];
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%lld\t%lld\t%lld\t%s\t%d\t%lld\t%.9e\t%lld\n",
                  l.name.c_str(), model::kind_name(l.kind),
                  static_cast<long long>(c.tile.batch), static_cast<long long>(c.tile.out_ch),
                  static_cast<long long>(c.tile.rows), axis_name(c.cut.axis), c.cut.parts,
                  static_cast<long long>(c.estimate.cycles), c.estimate.energy_joules(),
                  static_cast<long long>(c.candidate_count));
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "total\t-\t-\t-\t-\t-\t-\t%lld\t%.9e\t-\n",
                static_cast<long long>(s.chained_cycles),
                static_cast<double>(s.total_energy_aj) * 1e-18);
  out += buf;
  return out;
}

// ---------------------------------------------------------------------------
// Code generation

namespace detail {

struct Emitter {
  isa::Program program;
  std::uint32_t next_id = 1;

  std::uint32_t id() { return next_id++; }
};

inline isa::CommBlock make_comm(std::uint32_t id, isa::Direction dir, isa::Scratchpad target,
                                std::uint8_t bank, const Slab& slab,
                                const std::vector<std::pair<int, int>>& dests) {
  isa::CommBlock b;
  b.block_id = id;
  b.direction = dir;
  b.target = target;
  b.bank = bank;
  for (auto [v, c] : dests) {
    b.vault_mask |= static_cast<std::uint16_t>(1u << v);
    b.core_mask |= static_cast<std::uint8_t>(1u << c);
  }
  b.broadcast = dests.size() > 1;
  b.dram_address = slab.address;
  b.chunk_len = slab.chunk_len;
  b.count1 = slab.count1;
  b.stride1 = slab.stride1;
  b.count2 = slab.count2;
  b.stride2 = slab.stride2;
  b.length = static_cast<std::uint32_t>(slab.bytes());
  return b;
}

// Destinations of a multicast must be expressible as vault_mask x core_mask;
// parts are placed to make that exact: either within one vault or spanning
// whole vaults.
inline std::vector<std::pair<int, int>> placements(const StepPlan& plan) {
  std::vector<std::pair<int, int>> out;
  for (const auto& s : plan.parts) out.emplace_back(s.vault, s.core);
  return out;
}

struct StepBlocks {
  std::vector<isa::CommBlock> fetches;
  std::vector<isa::ComputeBlock> computes;
  std::vector<isa::CommBlock> writebacks;
};

inline StepBlocks emit_step(Emitter& em, const TilePlanner& tp, std::int64_t index,
                            const Layout& layout) {
  const auto& layer = tp.layer();
  const auto& chip = tp.chip();
  auto plan = tp.step(index);
  StepBlocks blocks;
  if (plan.parts.empty()) return blocks;
  const std::uint8_t bank = static_cast<std::uint8_t>(index % 2);
  const auto& in_tensor = layout.find(layer.input);
  const auto& out_tensor = layout.find(layer.output);

  const bool input_broadcast = layer.mixed_signal() && !tp.cut().broadcasts_weights() &&
                               plan.parts.size() > 1;
  std::vector<std::uint32_t> in_ids(plan.parts.size(), 0);
  std::vector<InputWindow> windows(plan.parts.size());
  if (input_broadcast) {
    const auto& s0 = plan.parts[0];
    auto w = digital_input_window(layer, s0.oy0, s0.oyt);
    auto slab = input_slab(layer, in_tensor, s0, w);
    auto blk = make_comm(em.id(), isa::Direction::kFetch, isa::Scratchpad::kIbuf, bank, slab,
                         placements(plan));
    for (std::size_t p = 0; p < plan.parts.size(); ++p) {
      in_ids[p] = blk.block_id;
      windows[p] = w;
    }
    blocks.fetches.push_back(blk);
  } else {
    for (std::size_t p = 0; p < plan.parts.size(); ++p) {
      const auto& s = plan.parts[p];
      auto w = digital_input_window(layer, s.oy0, s.oyt);
      auto slab = input_slab(layer, in_tensor, s, w);
      auto blk = make_comm(em.id(), isa::Direction::kFetch, isa::Scratchpad::kIbuf, bank, slab,
                           {{s.vault, s.core}});
      in_ids[p] = blk.block_id;
      windows[p] = w;
      blocks.fetches.push_back(blk);
    }
  }

  std::vector<std::uint32_t> w_ids(plan.parts.size(), 0);
  if (layer.mixed_signal()) {
    const auto& w_tensor = layout.find(layer.name + ".w");
    if (tp.cut().broadcasts_weights()) {
      auto slab = weight_slab(layer, w_tensor, plan.parts[0].oc0, plan.parts[0].oct);
      auto blk = make_comm(em.id(), isa::Direction::kFetch, isa::Scratchpad::kWbuf, bank, slab,
                           placements(plan));
      for (auto& id : w_ids) id = blk.block_id;
      blocks.fetches.push_back(blk);
    } else {
      for (std::size_t p = 0; p < plan.parts.size(); ++p) {
        const auto& s = plan.parts[p];
        auto slab = weight_slab(layer, w_tensor, s.oc0, s.oct);
        auto blk = make_comm(em.id(), isa::Direction::kFetch, isa::Scratchpad::kWbuf, bank,
                             slab, {{s.vault, s.core}});
        w_ids[p] = blk.block_id;
        blocks.fetches.push_back(blk);
      }
    }
  }

  // One compute block and one writeback per part, the compute releasing its
  // inputs (last consumer releases a shared fetch) and its own writeback.
  for (std::size_t p = 0; p < plan.parts.size(); ++p) {
    const auto& s = plan.parts[p];
    isa::ComputeBlock cb;
    cb.block_id = em.id();
    cb.vault = static_cast<std::uint8_t>(s.vault);
    cb.core = static_cast<std::uint8_t>(s.core);
    cb.partition_bits = static_cast<std::uint8_t>(chip.mswagg.scheme.partition_bits);
    cb.operand_bits = static_cast<std::uint8_t>(chip.mswagg.scheme.operand_bits);
    cb.accumulation_cycles = static_cast<std::uint16_t>(chip.macc.m_cycles);
    cb.depends_on.push_back(in_ids[p]);
    if (layer.mixed_signal()) cb.depends_on.push_back(w_ids[p]);

    const auto& is = layer.in_shape;
    if (layer.mixed_signal()) {
      isa::DotOp op;
      op.in_tile = in_ids[p];
      op.w_tile = w_ids[p];
      op.batch = static_cast<std::uint16_t>(s.bt);
      op.out_ch = static_cast<std::uint16_t>(s.oct);
      if (layer.kind == model::LayerKind::kFc) {
        op.out_rows = 1;
        op.out_cols = 1;
        op.in_ch = static_cast<std::uint16_t>(layer.dot_length());
        op.in_rows = 1;
        op.in_cols = 1;
        op.kernel = 1;
        op.stride = 1;
        op.pad = 0;
        op.is_fc = 1;
      } else {
        op.out_rows = static_cast<std::uint16_t>(s.oyt);
        op.out_cols = static_cast<std::uint16_t>(layer.out_shape.width);
        op.in_ch = static_cast<std::uint16_t>(is.channels);
        op.in_rows = static_cast<std::uint16_t>(windows[p].fetch_rows);
        op.in_cols = static_cast<std::uint16_t>(is.width);
        op.kernel = static_cast<std::uint8_t>(layer.kernel);
        op.stride = static_cast<std::uint8_t>(layer.stride);
        op.pad = static_cast<std::uint8_t>(layer.pad);
        op.row_offset = static_cast<std::int16_t>(windows[p].row_offset);
      }
      op.out_shift = static_cast<std::uint8_t>(layer.out_shift);
      cb.ops.emplace_back(op);
    } else if (layer.kind == model::LayerKind::kPool) {
      isa::PoolOp op;
      op.in_tile = in_ids[p];
      op.batch = static_cast<std::uint16_t>(s.bt);
      op.channels = static_cast<std::uint16_t>(s.oct);
      op.out_rows = static_cast<std::uint16_t>(s.oyt);
      op.out_cols = static_cast<std::uint16_t>(layer.out_shape.width);
      op.in_rows = static_cast<std::uint16_t>(windows[p].fetch_rows);
      op.in_cols = static_cast<std::uint16_t>(is.width);
      op.window = static_cast<std::uint8_t>(layer.kernel);
      op.stride = static_cast<std::uint8_t>(layer.stride);
      op.mode = layer.pool_mode == model::PoolMode::kAvg ? 1 : 0;
      cb.ops.emplace_back(op);
    } else if (layer.kind == model::LayerKind::kActivation) {
      isa::ActOp op;
      op.in_tile = in_ids[p];
      op.elems = static_cast<std::uint32_t>(tp.output_bytes(s));
      op.fn = layer.act_fn == model::ActFn::kIdentity ? 1 : 0;
      cb.ops.emplace_back(op);
    } else {
      isa::NormOp op;
      op.in_tile = in_ids[p];
      op.elems = static_cast<std::uint32_t>(tp.output_bytes(s));
      op.mul = static_cast<std::uint16_t>(layer.norm_mul);
      op.shift = static_cast<std::uint8_t>(layer.norm_shift);
      cb.ops.emplace_back(op);
    }

    auto out_slab = output_slab(layer, out_tensor, s);
    auto wb = make_comm(em.id(), isa::Direction::kWriteback, isa::Scratchpad::kObuf, bank,
                        out_slab, {{s.vault, s.core}});
    // Shared fetches are released by their last consumer.
    const bool last = p + 1 == plan.parts.size();
    const bool in_shared = input_broadcast;
    const bool w_shared = layer.mixed_signal() && tp.cut().broadcasts_weights() &&
                          plan.parts.size() > 1;
    if (!in_shared || last) cb.releases.push_back(in_ids[p]);
    if (layer.mixed_signal() && (!w_shared || last)) cb.releases.push_back(w_ids[p]);
    cb.releases.push_back(wb.block_id);

    blocks.computes.push_back(std::move(cb));
    blocks.writebacks.push_back(wb);
  }
  return blocks;
}

}  // namespace detail

struct CompiledProgram {
  isa::Program program;
  Layout layout;
  Schedule schedule;
};

// Emission order per layer: F(0), F(1), then for each step t: C(t), W(t),
// F(t+2). The bus serves comm blocks in this order, which is what lets the
// fetch of tile t+1 run under the compute of tile t.
inline CompiledProgram compile(const model::LayerDFG& dfg, const arch::ChipConfig& chip,
                               const energy::EnergyTable& table) {
  chip.validate();
  table.validate();
  CompiledProgram out;
  out.layout = assign_layout(dfg);
  out.schedule = optimize(dfg, chip, table);
  out.program.chip_hash = chip.config_hash();

  detail::Emitter em;
  for (std::size_t li = 0; li < dfg.layers.size(); ++li) {
    const auto& layer = dfg.layers[li];
    const auto& choice = out.schedule.layers[li];
    if (layer.out_shape.elements() == 0) continue;
    if (layer.dot_length() > 65535)
      throw InfeasibleError("layer '" + layer.name + "' reduction too long for the ISA",
                            "WBUF");
    TilePlanner tp(layer, choice.tile, choice.cut, chip);
    const std::int64_t T = tp.step_count();
    std::vector<detail::StepBlocks> steps;
    steps.reserve(static_cast<std::size_t>(T));
    for (std::int64_t t = 0; t < T; ++t)
      steps.push_back(detail::emit_step(em, tp, t, out.layout));

    auto push_fetches = [&](std::int64_t t) {
      for (auto& f : steps[t].fetches) out.program.blocks.emplace_back(f);
    };
    if (T > 0) push_fetches(0);
    if (T > 1) push_fetches(1);
    for (std::int64_t t = 0; t < T; ++t) {
      for (auto& c : steps[t].computes) out.program.blocks.emplace_back(std::move(c));
      for (auto& w : steps[t].writebacks) out.program.blocks.emplace_back(w);
      if (t + 2 < T) push_fetches(t + 2);
    }
  }
  return out;
}

}  // namespace bpsim::compiler
