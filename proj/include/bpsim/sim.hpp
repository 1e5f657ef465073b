// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// sim.hpp - executes programs against a DRAM image. One serial bus moves
// tiles between DRAM and per-core scratchpad banks in program order; each
// core runs its compute blocks in order once their tiles have landed. Timing
// comes from the shared mapping laws; the datapath is modeled bit-exactly at
// the partition-pair level in ideal mode and through the charge-domain
// equations in non-ideal mode.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bpsim/analog.hpp"
#include "bpsim/arch.hpp"
#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"
#include "bpsim/energy.hpp"
#include "bpsim/isa.hpp"
#include "bpsim/mapping.hpp"
#include "bpsim/reference.hpp"

namespace bpsim::sim {

class SimError : public std::runtime_error {
public:
  explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Functional model of one wide aggregator: a grid of partition-pair MACC
// groups, each keeping separate positive and negative tallies (the capacitor
// pair), aggregated and shifted into a digital output register once per
// window. The converter is busy m+1 cycles per window; aggregating earlier
// than that is a contract violation, mirroring the conversion drain.
class MsWaggUnit {
public:
  MsWaggUnit(const bitpart::PartitionScheme& scheme, int n_lanes, int m_cycles,
             int register_bits = 64)
      : scheme_(scheme),
        n_(n_lanes),
        m_(m_cycles),
        register_bits_(register_bits),
        partitions_(scheme.partitions_per_operand()) {
    scheme_.validate();
    const std::size_t pairs = static_cast<std::size_t>(partitions_) * partitions_;
    pos_.assign(pairs, 0);
    neg_.assign(pairs, 0);
  }

  // One MACC cycle: n element pairs, sign-magnitude; shorter spans behave as
  // zero-padded lanes.
  void step(const std::vector<bitpart::SignMagnitudeValue>& x,
            const std::vector<bitpart::SignMagnitudeValue>& w) {
    if (x.size() != w.size() || static_cast<int>(x.size()) > n_)
      throw ContractViolation("MsWaggUnit::step: sub-vector length must be <= n_lanes");
    if (steps_in_window_ >= m_)
      throw ContractViolation("MsWaggUnit::step: window already full, aggregate first");
    const std::uint32_t mask = static_cast<std::uint32_t>(scheme_.partition_radix() - 1);
    for (std::size_t lane = 0; lane < x.size(); ++lane) {
      const auto& xv = x[lane];
      const auto& wv = w[lane];
      if (xv.magnitude == 0 || wv.magnitude == 0) continue;
      const bool negative = xv.sign != wv.sign;
      std::uint32_t xm = xv.magnitude;
      for (int p = 0; p < partitions_; ++p, xm >>= scheme_.partition_bits) {
        const std::int64_t xd = xm & mask;
        if (xd == 0) continue;
        std::uint32_t wm = wv.magnitude;
        for (int q = 0; q < partitions_; ++q, wm >>= scheme_.partition_bits) {
          const std::int64_t wd = wm & mask;
          if (wd == 0) continue;
          auto& tally = negative ? neg_ : pos_;
          tally[static_cast<std::size_t>(p) * partitions_ + q] += xd * wd;
        }
      }
    }
    ++steps_in_window_;
    ++cycle_;
  }

  void idle(std::int64_t cycles) { cycle_ += cycles; }

  // The aggregation cycle: charge share, differential conversion, digital
  // shift-add into the output register, capacitor reset.
  void end_window() {
    // The aggregation lands on cycle_+1; conversions are m+1 apart.
    if (last_aggregation_ >= 0 && (cycle_ + 1) - last_aggregation_ < m_ + 1)
      throw ContractViolation("MsWaggUnit::end_window: converter still draining");
    ++cycle_;
    last_aggregation_ = cycle_;
    for (int p = 0; p < partitions_; ++p)
      for (int q = 0; q < partitions_; ++q) {
        const std::size_t idx = static_cast<std::size_t>(p) * partitions_ + q;
        const std::int64_t diff = pos_[idx] - neg_[idx];
        register_ += diff << ((p + q) * scheme_.partition_bits);
        pos_[idx] = 0;
        neg_[idx] = 0;
      }
    if (register_bits_ == 32 && (register_ > INT32_MAX || register_ < INT32_MIN)) {
      overflowed_ = true;
      register_ = register_ > 0 ? INT32_MAX : INT32_MIN;
    }
    steps_in_window_ = 0;
    ++windows_;
  }

  std::int64_t output_register() const { return register_; }
  std::int64_t windows() const { return windows_; }
  bool overflowed() const { return overflowed_; }

  void reset() {
    register_ = 0;
    windows_ = 0;
    steps_in_window_ = 0;
    overflowed_ = false;
    last_aggregation_ = -1;
    std::fill(pos_.begin(), pos_.end(), 0);
    std::fill(neg_.begin(), neg_.end(), 0);
  }

  // Raw per-pair tallies of the open window (positive, negative).
  std::pair<std::int64_t, std::int64_t> window_tally(int p, int q) const {
    const std::size_t idx = static_cast<std::size_t>(p) * partitions_ + q;
    return {pos_[idx], neg_[idx]};
  }

private:
  bitpart::PartitionScheme scheme_;
  int n_;
  int m_;
  int register_bits_;
  int partitions_;
  std::vector<std::int64_t> pos_, neg_;
  std::int64_t register_ = 0;
  std::int64_t windows_ = 0;
  int steps_in_window_ = 0;
  std::int64_t cycle_ = 0;
  std::int64_t last_aggregation_ = -1;
  bool overflowed_ = false;
};

// ---------------------------------------------------------------------------

struct SimOptions {
  enum class Mode { kIdeal, kNonideal };
  Mode mode = Mode::kIdeal;
  std::uint64_t seed = 1;

  // Non-ideal components, individually selectable. sigma_acc follows the
  // error-tensor convention (output units); a negative value derives it from
  // the thermal closed form at the nominal operating point.
  bool thermal_noise = true;
  bool computational_error = false;
  bool adc_quantization = false;
  bool pvt = false;
  bool quadrature_noise = false;
  double sigma_acc = -1.0;

  analog::CapacitorBank bank;
  analog::SupplyThermalModel supply;
  analog::ProcessModel process;

  bool record_outputs = false;
  bool collect_trace = false;
};

struct RecordedOutput {
  double value = 0.0;          // wide accumulator value before requantization
  std::int64_t windows = 0;    // conversion windows contributing (r)
};

struct SimResult {
  arch::CycleStats stats;
  energy::EnergyReport energy;
  std::vector<std::uint8_t> dram_image;
  std::vector<RecordedOutput> recorded;
  std::vector<std::string> trace;
};

// Traffic of one comm block: DRAM bytes counted once per payload, a
// scratchpad write per destination.
struct TransferCost {
  std::int64_t cycles = 0;
  std::int64_t dram_bytes = 0;
  std::int64_t scratchpad_bytes = 0;
};

inline TransferCost transfer_cost(const isa::CommBlock& b, const arch::ChipConfig& chip) {
  TransferCost t;
  t.cycles = chip.dram.latency_cycles + ceil_div(b.length, chip.effective_bandwidth());
  t.dram_bytes = b.length;
  t.scratchpad_bytes = static_cast<std::int64_t>(b.length) *
                       (b.direction == isa::Direction::kFetch ? b.destination_count() : 1);
  return t;
}

namespace detail {

struct BankKey {
  int vault, core;
  isa::Scratchpad buf;
  int bank;
  bool operator<(const BankKey& o) const {
    if (vault != o.vault) return vault < o.vault;
    if (core != o.core) return core < o.core;
    if (buf != o.buf) return static_cast<int>(buf) < static_cast<int>(o.buf);
    return bank < o.bank;
  }
};

struct CommState {
  bool done = false;
  bool released = false;       // releasing compute block has completed
  std::int64_t consumers = 0;  // compute blocks still to consume this tile
  std::vector<std::int8_t> data;
};

struct Engine {
  std::int64_t busy_until = -1;  // busy while now < busy_until
  std::size_t active = SIZE_MAX;
};

// Per-lane charge-domain state for the non-ideal window model.
struct LaneChain {
  double pos = 0.0;
  double neg = 0.0;
};

}  // namespace detail

class Simulator {
public:
  Simulator(const isa::Program& program, const arch::ChipConfig& chip,
            const energy::EnergyTable& table, const SimOptions& options,
            std::vector<std::uint8_t> dram_image)
      : program_(program), chip_(chip), table_(table), opt_(options) {
    chip_.validate();
    table_.validate();
    result_.dram_image = std::move(dram_image);

    // Resolve the analog operating point, optionally through one PVT draw.
    bank_ = opt_.bank;
    vdd_ = opt_.supply.vdd_nominal;
    temperature_ = opt_.supply.t_nominal;
    if (opt_.mode == SimOptions::Mode::kNonideal && opt_.pvt) {
      auto s = analog::sample_pvt(bank_, opt_.supply, opt_.process,
                                  derive_seed(opt_.seed, 0x9f7ull));
      bank_ = s.bank;
      vdd_ = s.vdd;
      temperature_ = s.temperature;
    }
    sigma_acc_ = opt_.sigma_acc;
    if (sigma_acc_ < 0.0)
      sigma_acc_ = analog::thermal_sigma(bank_, temperature_, chip_.macc.m_cycles,
                                         chip_.macc.n_lanes, 3);

    index_blocks();
  }

  SimResult run() {
    std::int64_t now = 0;
    detail::Engine bus;
    std::size_t bus_pos = 0;
    std::vector<detail::Engine> cores(static_cast<std::size_t>(chip_.total_cores()));
    std::vector<std::size_t> core_pos(cores.size(), 0);
    std::vector<std::int64_t> core_wait_since(cores.size(), -1);

    auto all_done = [&]() {
      if (bus_pos < bus_queue_.size() || bus.active != SIZE_MAX) return false;
      for (std::size_t c = 0; c < cores.size(); ++c)
        if (core_pos[c] < core_queue_[c].size() || cores[c].active != SIZE_MAX) return false;
      return true;
    };

    while (!all_done()) {
      bool progress = false;

      // Completions first so freed banks are visible to starts at this cycle.
      if (bus.active != SIZE_MAX && bus.busy_until <= now) {
        complete_comm(bus.active, now);
        bus.active = SIZE_MAX;
        progress = true;
      }
      for (std::size_t c = 0; c < cores.size(); ++c)
        if (cores[c].active != SIZE_MAX && cores[c].busy_until <= now) {
          complete_compute(cores[c].active, now);
          cores[c].active = SIZE_MAX;
          progress = true;
        }

      if (bus.active == SIZE_MAX && bus_pos < bus_queue_.size()) {
        const std::size_t idx = bus_queue_[bus_pos];
        if (comm_ready(idx)) {
          const auto& blk = std::get<isa::CommBlock>(program_.blocks[idx]);
          const auto cost = transfer_cost(blk, chip_);
          bus.active = idx;
          bus.busy_until = now + cost.cycles;
          result_.stats.bus_busy_cycles += static_cast<std::uint64_t>(cost.cycles);
          ++bus_pos;
          trace(now, "bus",
                std::string(blk.direction == isa::Direction::kFetch ? "fetch " : "writeback ") +
                    std::to_string(blk.block_id) + " start");
          progress = true;
        }
      }

      for (std::size_t c = 0; c < cores.size(); ++c) {
        if (cores[c].active != SIZE_MAX || core_pos[c] >= core_queue_[c].size()) continue;
        const std::size_t idx = core_queue_[c][core_pos[c]];
        if (core_wait_since[c] < 0) core_wait_since[c] = now;
        if (!compute_ready(idx)) continue;
        const auto& blk = std::get<isa::ComputeBlock>(program_.blocks[idx]);
        const std::int64_t duration = std::max<std::int64_t>(1, block_duration(blk));
        cores[c].active = idx;
        cores[c].busy_until = now + duration;
        result_.stats.compute_stall_cycles +=
            static_cast<std::uint64_t>(now - core_wait_since[c]);
        core_wait_since[c] = -1;
        ++core_pos[c];
        trace(now, core_name(blk), "compute " + std::to_string(blk.block_id) + " start");
        progress = true;
      }

      if (progress) continue;

      // Nothing moved: advance to the next completion.
      std::int64_t next = INT64_MAX;
      if (bus.active != SIZE_MAX) next = std::min(next, bus.busy_until);
      for (const auto& e : cores)
        if (e.active != SIZE_MAX) next = std::min(next, e.busy_until);
      if (next == INT64_MAX)
        throw SimError("schedule deadlock: blocks remain but nothing can start");
      now = next;
    }

    result_.stats.total_cycles = static_cast<std::uint64_t>(now);
    return std::move(result_);
  }

private:
  // -- program indexing ------------------------------------------------------

  void index_blocks() {
    for (std::size_t i = 0; i < program_.blocks.size(); ++i) {
      if (const auto* c = std::get_if<isa::CommBlock>(&program_.blocks[i])) {
        bus_queue_.push_back(i);
        comm_state_[c->block_id] = {};
      } else {
        const auto& b = std::get<isa::ComputeBlock>(program_.blocks[i]);
        if (b.vault >= chip_.vaults || b.core >= chip_.cores_per_vault)
          throw SimError("compute block placed outside the chip");
        core_queue_.resize(static_cast<std::size_t>(chip_.total_cores()));
        core_queue_[core_key(b.vault, b.core)].push_back(i);
      }
    }
    core_queue_.resize(static_cast<std::size_t>(chip_.total_cores()));
    for (const auto& blk : program_.blocks)
      if (const auto* b = std::get_if<isa::ComputeBlock>(&blk))
        for (auto dep : b->depends_on) {
          auto it = comm_state_.find(dep);
          if (it == comm_state_.end())
            throw SimError("unresolved dependency " + std::to_string(dep));
          ++it->second.consumers;
        }
  }

  std::size_t core_key(int vault, int core) const {
    return static_cast<std::size_t>(vault) * chip_.cores_per_vault + core;
  }

  std::string core_name(const isa::ComputeBlock& b) const {
    return "core" + std::to_string(b.vault) + "." + std::to_string(b.core);
  }

  void trace(std::int64_t cycle, const std::string& unit, const std::string& event) {
    if (!opt_.collect_trace) return;
    result_.trace.push_back(std::to_string(cycle) + "," + unit + "," + event);
  }

  // -- readiness -------------------------------------------------------------

  bool comm_ready(std::size_t idx) const {
    const auto& b = std::get<isa::CommBlock>(program_.blocks[idx]);
    if (b.direction == isa::Direction::kWriteback)
      return comm_state_.at(b.block_id).released;
    bool ready = true;
    isa::detail::for_each_destination(b, chip_, [&](int v, int c) {
      detail::BankKey key{v, c, b.target, b.bank};
      auto it = bank_occupant_.find(key);
      if (it == bank_occupant_.end()) return;
      const auto& occ = comm_state_.at(it->second);
      if (!occ.released || occ.consumers > 0) ready = false;
    });
    return ready;
  }

  bool compute_ready(std::size_t idx) const {
    const auto& b = std::get<isa::ComputeBlock>(program_.blocks[idx]);
    for (auto dep : b.depends_on) {
      auto it = comm_state_.find(dep);
      if (it == comm_state_.end())
        throw SimError("compute block depends on unknown block " + std::to_string(dep));
      if (!it->second.done) return false;
    }
    // The OBUF bank this block will fill must have drained its prior tile.
    for (auto rel : b.releases) {
      const auto* wb = find_comm(rel);
      if (!wb || wb->direction != isa::Direction::kWriteback) continue;
      detail::BankKey key{b.vault, b.core, isa::Scratchpad::kObuf, wb->bank};
      auto it = bank_occupant_.find(key);
      if (it != bank_occupant_.end() && !comm_state_.at(it->second).done) return false;
    }
    return true;
  }

  const isa::CommBlock* find_comm(std::uint32_t id) const {
    for (const auto& blk : program_.blocks)
      if (const auto* c = std::get_if<isa::CommBlock>(&blk))
        if (c->block_id == id) return c;
    return nullptr;
  }

  // -- comm execution --------------------------------------------------------

  void complete_comm(std::size_t idx, std::int64_t now) {
    const auto& b = std::get<isa::CommBlock>(program_.blocks[idx]);
    auto& state = comm_state_.at(b.block_id);
    if (b.direction == isa::Direction::kFetch) {
      state.data = gather(b);
      isa::detail::for_each_destination(b, chip_, [&](int v, int c) {
        bank_occupant_[detail::BankKey{v, c, b.target, b.bank}] = b.block_id;
      });
      result_.stats.dram_bytes_read += b.length;
      result_.stats.scratchpad_bytes_written +=
          static_cast<std::uint64_t>(b.length) * b.destination_count();
      result_.energy.add(energy::EnergyCategory::kDram,
                         static_cast<std::int64_t>(b.length) * table_.dram_aj_per_byte());
      result_.energy.add(energy::EnergyCategory::kInterconnect,
                         static_cast<std::int64_t>(b.length) * table_.bus_aj_per_byte());
      result_.energy.add(energy::EnergyCategory::kOnchipMemory,
                         static_cast<std::int64_t>(b.length) * b.destination_count() *
                             table_.sram_aj_per_byte());
    } else {
      if (state.data.size() != b.length)
        throw SimError("writeback " + std::to_string(b.block_id) +
                       " has no produced tile of the right size");
      scatter(b, state.data);
      result_.stats.dram_bytes_written += b.length;
      result_.stats.scratchpad_bytes_read += b.length;
      result_.energy.add(energy::EnergyCategory::kDram,
                         static_cast<std::int64_t>(b.length) * table_.dram_aj_per_byte());
      result_.energy.add(energy::EnergyCategory::kInterconnect,
                         static_cast<std::int64_t>(b.length) * table_.bus_aj_per_byte());
      result_.energy.add(energy::EnergyCategory::kOnchipMemory,
                         static_cast<std::int64_t>(b.length) * table_.sram_aj_per_byte());
    }
    state.done = true;
    ++result_.stats.comm_blocks_executed;
    trace(now, "bus",
          std::string(b.direction == isa::Direction::kFetch ? "fetch " : "writeback ") +
              std::to_string(b.block_id) + " done");
  }

  std::vector<std::int8_t> gather(const isa::CommBlock& b) {
    std::vector<std::int8_t> out;
    out.reserve(b.length);
    for (std::uint32_t j = 0; j < b.count2; ++j)
      for (std::uint32_t i = 0; i < b.count1; ++i) {
        const std::uint64_t base = b.dram_address + j * b.stride2 + i * b.stride1;
        if (base + b.chunk_len > result_.dram_image.size())
          throw SimError("fetch " + std::to_string(b.block_id) + " reads past DRAM image");
        for (std::uint32_t k = 0; k < b.chunk_len; ++k)
          out.push_back(static_cast<std::int8_t>(result_.dram_image[base + k]));
      }
    return out;
  }

  void scatter(const isa::CommBlock& b, const std::vector<std::int8_t>& data) {
    std::size_t src = 0;
    for (std::uint32_t j = 0; j < b.count2; ++j)
      for (std::uint32_t i = 0; i < b.count1; ++i) {
        const std::uint64_t base = b.dram_address + j * b.stride2 + i * b.stride1;
        if (base + b.chunk_len > result_.dram_image.size())
          throw SimError("writeback " + std::to_string(b.block_id) + " writes past DRAM image");
        for (std::uint32_t k = 0; k < b.chunk_len; ++k)
          result_.dram_image[base + k] = static_cast<std::uint8_t>(data[src++]);
      }
  }

  // -- compute execution -----------------------------------------------------

  arch::MsBpMaccConfig macc_for(const isa::ComputeBlock& b) const {
    arch::MsBpMaccConfig m = chip_.macc;
    m.m_cycles = b.accumulation_cycles;
    return m;
  }

  std::int64_t block_duration(const isa::ComputeBlock& b) const {
    std::int64_t d = 0;
    for (const auto& op : b.ops) {
      if (const auto* dot = std::get_if<isa::DotOp>(&op)) {
        d += mapping::dot_cost(dot->work(), chip_.core, macc_for(b)).duration;
      } else if (const auto* pool = std::get_if<isa::PoolOp>(&op)) {
        d += mapping::digital_cost(pool->outputs(),
                                   static_cast<std::int64_t>(pool->window) * pool->window,
                                   chip_.core)
                 .duration;
      } else if (const auto* act = std::get_if<isa::ActOp>(&op)) {
        d += mapping::digital_cost(act->elems, 1, chip_.core).duration;
      } else if (const auto* norm = std::get_if<isa::NormOp>(&op)) {
        d += mapping::digital_cost(norm->elems, 1, chip_.core).duration;
      }
    }
    return d;
  }

  const std::vector<std::int8_t>& tile_data(std::uint32_t id) const {
    auto it = comm_state_.find(id);
    if (it == comm_state_.end() || !it->second.done)
      throw SimError("compute block consumes an unfetched tile " + std::to_string(id));
    return it->second.data;
  }

  void complete_compute(std::size_t idx, std::int64_t now) {
    const auto& b = std::get<isa::ComputeBlock>(program_.blocks[idx]);
    std::vector<std::int8_t> output;

    for (const auto& op : b.ops) {
      if (const auto* dot = std::get_if<isa::DotOp>(&op)) {
        exec_dot(b, *dot, output);
        const auto cost = mapping::dot_cost(dot->work(), chip_.core, macc_for(b));
        result_.stats.adc_conversions += static_cast<std::uint64_t>(cost.windows);
        result_.stats.macc_substeps += static_cast<std::uint64_t>(cost.substeps);
        result_.stats.mswagg_busy_cycles += static_cast<std::uint64_t>(cost.busy_cycles);
        result_.stats.obuf_element_writes += static_cast<std::uint64_t>(cost.outputs);
        const int grid = chip_.mswagg.grid();
        result_.energy.add(energy::EnergyCategory::kCompute,
                           cost.substeps * chip_.macc.n_lanes * grid * table_.macc_2b_aj());
        result_.energy.add(
            energy::EnergyCategory::kCompute,
            cost.windows * grid *
                std::llround(table_.adc_conversion_fj * chip_.adc_energy_scale() * 1e3));
        result_.energy.add(energy::EnergyCategory::kOnchipMemory,
                           (cost.ibuf_read_bytes + cost.wbuf_read_bytes +
                            cost.obuf_write_bytes) *
                               table_.sram_aj_per_byte());
        if (cost.wbuf_bytes_per_mswagg > chip_.core.wbuf_bytes_per_mswagg / 2)
          throw SimError("capacity violation: weight tile exceeds a WBUF bank");
      } else if (const auto* pool = std::get_if<isa::PoolOp>(&op)) {
        exec_pool(*pool, output);
        account_digital(pool->outputs(),
                        static_cast<std::int64_t>(pool->window) * pool->window);
      } else if (const auto* act = std::get_if<isa::ActOp>(&op)) {
        exec_act(*act, output);
        account_digital(act->elems, 1);
      } else if (const auto* norm = std::get_if<isa::NormOp>(&op)) {
        exec_norm(*norm, output);
        account_digital(norm->elems, 1);
      }
    }

    // Releases: free fetched tiles, hand the produced tile to the writeback.
    for (auto rel : b.releases) {
      auto it = comm_state_.find(rel);
      if (it == comm_state_.end()) throw SimError("release of unknown block");
      const auto* comm = find_comm(rel);
      it->second.released = true;
      if (comm && comm->direction == isa::Direction::kWriteback) {
        if (output.size() != comm->length)
          throw SimError("compute block " + std::to_string(b.block_id) +
                         " produced " + std::to_string(output.size()) + " bytes, writeback wants " +
                         std::to_string(comm->length));
        it->second.data = output;
        bank_occupant_[detail::BankKey{b.vault, b.core, isa::Scratchpad::kObuf, comm->bank}] =
            rel;
      }
    }
    for (auto dep : b.depends_on) --comm_state_.at(dep).consumers;
    ++result_.stats.compute_blocks_executed;
    trace(now, core_name(b), "compute " + std::to_string(b.block_id) + " done");
  }

  void account_digital(std::int64_t outs, std::int64_t in_per_out) {
    auto cost = mapping::digital_cost(outs, in_per_out, chip_.core);
    result_.stats.digital_busy_cycles += static_cast<std::uint64_t>(cost.duration);
    result_.stats.obuf_element_writes += static_cast<std::uint64_t>(outs);
    result_.energy.add(energy::EnergyCategory::kCompute, cost.ops * table_.digital_op_aj());
    result_.energy.add(energy::EnergyCategory::kOnchipMemory,
                       (cost.read_bytes + cost.write_bytes) * table_.sram_aj_per_byte());
  }

  // The wide-aggregator execution of one dot sub-tile, window by window.
  void exec_dot(const isa::ComputeBlock& blk, const isa::DotOp& op,
                std::vector<std::int8_t>& output) {
    const auto& in = tile_data(op.in_tile);
    const auto& wt = tile_data(op.w_tile);
    const auto scheme = chip_.mswagg.scheme;
    const int n = chip_.macc.n_lanes;
    const int m = blk.accumulation_cycles;
    const std::int64_t L = static_cast<std::int64_t>(op.in_ch) * op.kernel * op.kernel;
    const bool nonideal = opt_.mode == SimOptions::Mode::kNonideal;
    const bool analog_path = nonideal && (opt_.computational_error || opt_.adc_quantization);

    MsWaggUnit unit(scheme, n, m, chip_.mswagg.output_register_bits);
    std::vector<bitpart::SignMagnitudeValue> xs, ws;
    std::vector<std::int64_t> xraw(static_cast<std::size_t>(L)),
        wraw(static_cast<std::size_t>(L));

    std::int64_t out_index = 0;
    for (std::int64_t bb = 0; bb < op.batch; ++bb)
      for (std::int64_t oc = 0; oc < op.out_ch; ++oc)
        for (std::int64_t oy = 0; oy < op.out_rows; ++oy)
          for (std::int64_t ox = 0; ox < op.out_cols; ++ox, ++out_index) {
            // Assemble the reduction window (pad reads as zero).
            std::size_t e = 0;
            for (std::int64_t ic = 0; ic < op.in_ch; ++ic)
              for (int ky = 0; ky < op.kernel; ++ky)
                for (int kx = 0; kx < op.kernel; ++kx, ++e) {
                  std::int64_t v = 0;
                  if (op.is_fc) {
                    v = in[static_cast<std::size_t>(bb * op.in_ch + ic)];
                  } else {
                    const std::int64_t row = oy * op.stride + ky + op.row_offset;
                    const std::int64_t col = ox * op.stride + kx - op.pad;
                    if (row >= 0 && row < op.in_rows && col >= 0 && col < op.in_cols)
                      v = in[static_cast<std::size_t>(
                          ((bb * op.in_ch + ic) * op.in_rows + row) * op.in_cols + col)];
                  }
                  xraw[e] = v;
                  const std::int64_t widx = ((oc * op.in_ch + ic) * op.kernel + ky) * op.kernel + kx;
                  wraw[e] = wt[static_cast<std::size_t>(widx)];
                }

            double value = 0.0;
            std::int64_t windows = 0;
            if (!analog_path) {
              unit.reset();
              std::int64_t pos = 0;
              while (pos < L) {
                // one window: up to m sub-vector cycles
                int steps = 0;
                while (steps < m && pos < L) {
                  const std::int64_t lanes = std::min<std::int64_t>(n, L - pos);
                  xs.clear();
                  ws.clear();
                  for (std::int64_t l = 0; l < lanes; ++l) {
                    auto xr = bitpart::to_sign_magnitude(xraw[pos + l], scheme.operand_bits);
                    auto wr = bitpart::to_sign_magnitude(wraw[pos + l], scheme.operand_bits);
                    if (xr.saturated || wr.saturated) ++result_.stats.sm_saturations;
                    xs.push_back(xr.value);
                    ws.push_back(wr.value);
                  }
                  unit.step(xs, ws);
                  ++steps;
                  pos += lanes;
                }
                // Converter gating for short windows.
                if (steps < m) unit.idle(m - steps);
                unit.end_window();
                ++windows;
              }
              value = static_cast<double>(unit.output_register());
              if (unit.overflowed()) ++result_.stats.register_overflows;
            } else {
              value = exec_dot_analog(xraw, wraw, n, m, scheme, windows);
            }

            if (windows != mapping::windows_per_output(L, macc_for(blk)))
              throw SimError("internal: window count diverged from the closed form");

            if (nonideal && opt_.thermal_noise) {
              analog::NoiseSpec spec =
                  analog::NoiseSpec::for_scheme(sigma_acc_, windows, scheme,
                                                opt_.quadrature_noise);
              Rng rng(derive_seed(opt_.seed,
                                  (static_cast<std::uint64_t>(blk.block_id) << 32) |
                                      static_cast<std::uint64_t>(out_index)));
              value += spec.effective_sigma() * rng.next_normal();
            }
            if (opt_.record_outputs)
              result_.recorded.push_back({value, windows});

            const std::int64_t wide = std::llround(value);
            output.push_back(ref::clamp8(ref::shift_floor(wide, op.out_shift)));
          }
  }

  // Charge-domain window model: per-lane accumulation chains per partition
  // pair, charge-shared, optionally quantized, then digitally re-scaled.
  double exec_dot_analog(const std::vector<std::int64_t>& xraw,
                         const std::vector<std::int64_t>& wraw, int n, int m,
                         const bitpart::PartitionScheme& scheme, std::int64_t& windows) {
    const int parts = scheme.partitions_per_operand();
    const std::uint32_t mask = static_cast<std::uint32_t>(scheme.partition_radix() - 1);
    const double alpha = bank_.alpha();
    const double beta = bank_.beta();
    const std::int64_t L = static_cast<std::int64_t>(xraw.size());
    const double fullscale =
        chip_.macc.adc.effective_fullscale(m, vdd_, alpha);

    double value = 0.0;
    windows = 0;
    std::vector<detail::LaneChain> chains(static_cast<std::size_t>(parts * parts * n));
    std::int64_t pos = 0;
    while (pos < L) {
      for (auto& ch : chains) ch = {};
      int steps = 0;
      while (steps < m && pos < L) {
        const std::int64_t lanes = std::min<std::int64_t>(n, L - pos);
        for (std::int64_t l = 0; l < lanes; ++l) {
          auto xr = bitpart::to_sign_magnitude(xraw[pos + l], scheme.operand_bits);
          auto wr = bitpart::to_sign_magnitude(wraw[pos + l], scheme.operand_bits);
          if (xr.saturated || wr.saturated) ++result_.stats.sm_saturations;
          const bool negative = xr.value.sign != wr.value.sign;
          std::uint32_t xm = xr.value.magnitude;
          for (int pp = 0; pp < parts; ++pp, xm >>= scheme.partition_bits) {
            const int xd = static_cast<int>(xm & mask);
            std::uint32_t wm = wr.value.magnitude;
            for (int qq = 0; qq < parts; ++qq, wm >>= scheme.partition_bits) {
              const int wd = static_cast<int>(wm & mask);
              auto& chain =
                  chains[static_cast<std::size_t>((pp * parts + qq) * n + l)];
              double& acc = negative ? chain.neg : chain.pos;
              if (opt_.computational_error) {
                acc = (3.0 * alpha) / (3.0 * alpha + wd) * acc +
                      (static_cast<double>(wd) * xd * beta) /
                          ((3.0 * alpha + wd) * (3.0 * beta + wd)) * vdd_;
              } else {
                acc += static_cast<double>(wd) * xd * vdd_ / (9.0 * alpha);
              }
            }
          }
        }
        ++steps;
        pos += lanes;
      }
      // Aggregate: lanes charge-share (mean), convert, digital shift-add.
      for (int pp = 0; pp < parts; ++pp)
        for (int qq = 0; qq < parts; ++qq) {
          double vpos = 0.0, vneg = 0.0;
          for (int l = 0; l < n; ++l) {
            const auto& chain = chains[static_cast<std::size_t>((pp * parts + qq) * n + l)];
            vpos += chain.pos;
            vneg += chain.neg;
          }
          vpos /= n;
          vneg /= n;
          double diff;
          if (opt_.adc_quantization) {
            auto code = analog::adc_quantize(vpos, vneg, chip_.macc.adc, fullscale);
            if (code.saturated) ++result_.stats.adc_clamps;
            diff = static_cast<double>(code.code) * fullscale /
                   static_cast<double>(chip_.macc.adc.max_code());
          } else {
            diff = vpos - vneg;
          }
          const double partial = diff * n * 9.0 * alpha / vdd_;
          value += partial * static_cast<double>(std::int64_t{1}
                                                 << ((pp + qq) * scheme.partition_bits));
        }
      ++windows;
    }
    return value;
  }

  void exec_pool(const isa::PoolOp& op, std::vector<std::int8_t>& output) {
    const auto& in = tile_data(op.in_tile);
    for (std::int64_t b = 0; b < op.batch; ++b)
      for (std::int64_t c = 0; c < op.channels; ++c)
        for (std::int64_t oy = 0; oy < op.out_rows; ++oy)
          for (std::int64_t ox = 0; ox < op.out_cols; ++ox) {
            std::int64_t best = INT64_MIN, sum = 0;
            for (int ky = 0; ky < op.window; ++ky)
              for (int kx = 0; kx < op.window; ++kx) {
                const std::int64_t iy = oy * op.stride + ky;
                const std::int64_t ix = ox * op.stride + kx;
                if (iy >= op.in_rows || ix >= op.in_cols)
                  throw SimError("pool window escapes its tile");
                const std::int64_t v = in[static_cast<std::size_t>(
                    ((b * op.channels + c) * op.in_rows + iy) * op.in_cols + ix)];
                best = std::max(best, v);
                sum += v;
              }
            std::int64_t r;
            if (op.mode == 0) {
              r = best;
            } else {
              const std::int64_t k2 = static_cast<std::int64_t>(op.window) * op.window;
              r = sum >= 0 ? sum / k2 : -((-sum + k2 - 1) / k2);
            }
            output.push_back(ref::clamp8(r));
          }
  }

  void exec_act(const isa::ActOp& op, std::vector<std::int8_t>& output) {
    const auto& in = tile_data(op.in_tile);
    if (in.size() < op.elems) throw SimError("act tile smaller than elems");
    for (std::uint32_t i = 0; i < op.elems; ++i)
      output.push_back(op.fn == 0 && in[i] < 0 ? std::int8_t{0} : in[i]);
  }

  void exec_norm(const isa::NormOp& op, std::vector<std::int8_t>& output) {
    const auto& in = tile_data(op.in_tile);
    if (in.size() < op.elems) throw SimError("norm tile smaller than elems");
    for (std::uint32_t i = 0; i < op.elems; ++i)
      output.push_back(ref::clamp8(
          ref::shift_floor(static_cast<std::int64_t>(in[i]) * op.mul, op.shift)));
  }

  isa::Program program_;
  arch::ChipConfig chip_;
  energy::EnergyTable table_;
  SimOptions opt_;
  SimResult result_;

  analog::CapacitorBank bank_;
  double vdd_ = 1.0;
  double temperature_ = 329.0;
  double sigma_acc_ = 0.0;

  std::vector<std::size_t> bus_queue_;
  std::vector<std::vector<std::size_t>> core_queue_;
  std::map<std::uint32_t, detail::CommState> comm_state_;
  std::map<detail::BankKey, std::uint32_t> bank_occupant_;
};

inline SimResult simulate(const isa::Program& program, const arch::ChipConfig& chip,
                          const energy::EnergyTable& table, const SimOptions& options,
                          std::vector<std::uint8_t> dram_image) {
  Simulator sim(program, chip, table, options, std::move(dram_image));
  return sim.run();
}

}  // namespace bpsim::sim
