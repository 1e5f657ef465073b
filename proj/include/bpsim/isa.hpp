// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// isa.hpp - the block-structured instruction set: communication blocks move
// tensor slabs between DRAM and core scratchpads (with multicast), compute
// blocks consume delivered tiles and produce an output tile. Encoding is
// fixed-width little-endian; the full byte layout is documented in
// docs/isa_format.md and frozen by round-trip and corruption tests.

#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "bpsim/arch.hpp"
#include "bpsim/common.hpp"
#include "bpsim/mapping.hpp"

namespace bpsim::isa {

constexpr std::uint8_t kMagic[4] = {'B', 'P', 'S', 'M'};
constexpr std::uint8_t kVersion = 1;

enum class Direction : std::uint8_t { kFetch = 0, kWriteback = 1 };
enum class Scratchpad : std::uint8_t { kIbuf = 0, kWbuf = 1, kObuf = 2 };

inline const char* scratchpad_name(Scratchpad s) {
  switch (s) {
    case Scratchpad::kIbuf: return "IBUF";
    case Scratchpad::kWbuf: return "WBUF";
    case Scratchpad::kObuf: return "OBUF";
  }
  return "?";
}

// DRAM <-> scratchpad movement of one tile. The slab in DRAM is described by
// a two-level strided descriptor: count2 x count1 chunks of chunk_len bytes;
// chunk (j, i) starts at dram_address + j*stride2 + i*stride1. Data lands in
// the target bank packed in chunk order.
struct CommBlock {
  std::uint32_t block_id = 0;
  Direction direction = Direction::kFetch;
  std::uint16_t vault_mask = 0;
  std::uint8_t core_mask = 0;
  bool broadcast = false;
  Scratchpad target = Scratchpad::kIbuf;
  std::uint8_t bank = 0;
  std::uint64_t dram_address = 0;
  std::uint32_t length = 0;  // must equal chunk_len * count1 * count2
  std::uint32_t chunk_len = 0;
  std::uint32_t count1 = 1;
  std::uint64_t stride1 = 0;
  std::uint32_t count2 = 1;
  std::uint64_t stride2 = 0;

  bool operator==(const CommBlock&) const = default;

  int destination_count() const {
    int v = 0, c = 0;
    for (int i = 0; i < 16; ++i) v += (vault_mask >> i) & 1;
    for (int i = 0; i < 8; ++i) c += (core_mask >> i) & 1;
    return v * c;
  }
};

// A sub-tile's worth of dot products: out_ch filters applied over a fetched
// input slab. Fully self-describing so the simulator can index the packed
// tile bytes; fc is the kernel=1, 1x1-spatial special case.
struct DotOp {
  std::uint32_t in_tile = 0;  // comm block id of the input slab
  std::uint32_t w_tile = 0;   // comm block id of the weight tile
  std::uint16_t batch = 1;
  std::uint16_t out_ch = 1;
  std::uint16_t out_rows = 1;
  std::uint16_t out_cols = 1;
  std::uint16_t in_ch = 1;
  std::uint16_t in_rows = 1;
  std::uint16_t in_cols = 1;
  std::uint8_t kernel = 1;
  std::uint8_t stride = 1;
  std::uint8_t pad = 0;
  std::uint8_t out_shift = 0;
  std::int16_t row_offset = 0;  // slab row of output row 0's first kernel row
  std::uint8_t is_fc = 0;

  bool operator==(const DotOp&) const = default;

  mapping::DotWork work() const {
    return {batch, out_ch, out_rows, out_cols,
            static_cast<std::int64_t>(in_ch) * kernel * kernel};
  }
  std::int64_t outputs() const { return work().outputs(); }
};

struct PoolOp {
  std::uint32_t in_tile = 0;
  std::uint16_t batch = 1;
  std::uint16_t channels = 1;
  std::uint16_t out_rows = 1;
  std::uint16_t out_cols = 1;
  std::uint16_t in_rows = 1;
  std::uint16_t in_cols = 1;
  std::uint8_t window = 1;
  std::uint8_t stride = 1;
  std::uint8_t mode = 0;  // 0 max, 1 avg
  bool operator==(const PoolOp&) const = default;
  std::int64_t outputs() const {
    return static_cast<std::int64_t>(batch) * channels * out_rows * out_cols;
  }
};

struct ActOp {
  std::uint32_t in_tile = 0;
  std::uint32_t elems = 0;
  std::uint8_t fn = 0;  // 0 relu, 1 identity
  bool operator==(const ActOp&) const = default;
};

struct NormOp {
  std::uint32_t in_tile = 0;
  std::uint32_t elems = 0;
  std::uint16_t mul = 1;
  std::uint8_t shift = 0;
  bool operator==(const NormOp&) const = default;
};

using ComputeOp = std::variant<DotOp, PoolOp, ActOp, NormOp>;

struct ComputeBlock {
  std::uint32_t block_id = 0;
  std::uint8_t vault = 0;
  std::uint8_t core = 0;
  std::uint8_t partition_bits = 2;
  std::uint8_t operand_bits = 8;
  std::uint16_t accumulation_cycles = 32;  // m; legal per-block override
  std::vector<std::uint32_t> depends_on;
  std::vector<std::uint32_t> releases;
  std::vector<ComputeOp> ops;

  bool operator==(const ComputeBlock&) const = default;
};

using Block = std::variant<CommBlock, ComputeBlock>;

struct Program {
  std::uint8_t flags = 0;
  std::uint64_t chip_hash = 0;
  std::vector<Block> blocks;

  bool operator==(const Program&) const = default;
};

inline std::uint32_t block_id(const Block& b) {
  return std::visit([](const auto& blk) { return blk.block_id; }, b);
}

// ---------------------------------------------------------------------------
// Encoding

namespace detail {

struct Writer {
  std::vector<std::uint8_t> out;
  void u8(std::uint8_t v) { out.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
};

struct Reader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("program byte " + std::to_string(pos), what);
  }
  void need(std::size_t n) const {
    if (pos + n > size) fail("truncated program");
  }
  std::uint8_t u8() {
    need(1);
    return data[pos++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(data[pos++]) << (8 * i);
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data[pos++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data[pos++]) << (8 * i);
    return v;
  }
  std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
};

inline void encode_comm(Writer& w, const CommBlock& b) {
  w.u8(0);  // block kind
  w.u32(b.block_id);
  w.u8(static_cast<std::uint8_t>(b.direction));
  w.u16(b.vault_mask);
  w.u8(b.core_mask);
  w.u8(b.broadcast ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(static_cast<int>(b.target) | (b.bank << 7)));
  w.u64(b.dram_address);
  w.u32(b.length);
  w.u32(b.chunk_len);
  w.u32(b.count1);
  w.u64(b.stride1);
  w.u32(b.count2);
  w.u64(b.stride2);
}

inline void encode_compute(Writer& w, const ComputeBlock& b) {
  w.u8(1);  // block kind
  w.u32(b.block_id);
  w.u8(b.vault);
  w.u8(b.core);
  w.u8(b.partition_bits);
  w.u8(b.operand_bits);
  w.u16(b.accumulation_cycles);
  w.u16(static_cast<std::uint16_t>(b.depends_on.size()));
  for (auto d : b.depends_on) w.u32(d);
  w.u16(static_cast<std::uint16_t>(b.releases.size()));
  for (auto r : b.releases) w.u32(r);
  w.u16(static_cast<std::uint16_t>(b.ops.size()));
  for (const auto& op : b.ops) {
    if (const auto* d = std::get_if<DotOp>(&op)) {
      w.u8(0);
      w.u32(d->in_tile);
      w.u32(d->w_tile);
      w.u16(d->batch);
      w.u16(d->out_ch);
      w.u16(d->out_rows);
      w.u16(d->out_cols);
      w.u16(d->in_ch);
      w.u16(d->in_rows);
      w.u16(d->in_cols);
      w.u8(d->kernel);
      w.u8(d->stride);
      w.u8(d->pad);
      w.u8(d->out_shift);
      w.i16(d->row_offset);
      w.u8(d->is_fc);
    } else if (const auto* p = std::get_if<PoolOp>(&op)) {
      w.u8(1);
      w.u32(p->in_tile);
      w.u16(p->batch);
      w.u16(p->channels);
      w.u16(p->out_rows);
      w.u16(p->out_cols);
      w.u16(p->in_rows);
      w.u16(p->in_cols);
      w.u8(p->window);
      w.u8(p->stride);
      w.u8(p->mode);
    } else if (const auto* a = std::get_if<ActOp>(&op)) {
      w.u8(2);
      w.u32(a->in_tile);
      w.u32(a->elems);
      w.u8(a->fn);
    } else if (const auto* n = std::get_if<NormOp>(&op)) {
      w.u8(3);
      w.u32(n->in_tile);
      w.u32(n->elems);
      w.u16(n->mul);
      w.u8(n->shift);
    }
  }
}

}  // namespace detail

inline std::vector<std::uint8_t> encode(const Program& p) {
  detail::Writer w;
  for (auto m : kMagic) w.u8(m);
  w.u8(kVersion);
  w.u8(p.flags);
  w.u64(p.chip_hash);
  w.u32(static_cast<std::uint32_t>(p.blocks.size()));
  for (const auto& b : p.blocks) {
    if (const auto* c = std::get_if<CommBlock>(&b))
      detail::encode_comm(w, *c);
    else
      detail::encode_compute(w, std::get<ComputeBlock>(b));
  }
  return std::move(w.out);
}

inline Program decode(const std::vector<std::uint8_t>& bytes) {
  detail::Reader r{bytes.data(), bytes.size()};
  for (auto m : kMagic)
    if (r.u8() != m) r.fail("bad magic");
  const std::uint8_t version = r.u8();
  if (version != kVersion) r.fail("unsupported version " + std::to_string(version));
  Program p;
  p.flags = r.u8();
  p.chip_hash = r.u64();
  const std::uint32_t count = r.u32();
  // Every block is at least one byte; a larger count is a corrupt header.
  if (count > bytes.size() - r.pos) r.fail("block count exceeds payload");
  p.blocks.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint8_t kind = r.u8();
    if (kind == 0) {
      CommBlock b;
      b.block_id = r.u32();
      const std::uint8_t dir = r.u8();
      if (dir > 1) r.fail("bad comm direction");
      b.direction = static_cast<Direction>(dir);
      b.vault_mask = r.u16();
      b.core_mask = r.u8();
      b.broadcast = r.u8() != 0;
      const std::uint8_t target = r.u8();
      if ((target & 0x7f) > 2) r.fail("bad scratchpad target");
      b.target = static_cast<Scratchpad>(target & 0x7f);
      b.bank = target >> 7;
      b.dram_address = r.u64();
      b.length = r.u32();
      b.chunk_len = r.u32();
      b.count1 = r.u32();
      b.stride1 = r.u64();
      b.count2 = r.u32();
      b.stride2 = r.u64();
      p.blocks.emplace_back(b);
    } else if (kind == 1) {
      ComputeBlock b;
      b.block_id = r.u32();
      b.vault = r.u8();
      b.core = r.u8();
      b.partition_bits = r.u8();
      b.operand_bits = r.u8();
      b.accumulation_cycles = r.u16();
      const std::uint16_t ndeps = r.u16();
      for (std::uint16_t d = 0; d < ndeps; ++d) b.depends_on.push_back(r.u32());
      const std::uint16_t nrel = r.u16();
      for (std::uint16_t d = 0; d < nrel; ++d) b.releases.push_back(r.u32());
      const std::uint16_t nops = r.u16();
      for (std::uint16_t d = 0; d < nops; ++d) {
        const std::uint8_t op_kind = r.u8();
        if (op_kind == 0) {
          DotOp o;
          o.in_tile = r.u32();
          o.w_tile = r.u32();
          o.batch = r.u16();
          o.out_ch = r.u16();
          o.out_rows = r.u16();
          o.out_cols = r.u16();
          o.in_ch = r.u16();
          o.in_rows = r.u16();
          o.in_cols = r.u16();
          o.kernel = r.u8();
          o.stride = r.u8();
          o.pad = r.u8();
          o.out_shift = r.u8();
          o.row_offset = r.i16();
          o.is_fc = r.u8();
          b.ops.emplace_back(o);
        } else if (op_kind == 1) {
          PoolOp o;
          o.in_tile = r.u32();
          o.batch = r.u16();
          o.channels = r.u16();
          o.out_rows = r.u16();
          o.out_cols = r.u16();
          o.in_rows = r.u16();
          o.in_cols = r.u16();
          o.window = r.u8();
          o.stride = r.u8();
          o.mode = r.u8();
          b.ops.emplace_back(o);
        } else if (op_kind == 2) {
          ActOp o;
          o.in_tile = r.u32();
          o.elems = r.u32();
          o.fn = r.u8();
          b.ops.emplace_back(o);
        } else if (op_kind == 3) {
          NormOp o;
          o.in_tile = r.u32();
          o.elems = r.u32();
          o.mul = r.u16();
          o.shift = r.u8();
          b.ops.emplace_back(o);
        } else {
          r.fail("bad op kind");
        }
      }
      p.blocks.emplace_back(std::move(b));
    } else {
      r.fail("bad block kind");
    }
  }
  if (r.pos != r.size) r.fail("trailing bytes after last block");
  return p;
}

// ---------------------------------------------------------------------------
// Validation: every check reported, not just the first.

struct Diagnostic {
  std::uint32_t block_id = 0;
  std::string message;
};

namespace detail {

struct BankKey {
  int vault, core;
  Scratchpad buf;
  int bank;
  bool operator<(const BankKey& o) const {
    if (vault != o.vault) return vault < o.vault;
    if (core != o.core) return core < o.core;
    if (buf != o.buf) return static_cast<int>(buf) < static_cast<int>(o.buf);
    return bank < o.bank;
  }
};

inline void for_each_destination(const CommBlock& b, const arch::ChipConfig& chip,
                                 auto&& fn) {
  for (int v = 0; v < chip.vaults; ++v)
    if ((b.vault_mask >> v) & 1)
      for (int c = 0; c < chip.cores_per_vault; ++c)
        if ((b.core_mask >> c) & 1) fn(v, c);
}

}  // namespace detail

inline std::vector<Diagnostic> validate(const Program& p, const arch::ChipConfig& chip) {
  std::vector<Diagnostic> diags;
  auto diag = [&diags](std::uint32_t id, const std::string& msg) {
    diags.push_back({id, msg});
  };

  if (p.chip_hash != 0 && p.chip_hash != chip.config_hash())
    diag(0, "chip-config hash mismatch: program was compiled for a different chip");

  // Pass 1: id uniqueness and an index of blocks.
  std::map<std::uint32_t, std::size_t> index;
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::uint32_t id = block_id(p.blocks[i]);
    if (index.count(id))
      diag(id, "duplicate block id");
    else
      index[id] = i;
  }

  // Pass 2: structural checks per block, bank residency, release discipline.
  std::map<detail::BankKey, std::uint32_t> resident;          // bank -> comm id
  std::map<std::uint32_t, std::size_t> released_at;           // comm id -> position
  std::map<std::uint32_t, std::uint32_t> writeback_released_by;

  const std::uint16_t vault_limit =
      static_cast<std::uint16_t>((1u << chip.vaults) - 1);
  const std::uint8_t core_limit =
      static_cast<std::uint8_t>((1u << chip.cores_per_vault) - 1);

  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    if (const auto* c = std::get_if<CommBlock>(&p.blocks[i])) {
      if (c->length == 0) diag(c->block_id, "comm block with zero length");
      if (static_cast<std::uint64_t>(c->chunk_len) * c->count1 * c->count2 != c->length)
        diag(c->block_id, "length does not equal chunk_len*count1*count2");
      if (c->vault_mask == 0 || c->core_mask == 0)
        diag(c->block_id, "comm block with empty destination mask");
      if (c->vault_mask & ~vault_limit)
        diag(c->block_id, "vault mask addresses a vault beyond the chip");
      if (c->core_mask & ~core_limit)
        diag(c->block_id, "core mask addresses a core beyond the vault");
      if (c->broadcast != (c->destination_count() > 1))
        diag(c->block_id, "broadcast flag inconsistent with destination count");
      std::int64_t capacity = 0;
      switch (c->target) {
        case Scratchpad::kIbuf: capacity = chip.core.ibuf_bytes; break;
        case Scratchpad::kWbuf:
          capacity = chip.core.wbuf_bytes_per_mswagg * chip.core.mswaggs();
          break;
        case Scratchpad::kObuf: capacity = chip.core.obuf_bytes; break;
      }
      if (c->length > capacity / 2)
        diag(c->block_id, std::string("tile exceeds half-capacity of ") +
                              scratchpad_name(c->target));
      if (c->direction == Direction::kFetch) {
        if (c->target == Scratchpad::kObuf)
          diag(c->block_id, "fetch may not target OBUF");
        bool conflict = false;
        detail::for_each_destination(*c, chip, [&](int v, int cc) {
          detail::BankKey key{v, cc, c->target, c->bank};
          auto it = resident.find(key);
          if (it != resident.end()) {
            auto rel = released_at.find(it->second);
            if (rel == released_at.end() || rel->second > i) conflict = true;
          }
          resident[key] = c->block_id;
        });
        if (conflict)
          diag(c->block_id, "fetch reuses a bank whose tile is not yet released");
      } else {
        if (c->target != Scratchpad::kObuf)
          diag(c->block_id, "writeback must read OBUF");
        if (c->destination_count() != 1)
          diag(c->block_id, "writeback must name exactly one source core");
      }
    } else {
      const auto& b = std::get<ComputeBlock>(p.blocks[i]);
      if (b.vault >= chip.vaults || b.core >= chip.cores_per_vault)
        diag(b.block_id, "compute block placed outside the chip");
      if (b.accumulation_cycles < 1)
        diag(b.block_id, "accumulation cycles must be >= 1");
      if (b.partition_bits != chip.mswagg.scheme.partition_bits ||
          b.operand_bits != chip.mswagg.scheme.operand_bits)
        diag(b.block_id, "bit-partitioning does not match the chip's fixed wiring");

      for (auto dep : b.depends_on) {
        auto it = index.find(dep);
        if (it == index.end()) {
          diag(b.block_id, "unresolved dependency " + std::to_string(dep));
          continue;
        }
        if (it->second > i)
          diag(b.block_id, "depends on a block scheduled after it");
        const auto* dc = std::get_if<CommBlock>(&p.blocks[it->second]);
        if (!dc || dc->direction != Direction::kFetch) {
          diag(b.block_id, "dependency is not a fetch block");
          continue;
        }
        auto rel = released_at.find(dep);
        if (rel != released_at.end() && rel->second < i)
          diag(b.block_id, "references tile " + std::to_string(dep) + " after its release");
        bool covers = ((dc->vault_mask >> b.vault) & 1) && ((dc->core_mask >> b.core) & 1);
        if (!covers)
          diag(b.block_id, "dependency does not deliver to this block's core");
      }

      // Ops must consume declared tiles.
      auto declared = [&b](std::uint32_t tile) {
        for (auto d : b.depends_on)
          if (d == tile) return true;
        return false;
      };
      std::int64_t produced = 0;
      for (const auto& op : b.ops) {
        std::uint32_t tiles[2] = {0, 0};
        int ntiles = 0;
        if (const auto* d = std::get_if<DotOp>(&op)) {
          tiles[ntiles++] = d->in_tile;
          tiles[ntiles++] = d->w_tile;
          produced += d->outputs();
          if (b.accumulation_cycles >= 1) {  // otherwise already diagnosed
            auto cost = mapping::dot_cost(d->work(), chip.core,
                                          {static_cast<int>(chip.macc.n_lanes),
                                           static_cast<int>(b.accumulation_cycles),
                                           chip.macc.adc});
            if (cost.wbuf_bytes_per_mswagg > chip.core.wbuf_bytes_per_mswagg / 2)
              diag(b.block_id, "per-aggregator weight footprint exceeds WBUF half-capacity");
            if (cost.obuf_write_bytes > chip.core.obuf_bytes / 2)
              diag(b.block_id, "output tile exceeds OBUF half-capacity");
          }
        } else if (const auto* pl = std::get_if<PoolOp>(&op)) {
          tiles[ntiles++] = pl->in_tile;
          produced += pl->outputs();
        } else if (const auto* a = std::get_if<ActOp>(&op)) {
          tiles[ntiles++] = a->in_tile;
          produced += a->elems;
        } else if (const auto* n = std::get_if<NormOp>(&op)) {
          tiles[ntiles++] = n->in_tile;
          produced += n->elems;
        }
        for (int t = 0; t < ntiles; ++t)
          if (!declared(tiles[t]))
            diag(b.block_id,
                 "op consumes tile " + std::to_string(tiles[t]) + " not in depends_on");
      }

      int writebacks = 0;
      for (auto rel : b.releases) {
        auto it = index.find(rel);
        if (it == index.end()) {
          diag(b.block_id, "release of unknown block " + std::to_string(rel));
          continue;
        }
        const auto* rc = std::get_if<CommBlock>(&p.blocks[it->second]);
        if (!rc) {
          diag(b.block_id, "release target is not a comm block");
          continue;
        }
        if (released_at.count(rel)) {
          diag(b.block_id, "block " + std::to_string(rel) + " released twice");
          continue;
        }
        released_at[rel] = i;
        if (rc->direction == Direction::kWriteback) {
          ++writebacks;
          writeback_released_by[rel] = b.block_id;
          if (it->second < i)
            diag(b.block_id, "writeback must be scheduled after its producing compute block");
          if (!((rc->vault_mask >> b.vault) & 1) || !((rc->core_mask >> b.core) & 1))
            diag(b.block_id, "released writeback does not read this block's core");
        } else {
          if (it->second > i)
            diag(b.block_id, "fetch release must reference an earlier block");
        }
      }
      if (produced > 0 && writebacks == 0)
        diag(b.block_id, "compute block produces outputs but releases no writeback");
      if (writebacks > 1)
        diag(b.block_id, "compute block releases more than one writeback");
    }
  }

  // Every writeback block must be released by exactly one compute block.
  for (const auto& blk : p.blocks)
    if (const auto* c = std::get_if<CommBlock>(&blk))
      if (c->direction == Direction::kWriteback && !writeback_released_by.count(c->block_id))
        diag(c->block_id, "writeback is never released by a compute block");

  return diags;
}

// ---------------------------------------------------------------------------
// Disassembly (debugging aid).

inline std::string disassemble(const Program& p) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "program flags=%u chip=%016llx blocks=%zu\n", p.flags,
                static_cast<unsigned long long>(p.chip_hash), p.blocks.size());
  out += buf;
  for (const auto& blk : p.blocks) {
    if (const auto* c = std::get_if<CommBlock>(&blk)) {
      std::snprintf(buf, sizeof(buf),
                    "  comm %u %s vaults=%04x cores=%02x%s %s.bank%u dram=0x%llx len=%u "
                    "(%ux%ux%u)\n",
                    c->block_id, c->direction == Direction::kFetch ? "fetch" : "writeback",
                    c->vault_mask, c->core_mask, c->broadcast ? " bcast" : "",
                    scratchpad_name(c->target), c->bank,
                    static_cast<unsigned long long>(c->dram_address), c->length, c->chunk_len,
                    c->count1, c->count2);
      out += buf;
    } else {
      const auto& b = std::get<ComputeBlock>(blk);
      std::snprintf(buf, sizeof(buf),
                    "  compute %u @v%u.c%u pb=%u ob=%u m=%u deps=%zu rel=%zu ops=%zu\n",
                    b.block_id, b.vault, b.core, b.partition_bits, b.operand_bits,
                    b.accumulation_cycles, b.depends_on.size(), b.releases.size(),
                    b.ops.size());
      out += buf;
      for (const auto& op : b.ops) {
        if (const auto* d = std::get_if<DotOp>(&op)) {
          std::snprintf(buf, sizeof(buf),
                        "    dot%s in=%u w=%u b=%u oc=%u %ux%u ic=%u k=%u s=%u p=%u shift=%u\n",
                        d->is_fc ? "(fc)" : "", d->in_tile, d->w_tile, d->batch, d->out_ch,
                        d->out_rows, d->out_cols, d->in_ch, d->kernel, d->stride, d->pad,
                        d->out_shift);
          out += buf;
        } else if (const auto* pl = std::get_if<PoolOp>(&op)) {
          std::snprintf(buf, sizeof(buf), "    pool in=%u b=%u c=%u %ux%u w=%u s=%u m=%u\n",
                        pl->in_tile, pl->batch, pl->channels, pl->out_rows, pl->out_cols,
                        pl->window, pl->stride, pl->mode);
          out += buf;
        } else if (const auto* a = std::get_if<ActOp>(&op)) {
          std::snprintf(buf, sizeof(buf), "    act in=%u n=%u fn=%u\n", a->in_tile, a->elems,
                        a->fn);
          out += buf;
        } else if (const auto* n = std::get_if<NormOp>(&op)) {
          std::snprintf(buf, sizeof(buf), "    norm in=%u n=%u mul=%u shift=%u\n", n->in_tile,
                        n->elems, n->mul, n->shift);
          out += buf;
        }
      }
    }
  }
  return out;
}

}  // namespace bpsim::isa
