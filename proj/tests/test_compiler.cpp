// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "bpsim/compiler.hpp"
#include "oracles.hpp"

using namespace bpsim;
using namespace bpsim::compiler;

namespace {

arch::ChipConfig small_chip() {
  arch::ChipConfig chip;
  chip.vaults = 2;
  chip.cores_per_vault = 4;
  chip.validate();
  return chip;
}

model::LayerDFG fc_model(std::int64_t batch, std::int64_t in, std::int64_t out) {
  std::string text = "model fc\n";
  text += "input a batch=" + std::to_string(batch) + " channels=" + std::to_string(in) +
          " height=1 width=1\n";
  text += "layer f kind=fc in=a out=b out_features=" + std::to_string(out) + " shift=7\n";
  return model::parse_model(text, "fc.model");
}

}  // namespace

TEST_CASE("layout assignment is aligned and canonical") {
  auto dfg = fc_model(4, 64, 16);
  auto layout = assign_layout(dfg);
  REQUIRE(layout.entries.size() == 3);  // a, f.w, b
  CHECK(layout.entries[0].name == "a");
  CHECK(layout.entries[0].address == 0);
  CHECK(layout.entries[1].name == "f.w");
  CHECK(layout.entries[1].address % 64 == 0);
  CHECK(layout.find("b").bytes == 64);

  auto tsv = layout_to_tsv(layout);
  auto back = layout_from_tsv(tsv, "layout");
  REQUIRE(back.entries.size() == layout.entries.size());
  CHECK(back.find("f.w").address == layout.find("f.w").address);
  CHECK(back.find("f.w").role == ref::TensorRole::kWeight);

  auto image = build_image(layout, 5);
  CHECK(image.size() == layout.end_address);
  auto expect = ref::generate_tensor_data(5, 0, 4 * 64);
  for (std::size_t i = 0; i < expect.size(); ++i)
    CHECK(static_cast<std::int8_t>(image[i]) == expect[i]);
}

TEST_CASE("enumeration includes the whole-layer tile when it fits") {
  auto dfg = fc_model(4, 64, 16);
  auto chip = small_chip();
  auto cands = enumerate_candidates(dfg.layers[0], chip);
  bool whole = false;
  for (const auto& c : cands)
    whole |= (c.tile.batch == 4 && c.tile.out_ch == 16);
  CHECK(whole);

  for (const auto& c : cands)
    for (std::size_t i = 0; i < c.cuts.size(); ++i)
      for (std::size_t j = i + 1; j < c.cuts.size(); ++j) CHECK(!(c.cuts[i] == c.cuts[j]));
}

TEST_CASE("weight tiles respect the WBUF half-capacity rule") {
  auto dfg = fc_model(1, 1024, 1024);
  auto chip = small_chip();
  chip.core.wbuf_bytes_per_mswagg = 64 * 1024;
  chip.core.ibuf_bytes = 64 * 1024;
  chip.core.obuf_bytes = 64 * 1024;
  auto cands = enumerate_candidates(dfg.layers[0], chip);
  REQUIRE(!cands.empty());
  for (const auto& c : cands)
    for (const auto& cut : c.cuts) {
      TilePlanner tp(dfg.layers[0], c.tile, cut, chip);
      auto plan = tp.step(0);
      for (const auto& s : plan.parts) {
        auto cost = mapping::dot_cost(tp.dot_work(s), chip.core, chip.macc);
        CHECK(cost.wbuf_bytes_per_mswagg <= 32 * 1024);
      }
    }
}

TEST_CASE("the batch-cut with broadcast weights exists for batch 16") {
  auto dfg = fc_model(16, 256, 64);
  auto chip = small_chip();
  auto cands = enumerate_candidates(dfg.layers[0], chip);
  bool found = false;
  for (const auto& c : cands)
    if (c.tile.batch == 16)
      for (const auto& cut : c.cuts)
        if (cut.axis == CutAxis::kBatch && cut.parts == 4 && cut.broadcasts_weights())
          found = true;
  CHECK(found);
}

TEST_CASE("infeasible layers name the binding buffer") {
  auto dfg = fc_model(1, 4096, 8);
  auto chip = small_chip();
  chip.core.wbuf_bytes_per_mswagg = 256;  // one 4 KB filter can never fit
  try {
    enumerate_candidates(dfg.layers[0], chip);
    FAIL("expected InfeasibleError");
  } catch (const InfeasibleError& e) {
    CHECK(e.binding_buffer() == "WBUF");
  }
}

TEST_CASE("estimate of a zero layer is zero") {
  model::Layer l;
  l.kind = model::LayerKind::kFc;
  l.out_channels = 0;
  l.in_shape = {0, 0, 0, 0};
  l.out_shape = {0, 0, 0, 0};
  auto e = estimate(l, TileSpec{1, 1, 1, 1, 1}, CutSpec{}, small_chip(), energy::EnergyTable{});
  CHECK(e.cycles == 0);
  CHECK(e.energy_aj == 0);
}

TEST_CASE("memory-bound layers are dominated by transfer cycles") {
  auto dfg = fc_model(1, 1024, 64);
  auto chip = small_chip();
  energy::EnergyTable table;
  auto layer = dfg.layers[0];
  // Whole-layer tile, no cut: 64 KB of weights against a trickle of compute.
  auto e = estimate(layer, TileSpec{1, 64, 1, 1, 1024}, CutSpec{CutAxis::kBatch, 1}, chip,
                    table);
  const std::int64_t weight_cycles = 64 * 1024 / chip.effective_bandwidth();
  CHECK(e.cycles >= weight_cycles);
  CHECK(e.cycles <= 2 * weight_cycles);
}

TEST_CASE("optimizer picks the argmin and honors the tie-break") {
  auto dfg = fc_model(8, 128, 32);
  auto chip = small_chip();
  energy::EnergyTable table;
  auto schedule = optimize(dfg, chip, table);
  REQUIRE(schedule.layers.size() == 1);
  const auto& choice = schedule.layers[0];
  CHECK(choice.candidate_count > 1);

  // Independent brute force: flatten, score, stable-sort.
  struct Row {
    TileSpec tile;
    CutSpec cut;
    Estimate est;
    std::size_t order;
  };
  std::vector<Row> rows;
  for (const auto& cand : enumerate_candidates(dfg.layers[0], chip))
    for (const auto& cut : cand.cuts)
      rows.push_back({cand.tile, cut, estimate(dfg.layers[0], cand.tile, cut, chip, table),
                      rows.size()});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const unsigned __int128 sa = static_cast<unsigned __int128>(a.est.cycles) *
                                 static_cast<unsigned __int128>(a.est.energy_aj);
    const unsigned __int128 sb = static_cast<unsigned __int128>(b.est.cycles) *
                                 static_cast<unsigned __int128>(b.est.energy_aj);
    if (sa != sb) return sa < sb;
    if (a.est.energy_aj != b.est.energy_aj) return a.est.energy_aj < b.est.energy_aj;
    if (a.est.cycles != b.est.cycles) return a.est.cycles < b.est.cycles;
    return a.order < b.order;
  });
  REQUIRE(!rows.empty());
  CHECK(rows[0].tile.batch == choice.tile.batch);
  CHECK(rows[0].tile.out_ch == choice.tile.out_ch);
  CHECK(rows[0].tile.rows == choice.tile.rows);
  CHECK(rows[0].cut == choice.cut);
  CHECK(rows[0].est.cycles == choice.estimate.cycles);
  CHECK(rows[0].est.energy_aj == choice.estimate.energy_aj);
}

TEST_CASE("codegen emits the expected structure for a one-tile layer") {
  auto dfg = fc_model(2, 32, 8);
  auto chip = small_chip();
  energy::EnergyTable table;
  auto compiled = compile(dfg, chip, table);

  REQUIRE(compiled.program.blocks.size() == 4);
  const auto& f0 = std::get<isa::CommBlock>(compiled.program.blocks[0]);
  const auto& f1 = std::get<isa::CommBlock>(compiled.program.blocks[1]);
  const auto& cb = std::get<isa::ComputeBlock>(compiled.program.blocks[2]);
  const auto& wb = std::get<isa::CommBlock>(compiled.program.blocks[3]);
  CHECK(f0.target == isa::Scratchpad::kIbuf);
  CHECK(f1.target == isa::Scratchpad::kWbuf);
  CHECK(cb.depends_on == std::vector<std::uint32_t>{f0.block_id, f1.block_id});
  CHECK(wb.direction == isa::Direction::kWriteback);
  CHECK(cb.releases.back() == wb.block_id);

  auto diags = isa::validate(compiled.program, chip);
  if (!diags.empty()) {
    CAPTURE(diags[0].block_id, diags[0].message);
    FAIL("compiled program should validate cleanly");
  }

  auto bytes = isa::encode(compiled.program);
  CHECK(isa::decode(bytes) == compiled.program);
  auto again = compile(dfg, chip, table);
  CHECK(isa::encode(again.program) == bytes);
}

TEST_CASE("empty model compiles to a header-only program") {
  auto dfg = model::parse_model(
      "model empty\ninput a batch=1 channels=1 height=1 width=1\n", "empty.model");
  auto compiled = compile(dfg, small_chip(), energy::EnergyTable{});
  CHECK(compiled.program.blocks.empty());
}

TEST_CASE("batch cut produces a multicast weight mask over four cores") {
  auto dfg = fc_model(16, 256, 64);
  auto chip = small_chip();
  energy::EnergyTable table;

  auto layer = dfg.layers[0];
  TileSpec tile{16, 64, 1, 1, 256};
  CutSpec cut{CutAxis::kBatch, 4};
  REQUIRE(TilePlanner(layer, tile, cut, chip).feasible());
  auto layout = assign_layout(dfg);
  compiler::detail::Emitter em;
  auto blocks = compiler::detail::emit_step(em, TilePlanner(layer, tile, cut, chip), 0, layout);
  bool found = false;
  for (const auto& f : blocks.fetches)
    if (f.target == isa::Scratchpad::kWbuf) {
      CHECK(f.broadcast);
      CHECK(f.vault_mask == 0x1);
      CHECK(f.core_mask == 0xf);
      found = true;
    }
  CHECK(found);
  CHECK(blocks.computes.size() == 4);
}

TEST_CASE("schedule summary is tabular and complete") {
  auto dfg = fc_model(4, 64, 16);
  auto chip = small_chip();
  auto compiled = compile(dfg, chip, energy::EnergyTable{});
  auto text = schedule_summary(dfg, compiled.schedule);
  CHECK(text.find("layer\tkind") == 0);
  CHECK(text.find("\nf\tfc\t") != std::string::npos);
  CHECK(text.find("total\t") != std::string::npos);
}
