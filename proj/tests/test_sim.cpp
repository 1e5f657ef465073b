// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "bpsim/compiler.hpp"
#include "bpsim/sim.hpp"
#include "program_gen.hpp"

using namespace bpsim;
using namespace bpsim::sim;

namespace {

arch::ChipConfig small_chip() {
  arch::ChipConfig chip;
  chip.vaults = 2;
  chip.cores_per_vault = 4;
  chip.validate();
  return chip;
}

bitpart::SignMagnitudeValue sm(std::int64_t v) {
  return bitpart::to_sign_magnitude(v, 8).value;
}

std::vector<std::int8_t> tensor_from_image(const std::vector<std::uint8_t>& image,
                                           const compiler::Layout& layout,
                                           const std::string& name) {
  const auto& e = layout.find(name);
  std::vector<std::int8_t> out(static_cast<std::size_t>(e.bytes));
  for (std::int64_t i = 0; i < e.bytes; ++i)
    out[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(image[e.address + i]);
  return out;
}

struct RunResult {
  SimResult sim;
  compiler::CompiledProgram compiled;
};

RunResult compile_and_run(const std::string& text, const arch::ChipConfig& chip,
                          SimOptions options = {}, std::uint64_t data_seed = 11) {
  auto dfg = model::parse_model(text, "test.model");
  energy::EnergyTable table;
  auto compiled = compiler::compile(dfg, chip, table);
  auto diags = isa::validate(compiled.program, chip);
  if (!diags.empty())
    throw std::runtime_error("validation: " + diags[0].message);
  auto image = compiler::build_image(compiled.layout, data_seed);
  auto result = simulate(compiled.program, chip, table, options, std::move(image));
  return {std::move(result), std::move(compiled)};
}

void check_against_reference(const std::string& text, const arch::ChipConfig& chip) {
  auto dfg = model::parse_model(text, "test.model");
  auto run = compile_and_run(text, chip);
  auto expect = ref::evaluate(dfg, 11);
  for (const auto& layer : dfg.layers) {
    auto got = tensor_from_image(run.sim.dram_image, run.compiled.layout, layer.output);
    const auto& want = expect.at(layer.output);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      if (got[i] != want[i]) {
        CAPTURE(layer.name, i, static_cast<int>(got[i]), static_cast<int>(want[i]));
        FAIL("simulator output diverged from the reference");
      }
    }
  }
}

}  // namespace

TEST_CASE("aggregator unit computes single elements") {
  MsWaggUnit unit(bitpart::PartitionScheme(8, 2), 8, 32);
  std::vector<bitpart::SignMagnitudeValue> x{sm(1)}, w{sm(1)};
  unit.step(x, w);
  unit.idle(31);
  unit.end_window();
  CHECK(unit.output_register() == 1);

  unit.reset();
  unit.step({sm(5), sm(-3)}, {sm(0), sm(0)});
  unit.idle(31);
  unit.end_window();
  CHECK(unit.output_register() == 0);
}

TEST_CASE("aggregator unit accumulates windows digitally") {
  // 13*9 + 9*13 = 234 split across two windows.
  MsWaggUnit unit(bitpart::PartitionScheme(8, 2), 8, 2);
  unit.step({sm(13)}, {sm(9)});
  unit.step({sm(0)}, {sm(0)});
  unit.end_window();
  CHECK(unit.output_register() == 117);
  unit.step({sm(9)}, {sm(13)});
  unit.step({sm(0)}, {sm(0)});
  unit.end_window();
  CHECK(unit.output_register() == 234);
  CHECK(unit.windows() == 2);
}

TEST_CASE("aggregator unit enforces the conversion drain") {
  MsWaggUnit unit(bitpart::PartitionScheme(8, 2), 8, 4);
  unit.step({sm(1)}, {sm(1)});
  unit.step({sm(1)}, {sm(1)});
  unit.step({sm(1)}, {sm(1)});
  unit.step({sm(1)}, {sm(1)});
  unit.end_window();
  unit.step({sm(2)}, {sm(2)});
  // Aggregating after one cycle violates the m+1 converter occupancy.
  CHECK_THROWS_AS(unit.end_window(), ContractViolation);
  unit.idle(3);
  unit.end_window();
  CHECK(unit.output_register() == 8);
}

TEST_CASE("aggregator handles signs through the capacitor pair") {
  MsWaggUnit unit(bitpart::PartitionScheme(8, 2), 8, 1);
  unit.step({sm(7), sm(-7), sm(3)}, {sm(2), sm(2), sm(-3)});
  unit.end_window();
  CHECK(unit.output_register() == 7 * 2 - 7 * 2 - 9);
  auto [pos, neg] = unit.window_tally(0, 0);
  CHECK(pos == 0);  // window closed, tallies reset
  CHECK(neg == 0);
}

TEST_CASE("steady-state window cadence has zero bubbles") {
  // Marginal cost of one more full-window output is exactly m+1 cycles.
  const int m = 32;
  for (std::int64_t k = 1; k < 6; ++k) {
    const std::int64_t d1 = mapping::unit_timeline_end(k, m, m);
    const std::int64_t d2 = mapping::unit_timeline_end(k + 1, m, m);
    CHECK(d2 - d1 == m + 1);
  }
  // Short windows are converter-gated to the same cadence.
  const std::int64_t s1 = mapping::unit_timeline_end(1, 4, m);
  const std::int64_t s2 = mapping::unit_timeline_end(2, 4, m);
  CHECK(s2 - s1 == m + 1);
}

TEST_CASE("empty program simulates to zero cycles and energy") {
  isa::Program p;
  auto chip = small_chip();
  p.chip_hash = chip.config_hash();
  auto r = simulate(p, chip, energy::EnergyTable{}, SimOptions{}, {});
  CHECK(r.stats.total_cycles == 0);
  CHECK(r.energy.total_aj() == 0);
}

TEST_CASE("one dot of length 256 costs exactly one conversion window") {
  auto chip = small_chip();
  auto run = compile_and_run(
      "model one\n"
      "input a batch=1 channels=256 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=1 shift=8\n",
      chip);
  CHECK(run.sim.stats.adc_conversions == 1);
  CHECK(run.sim.stats.obuf_element_writes == 1);
}

TEST_CASE("dot length 576 needs three windows per output") {
  auto chip = small_chip();
  auto run = compile_and_run(
      "model conv\n"
      "input a batch=1 channels=64 height=5 width=5\n"
      "layer c kind=conv in=a out=b out_channels=2 kernel=3 stride=1 pad=0 shift=9\n",
      chip);
  // 2 channels x 3x3 outputs, r = ceil(576/256) = 3 each.
  CHECK(run.sim.stats.adc_conversions == 2 * 9 * 3);
  CHECK(run.sim.stats.obuf_element_writes == 2 * 9);
}

TEST_CASE("simulator matches the whole-layer reference bit-exactly") {
  auto chip = small_chip();
  SECTION("fc") {
    check_against_reference(
        "model m\ninput a batch=3 channels=100 height=1 width=1\n"
        "layer f kind=fc in=a out=b out_features=17 shift=6\n",
        chip);
  }
  SECTION("conv with padding") {
    check_against_reference(
        "model m\ninput a batch=2 channels=3 height=6 width=7\n"
        "layer c kind=conv in=a out=b out_channels=5 kernel=3 stride=1 pad=1 shift=5\n",
        chip);
  }
  SECTION("strided conv") {
    check_against_reference(
        "model m\ninput a batch=1 channels=4 height=9 width=9\n"
        "layer c kind=conv in=a out=b out_channels=3 kernel=3 stride=2 pad=0 shift=4\n",
        chip);
  }
  SECTION("pool and act and norm") {
    check_against_reference(
        "model m\ninput a batch=2 channels=4 height=6 width=6\n"
        "layer c kind=conv in=a out=t out_channels=4 kernel=3 stride=1 pad=1 shift=6\n"
        "layer p kind=pool in=t out=u window=2 stride=2 mode=max\n"
        "layer r kind=act in=u out=v fn=relu\n"
        "layer n kind=norm in=v out=w mul=3 shift=1\n",
        chip);
  }
  SECTION("avg pool chain into fc") {
    check_against_reference(
        "model m\ninput a batch=2 channels=3 height=4 width=4\n"
        "layer p kind=pool in=a out=t window=2 stride=2 mode=avg\n"
        "layer f kind=fc in=t out=b out_features=9 shift=5\n",
        chip);
  }
}

TEST_CASE("simulation is deterministic") {
  auto chip = small_chip();
  const std::string text =
      "model m\ninput a batch=4 channels=32 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=8 shift=6\n";
  auto r1 = compile_and_run(text, chip);
  auto r2 = compile_and_run(text, chip);
  CHECK(r1.sim.stats.total_cycles == r2.sim.stats.total_cycles);
  CHECK(r1.sim.energy == r2.sim.energy);
  CHECK(r1.sim.dram_image == r2.sim.dram_image);
}

TEST_CASE("estimator matches the simulator on windows, bytes, and energy") {
  auto chip = small_chip();
  const std::string text =
      "model m\ninput a batch=4 channels=64 height=4 width=4\n"
      "layer c kind=conv in=a out=t out_channels=8 kernel=3 stride=1 pad=1 shift=8\n"
      "layer f kind=fc in=t out=b out_features=12 shift=8\n";
  auto run = compile_and_run(text, chip);
  std::int64_t est_windows = 0, est_dram = 0, est_energy = 0;
  for (const auto& l : run.compiled.schedule.layers) {
    est_windows += l.estimate.windows;
    est_dram += l.estimate.dram_bytes;
    est_energy += l.estimate.energy_aj;
  }
  CHECK(est_windows == static_cast<std::int64_t>(run.sim.stats.adc_conversions));
  CHECK(est_dram == static_cast<std::int64_t>(run.sim.stats.dram_bytes()));
  CHECK(est_energy == run.sim.energy.total_aj());

  const double est_cycles = static_cast<double>(run.compiled.schedule.chained_cycles);
  const double sim_cycles = static_cast<double>(run.sim.stats.total_cycles);
  CHECK(std::abs(est_cycles - sim_cycles) / sim_cycles <= 0.05);
}

TEST_CASE("broadcast traffic is counted once on DRAM") {
  isa::CommBlock bcast;
  bcast.length = 1024;
  bcast.chunk_len = 1024;
  bcast.vault_mask = 0x1;
  bcast.core_mask = 0xf;
  bcast.broadcast = true;
  auto chip = small_chip();
  auto cost = transfer_cost(bcast, chip);
  CHECK(cost.dram_bytes == 1024);
  CHECK(cost.scratchpad_bytes == 4 * 1024);

  isa::CommBlock uni = bcast;
  uni.core_mask = 0x1;
  uni.broadcast = false;
  auto ucost = transfer_cost(uni, chip);
  CHECK(ucost.dram_bytes == 1024);
  CHECK(ucost.scratchpad_bytes == 1024);
  CHECK(cost.cycles == ucost.cycles);  // one traversal either way
}

TEST_CASE("nonideal mode changes values, not timing") {
  auto chip = small_chip();
  const std::string text =
      "model m\ninput a batch=2 channels=64 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=8 shift=0\n";
  SimOptions ideal;
  SimOptions noisy;
  noisy.mode = SimOptions::Mode::kNonideal;
  noisy.sigma_acc = 0.45;
  noisy.record_outputs = true;
  SimOptions noisy2 = noisy;
  noisy2.seed = 77;

  auto r0 = compile_and_run(text, chip, ideal);
  auto r1 = compile_and_run(text, chip, noisy);
  auto r2 = compile_and_run(text, chip, noisy2);
  CHECK(r1.sim.stats.total_cycles == r0.sim.stats.total_cycles);
  CHECK(r2.sim.stats.total_cycles == r1.sim.stats.total_cycles);
  CHECK(r1.sim.recorded.size() == 16);
  bool differs = false;
  for (std::size_t i = 0; i < r1.sim.recorded.size(); ++i)
    differs |= r1.sim.recorded[i].value != r2.sim.recorded[i].value;
  CHECK(differs);

  // Same seed reproduces exactly.
  auto r1b = compile_and_run(text, chip, noisy);
  for (std::size_t i = 0; i < r1.sim.recorded.size(); ++i)
    CHECK(r1.sim.recorded[i].value == r1b.sim.recorded[i].value);
}

TEST_CASE("computational error shrinks toward the ideal limit") {
  auto chip = small_chip();
  const std::string text =
      "model m\ninput a batch=1 channels=32 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=4 shift=0\n";
  SimOptions comp;
  comp.mode = SimOptions::Mode::kNonideal;
  comp.thermal_noise = false;
  comp.computational_error = true;
  comp.record_outputs = true;

  SimOptions ideal;
  ideal.record_outputs = true;
  auto r0 = compile_and_run(text, chip, ideal);

  auto r1 = compile_and_run(text, chip, comp);
  REQUIRE(r1.sim.recorded.size() == r0.sim.recorded.size());
  bool shifted = false;
  for (std::size_t i = 0; i < r1.sim.recorded.size(); ++i)
    shifted |= std::abs(r1.sim.recorded[i].value - r0.sim.recorded[i].value) > 1e-9;
  CHECK(shifted);  // alpha=8, beta=3 has visible charge-transfer error

  SimOptions big = comp;
  big.bank = analog::CapacitorBank::from_ratios(1e6, 1e6);
  auto r2 = compile_and_run(text, chip, big);
  for (std::size_t i = 0; i < r2.sim.recorded.size(); ++i) {
    const double ref = r0.sim.recorded[i].value;
    if (ref != 0.0)
      CHECK(std::abs(r2.sim.recorded[i].value - ref) / std::abs(ref) < 1e-4);
  }
}

TEST_CASE("recorded windows feed the noise spec's r") {
  auto chip = small_chip();
  auto run = compile_and_run(
      "model m\ninput a batch=1 channels=600 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=3 shift=8\n",
      chip, [] {
        SimOptions o;
        o.record_outputs = true;
        return o;
      }());
  REQUIRE(run.sim.recorded.size() == 3);
  for (const auto& r : run.sim.recorded) CHECK(r.windows == 3);  // ceil(600/256)
}

TEST_CASE("disjoint bus slots add exactly") {
  auto chip = small_chip();
  auto make_fetch = [&](std::uint32_t id, std::uint32_t len, std::uint8_t bank) {
    isa::CommBlock b;
    b.block_id = id;
    b.vault_mask = 1;
    b.core_mask = 1;
    b.target = isa::Scratchpad::kIbuf;
    b.bank = bank;
    b.dram_address = 0;
    b.chunk_len = len;
    b.length = len;
    return b;
  };
  isa::Program one;
  one.chip_hash = chip.config_hash();
  one.blocks.emplace_back(make_fetch(1, 512, 0));
  isa::Program two = one;
  two.blocks.emplace_back(make_fetch(2, 768, 1));

  std::vector<std::uint8_t> image(4096, 0);
  auto r1 = simulate(one, chip, energy::EnergyTable{}, SimOptions{}, image);
  auto r2 = simulate(two, chip, energy::EnergyTable{}, SimOptions{}, image);
  const auto c1 = transfer_cost(make_fetch(1, 512, 0), chip).cycles;
  const auto c2 = transfer_cost(make_fetch(2, 768, 1), chip).cycles;
  CHECK(static_cast<std::int64_t>(r1.stats.total_cycles) == c1);
  CHECK(static_cast<std::int64_t>(r2.stats.total_cycles) == c1 + c2);
}

TEST_CASE("programs that validate cleanly run without schedule or capacity errors") {
  Rng rng(0x50f7);
  auto chip = small_chip();
  energy::EnergyTable table;
  for (int trial = 0; trial < 50; ++trial) {
    auto p = bpsim::testing::make_random_program(rng, chip);
    REQUIRE(isa::validate(p, chip).empty());
    // Size the image to cover every referenced DRAM region.
    std::uint64_t extent = 64;
    for (const auto& blk : p.blocks)
      if (const auto* c = std::get_if<isa::CommBlock>(&blk))
        extent = std::max(extent, c->dram_address + c->length);
    std::vector<std::uint8_t> image(extent, 1);
    REQUIRE_NOTHROW(simulate(p, chip, table, SimOptions{}, std::move(image)));
  }
}

TEST_CASE("trace lines are cycle,unit,event") {
  auto chip = small_chip();
  SimOptions opt;
  opt.collect_trace = true;
  auto run = compile_and_run(
      "model m\ninput a batch=1 channels=16 height=1 width=1\n"
      "layer f kind=fc in=a out=b out_features=2 shift=4\n",
      chip, opt);
  REQUIRE(!run.sim.trace.empty());
  for (const auto& line : run.sim.trace)
    CHECK(std::count(line.begin(), line.end(), ',') == 2);
  CHECK(run.sim.trace.front().find("fetch") != std::string::npos);
  CHECK(run.sim.trace.back().find("done") != std::string::npos);
}

TEST_CASE("randomized models stay bit-exact with an exact estimator") {
  Rng rng(0x57e55);
  energy::EnergyTable table;
  int checked = 0;
  for (int trial = 0; trial < 24; ++trial) {
    arch::ChipConfig chip;
    chip.vaults = static_cast<int>(rng.next_int(1, 2));
    chip.cores_per_vault = static_cast<int>(1 << rng.next_int(0, 2));
    chip.core.rows = static_cast<int>(1 << rng.next_int(1, 3));
    chip.core.cols = static_cast<int>(1 << rng.next_int(0, 2));
    chip.core.ibuf_bytes = 2048 << rng.next_int(0, 3);
    chip.core.obuf_bytes = 1024 << rng.next_int(0, 2);
    chip.core.wbuf_bytes_per_mswagg = 512 << rng.next_int(0, 3);
    chip.macc.n_lanes = static_cast<int>(1 << rng.next_int(2, 4));
    chip.macc.m_cycles = static_cast<int>(1 << rng.next_int(3, 5));
    chip.validate();

    const std::int64_t batch = rng.next_int(1, 5);
    const std::int64_t ch = rng.next_int(2, 12);
    const std::int64_t hw = rng.next_int(3, 7);
    const std::int64_t oc = rng.next_int(1, 10);
    const std::int64_t feats = rng.next_int(1, 20);
    std::string text = "model r\n";
    text += "input a batch=" + std::to_string(batch) + " channels=" + std::to_string(ch) +
            " height=" + std::to_string(hw) + " width=" + std::to_string(hw) + "\n";
    text += "layer c kind=conv in=a out=t out_channels=" + std::to_string(oc) +
            " kernel=3 stride=1 pad=1 shift=7\n";
    text += "layer r kind=act in=t out=u fn=relu\n";
    text += "layer f kind=fc in=u out=b out_features=" + std::to_string(feats) + " shift=8\n";
    auto dfg = model::parse_model(text, "stress");

    compiler::CompiledProgram compiled;
    try {
      compiled = compiler::compile(dfg, chip, table);
    } catch (const InfeasibleError&) {
      continue;
    }
    ++checked;
    REQUIRE(isa::validate(compiled.program, chip).empty());
    auto image = compiler::build_image(compiled.layout, 3 + trial);
    auto result = simulate(compiled.program, chip, table, SimOptions{}, std::move(image));

    // Bit-exactness of every tensor.
    auto expect = ref::evaluate(dfg, 3 + trial);
    std::int64_t total_outputs = 0;
    for (const auto& layer : dfg.layers) {
      total_outputs += layer.out_shape.elements();
      auto got = tensor_from_image(result.dram_image, compiled.layout, layer.output);
      REQUIRE(got == expect.at(layer.output));
    }

    // Output-stationary: one OBUF write per output element.
    REQUIRE(static_cast<std::int64_t>(result.stats.obuf_element_writes) == total_outputs);

    // Estimator agreement: exact on windows/bytes/energy, 5% on cycles.
    std::int64_t est_windows = 0, est_dram = 0, est_energy = 0;
    for (const auto& l : compiled.schedule.layers) {
      est_windows += l.estimate.windows;
      est_dram += l.estimate.dram_bytes;
      est_energy += l.estimate.energy_aj;
    }
    REQUIRE(est_windows == static_cast<std::int64_t>(result.stats.adc_conversions));
    REQUIRE(est_dram == static_cast<std::int64_t>(result.stats.dram_bytes()));
    REQUIRE(est_energy == result.energy.total_aj());
    const double rel = std::abs(static_cast<double>(compiled.schedule.chained_cycles) -
                                static_cast<double>(result.stats.total_cycles)) /
                       static_cast<double>(result.stats.total_cycles);
    CAPTURE(trial, compiled.schedule.chained_cycles, result.stats.total_cycles);
    REQUIRE(rel <= 0.05);
  }
  CHECK(checked >= 15);
}
