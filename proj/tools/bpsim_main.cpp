// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// bpsim - compile layer graphs to accelerator programs, simulate them,
// sweep the design space, and tabulate the analog error models.
//
// Exit codes: 0 success, 1 user error, 2 infeasible mapping, 3 internal.

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "bpsim/compiler.hpp"
#include "bpsim/config.hpp"
#include "bpsim/dse.hpp"
#include "bpsim/isa.hpp"
#include "bpsim/model.hpp"
#include "bpsim/reference.hpp"
#include "bpsim/sim.hpp"

namespace {

using namespace bpsim;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path, "cannot open for writing");
  out << text;
}

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, "cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

config::RunConfig load_config(const std::string& path,
                              const std::vector<std::string>& overrides) {
  config::RunConfig cfg;
  if (!path.empty()) cfg = config::RunConfig::from_file(path);
  cfg.apply_overrides(overrides);
  return cfg;
}

int cmd_compile(const std::string& model_path, const std::string& config_path,
                const std::vector<std::string>& overrides, const std::string& out_path,
                std::string summary_path, std::string layout_path) {
  auto cfg = load_config(config_path, overrides);
  auto dfg = model::load_model(model_path);
  auto compiled = compiler::compile(dfg, cfg.chip(), cfg.energy_table());
  if (summary_path.empty()) summary_path = out_path + ".schedule.txt";
  if (layout_path.empty()) layout_path = out_path + ".layout.tsv";
  write_bytes(out_path, isa::encode(compiled.program));
  write_file(layout_path, compiler::layout_to_tsv(compiled.layout));
  write_file(summary_path, compiler::schedule_summary(dfg, compiled.schedule));
  std::printf("compiled %s: %zu blocks, estimated %lld cycles\n", model_path.c_str(),
              compiled.program.blocks.size(),
              static_cast<long long>(compiled.schedule.chained_cycles));
  std::printf("program: %s\nlayout: %s\nschedule: %s\n", out_path.c_str(),
              layout_path.c_str(), summary_path.c_str());
  return 0;
}

int cmd_simulate(const std::string& program_path, const std::string& config_path,
                 const std::vector<std::string>& overrides, std::string layout_path,
                 const std::string& model_path, const std::string& stats_path,
                 const std::string& energy_path, const std::string& trace_path) {
  auto cfg = load_config(config_path, overrides);
  const auto chip = cfg.chip();
  const auto table = cfg.energy_table();
  auto program = isa::decode(read_bytes(program_path));

  auto diags = isa::validate(program, chip);
  if (!diags.empty()) {
    for (const auto& d : diags)
      std::fprintf(stderr, "validate: block %u: %s\n", d.block_id, d.message.c_str());
    return 1;
  }

  if (layout_path.empty()) layout_path = program_path + ".layout.tsv";
  auto layout = compiler::layout_from_tsv(read_text(layout_path), layout_path);
  auto options = cfg.sim_options();
  options.collect_trace = !trace_path.empty();
  auto image = compiler::build_image(layout, options.seed);
  auto result = sim::simulate(program, chip, table, options, std::move(image));

  const std::string stats = arch::stats_table(result.stats);
  const std::string energy = energy::to_table(result.energy);
  if (stats_path.empty())
    std::fputs(stats.c_str(), stdout);
  else
    write_file(stats_path, stats);
  if (energy_path.empty())
    std::fputs(energy.c_str(), stdout);
  else
    write_file(energy_path, energy);
  if (!trace_path.empty()) {
    std::string text;
    for (const auto& line : result.trace) text += line + "\n";
    write_file(trace_path, text);
  }

  if (!model_path.empty()) {
    auto dfg = model::load_model(model_path);
    auto expect = ref::evaluate(dfg, options.seed);
    std::printf("layer\tref_check\n");
    bool all_ok = true;
    for (const auto& layer : dfg.layers) {
      const auto& entry = layout.find(layer.output);
      const auto& want = expect.at(layer.output);
      bool ok = true;
      for (std::int64_t i = 0; i < entry.bytes && ok; ++i)
        ok = static_cast<std::int8_t>(result.dram_image[entry.address + i]) ==
             want[static_cast<std::size_t>(i)];
      std::printf("%s\t%s\n", layer.name.c_str(), ok ? "pass" : "fail");
      all_ok &= ok;
    }
    if (options.mode == sim::SimOptions::Mode::kIdeal && !all_ok) {
      std::fprintf(stderr, "ideal-mode output diverged from the reference\n");
      return 3;
    }
  }
  return 0;
}

int cmd_estimate(const std::string& model_path, const std::string& config_path,
                 const std::vector<std::string>& overrides) {
  auto cfg = load_config(config_path, overrides);
  auto dfg = model::load_model(model_path);
  auto schedule = compiler::optimize(dfg, cfg.chip(), cfg.energy_table());
  std::fputs(compiler::schedule_summary(dfg, schedule).c_str(), stdout);
  return 0;
}

int cmd_dse(const std::string& config_path, const std::vector<std::string>& overrides,
            const std::vector<std::string>& model_paths, const std::string& corpus_dir,
            int workers, const std::string& out_path) {
  auto cfg = load_config(config_path, overrides);
  std::vector<std::string> paths = model_paths;
  if (!corpus_dir.empty()) {
    for (const auto& entry : std::filesystem::directory_iterator(corpus_dir))
      if (entry.path().extension() == ".model") paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw ParseError("dse", "no models given (--model or --corpus)");
  std::vector<model::LayerDFG> corpus;
  for (const auto& p : paths) corpus.push_back(model::load_model(p));

  auto result = dse::sweep(cfg, corpus, workers);
  const std::string table = dse::sweep_table(result);
  if (out_path.empty())
    std::fputs(table.c_str(), stdout);
  else
    write_file(out_path, table);
  return 0;
}

int cmd_noise_report(const std::string& config_path, const std::vector<std::string>& overrides,
                     const std::string& out_path) {
  auto cfg = load_config(config_path, overrides);
  const auto supply = cfg.supply();
  const double vdd = supply.vdd_nominal;
  const double temperature = supply.t_nominal;
  const auto alphas = cfg.integer_list("report.alphas", {4, 8, 16});
  const auto betas = cfg.integer_list("report.betas", {3});
  const auto ms = cfg.integer_list("report.ms", {8, 32});
  const auto ns = cfg.integer_list("report.ns", {4, 8});
  const std::int64_t r = cfg.integer("report.r", 1);
  const auto scheme = cfg.chip().mswagg.scheme;

  std::string out =
      "alpha\tbeta\tm\tn\tT_k\tsigma_acc_v\tsigma_eff_v\teq8_residual\tideal_gap\n";
  char buf[256];
  Rng rng(0x5eed);
  for (auto a : alphas)
    for (auto b : betas)
      for (auto m : ms)
        for (auto n : ns) {
          auto bank = analog::CapacitorBank::from_ratios(static_cast<double>(a),
                                                         static_cast<double>(b));
          const double sigma =
              analog::thermal_sigma(bank, temperature, static_cast<int>(m),
                                    static_cast<int>(n), 3);
          auto spec = analog::NoiseSpec::for_scheme(sigma, r, scheme);

          // Worst observed transform-vs-recurrence residual over random
          // windows, and the span of the charge-transfer error itself.
          double residual = 0.0, gap = 0.0;
          for (int trial = 0; trial < 32; ++trial) {
            std::vector<int> w(static_cast<std::size_t>(m)), x(static_cast<std::size_t>(m));
            for (auto& v : w) v = static_cast<int>(rng.next_int(0, 3));
            for (auto& v : x) v = static_cast<int>(rng.next_int(0, 3));
            const double rec = analog::nonideal_acc_voltage(w, x, bank, vdd);
            auto wp = analog::finetune_weights(w, bank, vdd);
            double dot = 0.0;
            for (std::size_t i = 0; i < wp.size(); ++i) dot += wp[i] * x[i];
            if (rec != 0.0) residual = std::max(residual, std::abs(dot - rec) / std::abs(rec));
            const double ideal = analog::ideal_acc_voltage(w, x, bank, vdd);
            if (ideal != 0.0) gap = std::max(gap, std::abs(rec - ideal) / ideal);
          }
          std::snprintf(buf, sizeof(buf),
                        "%lld\t%lld\t%lld\t%lld\t%.1f\t%.6e\t%.6e\t%.3e\t%.3e\n",
                        static_cast<long long>(a), static_cast<long long>(b),
                        static_cast<long long>(m), static_cast<long long>(n), temperature,
                        sigma, spec.effective_sigma(), residual, gap);
          out += buf;
        }
  if (out_path.empty())
    std::fputs(out.c_str(), stdout);
  else
    write_file(out_path, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bit-partitioned mixed-signal accelerator toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "configuration file");
  app.add_option("--set", overrides, "override a config key (key=value)");

  auto* compile = app.add_subcommand("compile", "lower a model to a program");
  compile->fallthrough();
  std::string model_path, out_path, summary_path, layout_path;
  compile->add_option("--model", model_path, "model file")->required();
  compile->add_option("--out", out_path, "output program path")->required();
  compile->add_option("--summary", summary_path, "schedule summary path");
  compile->add_option("--layout", layout_path, "layout table path");

  auto* simulate = app.add_subcommand("simulate", "run a program");
  simulate->fallthrough();
  std::string program_path, sim_layout, sim_model, stats_path, energy_path, trace_path;
  simulate->add_option("--program", program_path, "program file")->required();
  simulate->add_option("--layout", sim_layout, "layout table (default <program>.layout.tsv)");
  simulate->add_option("--model", sim_model, "model file for the reference check");
  simulate->add_option("--stats", stats_path, "write the stats table here");
  simulate->add_option("--energy", energy_path, "write the energy table here");
  simulate->add_option("--trace", trace_path, "write a cycle,unit,event trace here");

  auto* estimate = app.add_subcommand("estimate", "estimator-only schedule summary");
  estimate->fallthrough();
  std::string est_model;
  estimate->add_option("--model", est_model, "model file")->required();

  auto* dse_cmd = app.add_subcommand("dse", "sweep the design space");
  dse_cmd->fallthrough();
  std::vector<std::string> dse_models;
  std::string corpus_dir, dse_out;
  int workers = 1;
  dse_cmd->add_option("--model", dse_models, "model file (repeatable)");
  dse_cmd->add_option("--corpus", corpus_dir, "directory of .model files");
  dse_cmd->add_option("--workers", workers, "concurrent points");
  dse_cmd->add_option("--out", dse_out, "write the sweep table here");

  auto* noise = app.add_subcommand("noise-report", "evaluate the analog error models");
  noise->fallthrough();
  std::string noise_out;
  noise->add_option("--out", noise_out, "write the report here");

  try {
    app.parse(argc, argv);
    if (compile->parsed())
      return cmd_compile(model_path, config_path, overrides, out_path, summary_path,
                         layout_path);
    if (simulate->parsed())
      return cmd_simulate(program_path, config_path, overrides, sim_layout, sim_model,
                          stats_path, energy_path, trace_path);
    if (estimate->parsed()) return cmd_estimate(est_model, config_path, overrides);
    if (dse_cmd->parsed())
      return cmd_dse(config_path, overrides, dse_models, corpus_dir, workers, dse_out);
    if (noise->parsed()) return cmd_noise_report(config_path, overrides, noise_out);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const bpsim::InfeasibleError& e) {
    std::fprintf(stderr, "infeasible: %s\n", e.what());
    return 2;
  } catch (const bpsim::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const bpsim::ContractViolation& e) {
    std::fprintf(stderr, "internal: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal: %s\n", e.what());
    return 3;
  }
}
