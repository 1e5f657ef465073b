// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// analog.hpp - behavioral model of the switched-capacitor MACC: charge
// sampling and sharing, ideal and non-ideal multi-cycle accumulation, the
// weight transform that folds the non-ideality into weights, thermal noise,
// PVT sampling, and differential ADC quantization.
//
// The charge-domain equations are those of the 2-bit sign-magnitude circuit
// (the factor 3 = 2^2 - 1 is baked into the closed forms), so magnitude
// arguments are restricted to 0..3. All functions are pure; the stochastic
// ones take explicit seeds.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "bpsim/bitpart.hpp"
#include "bpsim/common.hpp"

namespace bpsim::analog {

constexpr double kBoltzmann = 1.380649e-23;  // J/K

struct CapacitorBank {
  double cx = 3e-15;    // input DAC unit capacitance, farads
  double cw = 1e-15;    // weight DAC unit capacitance, farads
  double cacc = 24e-15; // accumulating capacitance, farads

  // Ratios are always recomputed so they can never go stale.
  double alpha() const { return cacc / (3.0 * cw); }
  double beta() const { return cx / cw; }

  void validate() const {
    if (cx <= 0 || cw <= 0 || cacc <= 0)
      throw ContractViolation("CapacitorBank: capacitances must be positive");
  }

  static CapacitorBank from_ratios(double alpha, double beta, double cw = 1e-15) {
    CapacitorBank b;
    b.cw = cw;
    b.cx = beta * cw;
    b.cacc = 3.0 * alpha * cw;
    b.validate();
    return b;
  }
};

struct SupplyThermalModel {
  double vdd_nominal = 1.0;            // volts
  double vdd_sigma = 0.0;              // volts
  double t_nominal = 329.0;            // kelvin, midpoint of 300..358
  double t_sigma = (358.0 - 300.0) / 6.0;  // 6 sigma spans the full range
  double vdd_clamp_rel = 0.20;         // |sample - nominal| <= 20% of nominal
};

struct ProcessModel {
  double cap_mismatch_sigma = 0.01;  // relative
  double clamp = 0.06;               // relative, = 6 sigma
};

struct AdcModel {
  int resolution_bits = 10;
  double sample_rate = 15e6;  // samples per second (reference rate)
  double fullscale = 0.0;     // volts; 0 selects the derived default
  bool differential = true;

  std::int64_t max_code() const { return (std::int64_t{1} << (resolution_bits - 1)) - 1; }

  // Default fullscale: the largest ideal accumulator voltage of one window,
  // m * 9 * Vdd / (9 alpha). Guarantees no clamping for in-range operands.
  double effective_fullscale(int m, double vdd, double alpha) const {
    if (fullscale > 0.0) return fullscale;
    return static_cast<double>(m) * 9.0 * vdd / (9.0 * alpha);
  }
};

// Eq: Q_sx = Vdd * |x| * Cx. Charge sampled onto the input DAC.
inline double sampled_input_charge(int x_mag, const CapacitorBank& bank, double vdd) {
  if (x_mag < 0 || x_mag > 3) throw ContractViolation("sampled_input_charge: magnitude not in 0..3");
  return vdd * static_cast<double>(x_mag) * bank.cx;
}

// Charge-sharing voltage at the DAC junction: V_s = Q_sx / (3Cx + |w|Cw).
inline double share_voltage(int x_mag, int w_mag, const CapacitorBank& bank, double vdd) {
  if (x_mag < 0 || x_mag > 3 || w_mag < 0 || w_mag > 3)
    throw ContractViolation("share_voltage: magnitude not in 0..3");
  return sampled_input_charge(x_mag, bank, vdd) / (3.0 * bank.cx + w_mag * bank.cw);
}

// Charge on the weight DAC, V_s * |w| * Cw. Keeps the |w| denominator
// non-linearity; the simplified |x||w| Cw Vdd / 3 form is what the weight
// transform later corrects toward.
inline double sampled_weight_charge(int x_mag, int w_mag, const CapacitorBank& bank, double vdd) {
  return share_voltage(x_mag, w_mag, bank, vdd) * static_cast<double>(w_mag) * bank.cw;
}

inline void check_window(const std::vector<int>& w, const std::vector<int>& x) {
  if (w.size() != x.size())
    throw ContractViolation("accumulation window: W and X length mismatch");
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] < 0 || w[i] > 3 || x[i] < 0 || x[i] > 3)
      throw ContractViolation("accumulation window: magnitude not in 0..3");
}

// Ideal accumulated voltage after the window: sum_i Vdd/(9 alpha) W_i X_i.
inline double ideal_acc_voltage(const std::vector<int>& w, const std::vector<int>& x,
                                const CapacitorBank& bank, double vdd) {
  check_window(w, x);
  const double scale = vdd / (9.0 * bank.alpha());
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    acc += scale * static_cast<double>(w[i]) * static_cast<double>(x[i]);
  return acc;
}

// Non-ideal accumulation with incomplete charge transfer:
//   V[i] = 3a/(3a+|W_i|) * V[i-1] + W_i X_i b / ((3a+|W_i|)(3b+|W_i|)) * Vdd
// applied in window order with V[0] = 0.
inline double nonideal_acc_voltage(const std::vector<int>& w, const std::vector<int>& x,
                                   const CapacitorBank& bank, double vdd) {
  check_window(w, x);
  const double a = bank.alpha();
  const double b = bank.beta();
  double v = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double wm = static_cast<double>(w[i]);
    const double xm = static_cast<double>(x[i]);
    v = (3.0 * a) / (3.0 * a + wm) * v +
        (wm * xm * b) / ((3.0 * a + wm) * (3.0 * b + wm)) * vdd;
  }
  return v;
}

// Algebraic unrolling of the recurrence into per-weight factors:
//   W'_i = W_i/(3a+|W_i|) * b Vdd/(3b+|W_i|) * prod_{j>i} 3a/(3a+|W_j|)
// The newest weight carries the empty product, so for every X,
// sum_i W'_i X_i reproduces nonideal_acc_voltage(W, X) exactly.
inline std::vector<double> finetune_weights(const std::vector<int>& w,
                                            const CapacitorBank& bank, double vdd) {
  for (int m : w)
    if (m < 0 || m > 3) throw ContractViolation("finetune_weights: magnitude not in 0..3");
  const double a = bank.alpha();
  const double b = bank.beta();
  std::vector<double> out(w.size());
  double tail = 1.0;  // prod over j > i of 3a/(3a+|W_j|)
  for (std::size_t i = w.size(); i-- > 0;) {
    const double wm = static_cast<double>(w[i]);
    out[i] = wm / (3.0 * a + wm) * (b * vdd / (3.0 * b + wm)) * tail;
    tail *= (3.0 * a) / (3.0 * a + wm);
  }
  return out;
}

// Output-referred thermal noise of one conversion window (closed form):
//   sigma = sqrt( kT (a|W_last| + 3a + 3) / (9a (a+1)^2 Cw)
//                 * sum_{i=0}^{m-1} (a/(1+a))^(2i) * n )
// The geometric sum is evaluated in closed form for stability at large m.
inline double thermal_sigma(const CapacitorBank& bank, double temperature, int m, int n,
                            int w_last) {
  if (m < 1 || n < 1) throw ContractViolation("thermal_sigma: m and n must be >= 1");
  if (temperature <= 0) throw ContractViolation("thermal_sigma: temperature must be positive");
  if (w_last < 0 || w_last > 3) throw ContractViolation("thermal_sigma: magnitude not in 0..3");
  const double a = bank.alpha();
  const double r = (a / (1.0 + a)) * (a / (1.0 + a));
  const double geom = (std::abs(1.0 - r) < 1e-15)
                          ? static_cast<double>(m)
                          : (1.0 - std::pow(r, static_cast<double>(m))) / (1.0 - r);
  const double num = kBoltzmann * temperature * (a * w_last + 3.0 * a + 3.0);
  const double den = 9.0 * a * (a + 1.0) * (a + 1.0) * bank.cw;
  return std::sqrt(num / den * geom * static_cast<double>(n));
}

struct NoiseSpec {
  double sigma_acc = 0.0;      // volts, one conversion window
  std::int64_t r = 1;          // conversion windows per output element
  std::int64_t shift_sum = 85; // sum_k 2^(k * partition_bits) for the scheme
  bool quadrature = false;     // alternative: scale by sqrt(r) instead of r

  // Default form: sigma_acc * r * shift_sum. Quadrature alternative: the
  // per-window, per-pair noises add in variance; for the 8b/2b scheme
  // sqrt(sum 4^(p+q)) equals the same 85, so only r's exponent changes.
  double effective_sigma() const {
    const double base = sigma_acc * static_cast<double>(shift_sum);
    return quadrature ? base * std::sqrt(static_cast<double>(r))
                      : base * static_cast<double>(r);
  }

  static NoiseSpec for_scheme(double sigma_acc, std::int64_t r,
                              const bitpart::PartitionScheme& scheme, bool quadrature = false) {
    NoiseSpec s;
    s.sigma_acc = sigma_acc;
    s.r = r;
    s.shift_sum = bitpart::shift_sum(scheme);
    s.quadrature = quadrature;
    return s;
  }
};

// Error tensor entries: i.i.d. N(0, effective_sigma^2), seed-deterministic.
inline std::vector<double> sample_noise_tensor(std::int64_t count, const NoiseSpec& spec,
                                               std::uint64_t seed) {
  if (count < 0) throw ContractViolation("sample_noise_tensor: negative count");
  const double sigma = spec.effective_sigma();
  Rng rng(seed);
  std::vector<double> out(static_cast<std::size_t>(count));
  for (auto& v : out) v = sigma * rng.next_normal();
  return out;
}

struct PvtSample {
  CapacitorBank bank;
  double vdd = 1.0;
  double temperature = 329.0;
};

inline double clamp(double v, double lo, double hi) { return v < lo ? lo : (v > hi ? hi : v); }

// One chip instance's process/voltage/temperature draw: each capacitor gets
// a clamped Gaussian relative mismatch; Vdd and T are clamped Gaussians per
// their models. Ratios are recomputed from the perturbed capacitances.
inline PvtSample sample_pvt(const CapacitorBank& bank, const SupplyThermalModel& supply,
                            const ProcessModel& process, std::uint64_t seed) {
  bank.validate();
  Rng rng(seed);
  auto mismatch = [&]() {
    const double d = process.cap_mismatch_sigma * rng.next_normal();
    return 1.0 + clamp(d, -process.clamp, process.clamp);
  };
  PvtSample s;
  s.bank.cx = bank.cx * mismatch();
  s.bank.cw = bank.cw * mismatch();
  s.bank.cacc = bank.cacc * mismatch();
  const double dv = supply.vdd_sigma * rng.next_normal();
  const double vclamp = supply.vdd_clamp_rel * supply.vdd_nominal;
  s.vdd = supply.vdd_nominal + clamp(dv, -vclamp, vclamp);
  s.temperature = supply.t_nominal + supply.t_sigma * rng.next_normal();
  return s;
}

struct AdcResult {
  std::int64_t code = 0;
  bool saturated = false;
};

// Differential quantization: code = round((v+ - v-)/fullscale * max_code),
// clamped to the signed code range. Clamping is counted, never fatal.
inline AdcResult adc_quantize(double v_pos, double v_neg, const AdcModel& adc,
                              double fullscale) {
  if (fullscale <= 0) throw ContractViolation("adc_quantize: fullscale must be positive");
  const double scaled = (v_pos - v_neg) / fullscale * static_cast<double>(adc.max_code());
  AdcResult r;
  const double rounded = std::nearbyint(scaled);
  const double limit = static_cast<double>(adc.max_code());
  if (rounded > limit) {
    r.code = adc.max_code();
    r.saturated = true;
  } else if (rounded < -limit) {
    r.code = -adc.max_code();
    r.saturated = true;
  } else {
    r.code = static_cast<std::int64_t>(rounded);
  }
  return r;
}

}  // namespace bpsim::analog
