// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bpsim {

// Thrown when a caller breaks a documented precondition (length/scheme
// mismatches, duplicate partials, malformed masks, ...).
class ContractViolation : public std::logic_error {
public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Input-file problems (model spec, config, program binary). Carries a
// location string ("file:line" or a byte offset) so CLI errors are actionable.
class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& where, const std::string& what)
      : std::runtime_error(where + ": " + what), where_(where) {}
  const std::string& where() const { return where_; }

private:
  std::string where_;
};

// A layer that cannot be mapped onto the configured chip at any tile size.
class InfeasibleError : public std::runtime_error {
public:
  InfeasibleError(const std::string& what, const std::string& binding_buffer)
      : std::runtime_error(what), binding_buffer_(binding_buffer) {}
  const std::string& binding_buffer() const { return binding_buffer_; }

private:
  std::string binding_buffer_;
};

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) {
  if (b <= 0) throw ContractViolation("ceil_div: non-positive divisor");
  return (a + b - 1) / b;
}

// splitmix64: used both as a standalone mixer for deriving independent
// sub-stream seeds and as the seeding step for Rng.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed ^ (0xa0761d6478bd642full * (stream + 1));
  splitmix64(s);
  return splitmix64(s);
}

// xoshiro256** with an explicit Box-Muller normal sampler. The standard
// library distributions are implementation-defined, so simulations seeded
// the same way would differ across toolchains; this generator does not.
class Rng {
public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
    has_spare_ = false;
  }

  std::uint64_t next_u64() {
    auto rotl = [](std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); };
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [lo, hi] inclusive.
  std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ContractViolation("Rng::next_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller (polar form avoided to keep the
  // draw count per sample fixed at two uniforms).
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

private:
  std::uint64_t state_[4];
  double spare_ = 0.0;
  bool has_spare_;
};

}  // namespace bpsim
