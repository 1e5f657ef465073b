// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// bitpart.hpp - exact integer reference for wide, interleaved,
// bit-partitioned vector dot products.
//
// An operand is held in sign-magnitude form. The magnitude of every element
// is decomposed into radix-2^partition_bits digits; digits of equal
// significance from all elements form one BitGroup. A dot product is then a
// sum over (p, q) group pairs of a plain low-bitwidth signed MACC, shifted by
// the combined significance afterwards. No step truncates, so the result is
// exactly the plain wide-integer dot product; the rest of the toolkit leans
// on that as its functional oracle.

#pragma once

#include <cstdint>
#include <vector>

#include "bpsim/common.hpp"

namespace bpsim::bitpart {

struct PartitionScheme {
  int operand_bits = 8;    // total bits per operand, sign included
  int partition_bits = 2;  // digit width, one of {1, 2, 4, 8}

  PartitionScheme() = default;
  PartitionScheme(int operand, int partition)
      : operand_bits(operand), partition_bits(partition) {
    validate();
  }

  void validate() const {
    if (operand_bits <= 1) throw ContractViolation("PartitionScheme: operand_bits must be > 1");
    if (partition_bits != 1 && partition_bits != 2 && partition_bits != 4 && partition_bits != 8)
      throw ContractViolation("PartitionScheme: partition_bits must be one of {1,2,4,8}");
    if (operand_bits % partition_bits != 0)
      throw ContractViolation("PartitionScheme: partition_bits must divide operand_bits");
  }

  int partitions_per_operand() const { return operand_bits / partition_bits; }
  // Largest magnitude of the two's-complement bridge (sign bit spent).
  std::int64_t max_magnitude() const { return (std::int64_t{1} << (operand_bits - 1)) - 1; }
  // Largest magnitude the digit decomposition itself can carry.
  std::int64_t digit_capacity() const { return (std::int64_t{1} << operand_bits) - 1; }
  std::int64_t partition_radix() const { return std::int64_t{1} << partition_bits; }

  bool operator==(const PartitionScheme&) const = default;
};

// Sum of the per-partition shift weights, sum_k 2^(k*partition_bits).
// 85 for the 8-bit/2-bit scheme; feeds the noise model's scale factor.
inline std::int64_t shift_sum(const PartitionScheme& s) {
  std::int64_t sum = 0;
  for (int k = 0; k < s.partitions_per_operand(); ++k)
    sum += std::int64_t{1} << (k * s.partition_bits);
  return sum;
}

struct SignMagnitudeValue {
  int sign = +1;              // +1 or -1; zero is canonicalized to +1
  std::uint32_t magnitude = 0;

  std::int64_t value() const { return sign * static_cast<std::int64_t>(magnitude); }
  bool operator==(const SignMagnitudeValue&) const = default;
};

struct SignMagnitudeResult {
  SignMagnitudeValue value;
  bool saturated = false;
};

// Two's-complement to sign-magnitude. The asymmetric most-negative value has
// no sign-magnitude counterpart and saturates to -(2^(bits-1)-1); callers
// track the returned flag in a saturation statistic.
inline SignMagnitudeResult to_sign_magnitude(std::int64_t v, int operand_bits) {
  const std::int64_t bound = std::int64_t{1} << (operand_bits - 1);
  if (v > bound || v < -bound)
    throw ContractViolation("to_sign_magnitude: |v| exceeds 2^(operand_bits-1)");
  SignMagnitudeResult r;
  if (v >= 0) {
    r.value = {+1, static_cast<std::uint32_t>(v)};
  } else if (-v == bound) {
    r.value = {-1, static_cast<std::uint32_t>(bound - 1)};
    r.saturated = true;
  } else {
    r.value = {-1, static_cast<std::uint32_t>(-v)};
  }
  return r;
}

struct QuantizedVector {
  std::vector<SignMagnitudeValue> elements;
  PartitionScheme scheme;

  void validate() const {
    scheme.validate();
    for (const auto& e : elements) {
      if (e.sign != +1 && e.sign != -1)
        throw ContractViolation("QuantizedVector: sign must be +1 or -1");
      if (e.magnitude > static_cast<std::uint64_t>(scheme.digit_capacity()))
        throw ContractViolation("QuantizedVector: magnitude exceeds operand range");
      if (e.magnitude == 0 && e.sign != +1)
        throw ContractViolation("QuantizedVector: zero must carry sign +1");
    }
  }

  // Two's-complement bridge; saturates at the symmetric bound and counts it.
  static QuantizedVector from_ints(const std::vector<std::int64_t>& vals,
                                   const PartitionScheme& scheme,
                                   std::int64_t* saturations = nullptr) {
    QuantizedVector q;
    q.scheme = scheme;
    q.elements.reserve(vals.size());
    for (std::int64_t v : vals) {
      auto r = to_sign_magnitude(v, scheme.operand_bits);
      if (r.saturated && saturations) ++*saturations;
      q.elements.push_back(r.value);
    }
    return q;
  }

  // Signed values whose magnitudes use the full operand_bits digit range.
  static QuantizedVector from_magnitudes(const std::vector<std::int64_t>& vals,
                                         const PartitionScheme& scheme) {
    QuantizedVector q;
    q.scheme = scheme;
    q.elements.reserve(vals.size());
    for (std::int64_t v : vals) {
      if (v > scheme.digit_capacity() || -v > scheme.digit_capacity())
        throw ContractViolation("from_magnitudes: |v| exceeds digit capacity");
      q.elements.push_back(v >= 0 ? SignMagnitudeValue{+1, static_cast<std::uint32_t>(v)}
                                  : SignMagnitudeValue{-1, static_cast<std::uint32_t>(-v)});
    }
    return q;
  }
};

// All same-significance digits drawn across the elements of one vector.
// Every element's sign is replicated into each of its groups; the digit
// decomposition itself is sign-free.
struct BitGroup {
  int significance = 0;  // shift exponent in bits (k * partition_bits)
  std::vector<std::uint8_t> partitions;
  std::vector<std::int8_t> signs;
};

inline std::vector<BitGroup> bit_partition(const QuantizedVector& v) {
  v.validate();
  const int groups = v.scheme.partitions_per_operand();
  const std::uint32_t mask = static_cast<std::uint32_t>(v.scheme.partition_radix() - 1);
  std::vector<BitGroup> out(groups);
  for (int k = 0; k < groups; ++k) {
    out[k].significance = k * v.scheme.partition_bits;
    out[k].partitions.reserve(v.elements.size());
    out[k].signs.reserve(v.elements.size());
  }
  for (const auto& e : v.elements) {
    std::uint32_t mag = e.magnitude;
    for (int k = 0; k < groups; ++k) {
      out[k].partitions.push_back(static_cast<std::uint8_t>(mag & mask));
      out[k].signs.push_back(static_cast<std::int8_t>(e.sign));
      mag >>= v.scheme.partition_bits;
    }
  }
  return out;
}

struct GroupPartial {
  int significance_x = 0;
  int significance_w = 0;
  std::int64_t partial = 0;
};

// Shift-and-aggregate of the per-group partial products. Pure, exact, no
// truncation anywhere. Exactly one partial per (p, q) pair is expected.
inline std::int64_t reaggregate(const std::vector<GroupPartial>& partials) {
  std::vector<std::pair<int, int>> seen;
  std::int64_t acc = 0;
  for (const auto& p : partials) {
    for (const auto& s : seen)
      if (s.first == p.significance_x && s.second == p.significance_w)
        throw ContractViolation("reaggregate: duplicate (p,q) partial");
    seen.emplace_back(p.significance_x, p.significance_w);
    acc += p.partial << (p.significance_x + p.significance_w);
  }
  return acc;
}

// One (p, q) group pair multiply-accumulated with signed accumulation split
// across a positive and a negative tally, mirroring the capacitor pair.
inline std::int64_t group_macc(const BitGroup& gx, const BitGroup& gw) {
  if (gx.partitions.size() != gw.partitions.size())
    throw ContractViolation("group_macc: group length mismatch");
  std::int64_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < gx.partitions.size(); ++i) {
    const std::int64_t prod =
        static_cast<std::int64_t>(gx.partitions[i]) * static_cast<std::int64_t>(gw.partitions[i]);
    if (gx.signs[i] == gw.signs[i])
      pos += prod;
    else
      neg += prod;
  }
  return pos - neg;
}

inline std::vector<GroupPartial> group_partials(const QuantizedVector& x,
                                                const QuantizedVector& w) {
  if (x.elements.size() != w.elements.size())
    throw ContractViolation("wide_bp_dot: vector length mismatch");
  if (!(x.scheme == w.scheme))
    throw ContractViolation("wide_bp_dot: partition scheme mismatch");
  const auto gx = bit_partition(x);
  const auto gw = bit_partition(w);
  std::vector<GroupPartial> partials;
  partials.reserve(gx.size() * gw.size());
  for (const auto& px : gx)
    for (const auto& pw : gw)
      partials.push_back({px.significance, pw.significance, group_macc(px, pw)});
  return partials;
}

// The reformulated dot product: bit-partition both vectors, MACC each group
// pair at low bitwidth, then shift-aggregate. Returns sum_i x_i * w_i exactly.
inline std::int64_t wide_bp_dot(const QuantizedVector& x, const QuantizedVector& w) {
  return reaggregate(group_partials(x, w));
}

struct Checked32Result {
  std::int64_t value = 0;
  bool overflow = false;
};

// 32-bit accumulator mode: flags (without losing) any intermediate or final
// value outside int32 range, mirroring the hardware's 32-bit registers.
inline Checked32Result wide_bp_dot_checked32(const QuantizedVector& x, const QuantizedVector& w) {
  Checked32Result r;
  constexpr std::int64_t lo = INT32_MIN, hi = INT32_MAX;
  for (const auto& p : group_partials(x, w)) {
    r.value += p.partial << (p.significance_x + p.significance_w);
    if (r.value < lo || r.value > hi) r.overflow = true;
  }
  return r;
}

// Plain wide-integer dot product of the sign-magnitude values. The
// independent route the bit-partitioned path is checked against.
inline std::int64_t direct_dot(const QuantizedVector& x, const QuantizedVector& w) {
  if (x.elements.size() != w.elements.size())
    throw ContractViolation("direct_dot: vector length mismatch");
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < x.elements.size(); ++i)
    acc += x.elements[i].value() * w.elements[i].value();
  return acc;
}

}  // namespace bpsim::bitpart
