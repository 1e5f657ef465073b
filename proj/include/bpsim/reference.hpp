// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// reference.hpp - whole-layer integer evaluation of a DFG, plus the
// deterministic tensor-data generation shared with the program image
// builder. This is the functional yardstick the simulator's tiled,
// window-split execution is compared against; it deliberately avoids the
// simulator's code paths and computes every dot product directly.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bpsim/common.hpp"
#include "bpsim/model.hpp"

namespace bpsim::ref {

// int8 semantics shared by reference and simulator: arithmetic shift, then
// clamp to the sign-magnitude-friendly [-127, 127] (so -128 never appears in
// tensors the mixed-signal datapath later consumes).
inline std::int64_t shift_floor(std::int64_t v, int shift) { return shift > 0 ? (v >> shift) : v; }

inline std::int8_t clamp8(std::int64_t v) {
  if (v > 127) return 127;
  if (v < -127) return -127;
  return static_cast<std::int8_t>(v);
}

// Deterministic int8 payload for an (input or weight) tensor. The ordinal
// identifies the tensor within the model's canonical enumeration.
inline std::vector<std::int8_t> generate_tensor_data(std::uint64_t seed, std::uint64_t ordinal,
                                                     std::int64_t bytes) {
  Rng rng(derive_seed(seed, ordinal));
  std::vector<std::int8_t> out(static_cast<std::size_t>(bytes));
  for (auto& b : out) b = static_cast<std::int8_t>(rng.next_int(-127, 127));
  return out;
}

enum class TensorRole { kInput, kWeight, kIntermediate };

struct TensorEntry {
  std::string name;
  TensorRole role;
  std::int64_t bytes = 0;
  std::uint64_t ordinal = 0;  // data-generation stream id for inputs/weights
  int layer_index = -1;       // producing layer, -1 for external inputs
};

// Canonical tensor enumeration: external inputs, then per-layer weights,
// then per-layer outputs. Compiler layout and image builder both follow it.
inline std::vector<TensorEntry> enumerate_tensors(const model::LayerDFG& dfg) {
  std::vector<TensorEntry> out;
  std::uint64_t ordinal = 0;
  for (const auto& [name, shape] : dfg.inputs)
    out.push_back({name, TensorRole::kInput, shape.bytes(), ordinal++, -1});
  for (std::size_t i = 0; i < dfg.layers.size(); ++i)
    if (dfg.layers[i].mixed_signal())
      out.push_back({dfg.layers[i].name + ".w", TensorRole::kWeight,
                     dfg.layers[i].weight_count(), ordinal++, static_cast<int>(i)});
  for (std::size_t i = 0; i < dfg.layers.size(); ++i)
    out.push_back({dfg.layers[i].output, TensorRole::kIntermediate,
                   dfg.layers[i].out_shape.bytes(), 0, static_cast<int>(i)});
  return out;
}

using TensorMap = std::map<std::string, std::vector<std::int8_t>>;

namespace detail {

inline std::int8_t at(const std::vector<std::int8_t>& t, const model::TensorShape& s,
                      std::int64_t b, std::int64_t c, std::int64_t y, std::int64_t x) {
  return t[static_cast<std::size_t>(((b * s.channels + c) * s.height + y) * s.width + x)];
}

inline void eval_conv(const model::Layer& l, const std::vector<std::int8_t>& in,
                      const std::vector<std::int8_t>& w, std::vector<std::int8_t>& out) {
  const auto& is = l.in_shape;
  const auto& os = l.out_shape;
  const std::int64_t klen = l.dot_length();
  for (std::int64_t b = 0; b < os.batch; ++b)
    for (std::int64_t oc = 0; oc < os.channels; ++oc)
      for (std::int64_t oy = 0; oy < os.height; ++oy)
        for (std::int64_t ox = 0; ox < os.width; ++ox) {
          std::int64_t acc = 0;
          for (std::int64_t ic = 0; ic < is.channels; ++ic)
            for (int ky = 0; ky < l.kernel; ++ky)
              for (int kx = 0; kx < l.kernel; ++kx) {
                const std::int64_t iy = oy * l.stride - l.pad + ky;
                const std::int64_t ix = ox * l.stride - l.pad + kx;
                if (iy < 0 || iy >= is.height || ix < 0 || ix >= is.width) continue;
                const std::int64_t widx =
                    ((oc * is.channels + ic) * l.kernel + ky) * l.kernel + kx;
                acc += static_cast<std::int64_t>(at(in, is, b, ic, iy, ix)) *
                       static_cast<std::int64_t>(w[static_cast<std::size_t>(widx)]);
              }
          (void)klen;
          const std::int64_t oidx = ((b * os.channels + oc) * os.height + oy) * os.width + ox;
          out[static_cast<std::size_t>(oidx)] = clamp8(shift_floor(acc, l.out_shift));
        }
}

inline void eval_fc(const model::Layer& l, const std::vector<std::int8_t>& in,
                    const std::vector<std::int8_t>& w, std::vector<std::int8_t>& out) {
  const std::int64_t flat = l.dot_length();
  for (std::int64_t b = 0; b < l.out_shape.batch; ++b)
    for (std::int64_t oc = 0; oc < l.out_channels; ++oc) {
      std::int64_t acc = 0;
      for (std::int64_t i = 0; i < flat; ++i)
        acc += static_cast<std::int64_t>(in[static_cast<std::size_t>(b * flat + i)]) *
               static_cast<std::int64_t>(w[static_cast<std::size_t>(oc * flat + i)]);
      out[static_cast<std::size_t>(b * l.out_channels + oc)] =
          clamp8(shift_floor(acc, l.out_shift));
    }
}

inline void eval_pool(const model::Layer& l, const std::vector<std::int8_t>& in,
                      std::vector<std::int8_t>& out) {
  const auto& is = l.in_shape;
  const auto& os = l.out_shape;
  for (std::int64_t b = 0; b < os.batch; ++b)
    for (std::int64_t c = 0; c < os.channels; ++c)
      for (std::int64_t oy = 0; oy < os.height; ++oy)
        for (std::int64_t ox = 0; ox < os.width; ++ox) {
          std::int64_t best = INT64_MIN, sum = 0;
          for (int ky = 0; ky < l.kernel; ++ky)
            for (int kx = 0; kx < l.kernel; ++kx) {
              const std::int64_t v =
                  at(in, is, b, c, oy * l.stride + ky, ox * l.stride + kx);
              best = std::max(best, v);
              sum += v;
            }
          std::int64_t r;
          if (l.pool_mode == model::PoolMode::kMax) {
            r = best;
          } else {
            // floor division, also for negative sums
            const std::int64_t k2 = static_cast<std::int64_t>(l.kernel) * l.kernel;
            r = sum >= 0 ? sum / k2 : -((-sum + k2 - 1) / k2);
          }
          const std::int64_t oidx = ((b * os.channels + c) * os.height + oy) * os.width + ox;
          out[static_cast<std::size_t>(oidx)] = clamp8(r);
        }
}

inline void eval_act(const model::Layer& l, const std::vector<std::int8_t>& in,
                     std::vector<std::int8_t>& out) {
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = (l.act_fn == model::ActFn::kRelu && in[i] < 0) ? std::int8_t{0} : in[i];
}

inline void eval_norm(const model::Layer& l, const std::vector<std::int8_t>& in,
                      std::vector<std::int8_t>& out) {
  for (std::size_t i = 0; i < in.size(); ++i)
    out[i] = clamp8(shift_floor(static_cast<std::int64_t>(in[i]) * l.norm_mul, l.norm_shift));
}

}  // namespace detail

inline void evaluate_layer(const model::Layer& l, const std::vector<std::int8_t>& in,
                           const std::vector<std::int8_t>& weights,
                           std::vector<std::int8_t>& out) {
  out.assign(static_cast<std::size_t>(l.out_shape.bytes()), 0);
  switch (l.kind) {
    case model::LayerKind::kConv: detail::eval_conv(l, in, weights, out); return;
    case model::LayerKind::kFc: detail::eval_fc(l, in, weights, out); return;
    case model::LayerKind::kPool: detail::eval_pool(l, in, out); return;
    case model::LayerKind::kActivation: detail::eval_act(l, in, out); return;
    case model::LayerKind::kNormalization: detail::eval_norm(l, in, out); return;
  }
  throw ContractViolation("evaluate_layer: unknown kind");
}

// Generates the seeded inputs/weights and evaluates the whole graph.
// Returns every tensor, keyed by name (weights as "<layer>.w").
inline TensorMap evaluate(const model::LayerDFG& dfg, std::uint64_t seed) {
  TensorMap tensors;
  for (const auto& e : enumerate_tensors(dfg))
    if (e.role != TensorRole::kIntermediate)
      tensors[e.name] = generate_tensor_data(seed, e.ordinal, e.bytes);
  for (const auto& l : dfg.layers) {
    const auto& in = tensors.at(l.input);
    static const std::vector<std::int8_t> kNoWeights;
    const auto& w = l.mixed_signal() ? tensors.at(l.name + ".w") : kNoWeights;
    std::vector<std::int8_t> out;
    evaluate_layer(l, in, w, out);
    tensors[l.output] = std::move(out);
  }
  return tensors;
}

}  // namespace bpsim::ref
