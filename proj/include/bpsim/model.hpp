// Copyright (c) 2026 bpsim contributors
// SPDX-License-Identifier: Apache-2.0
//
// model.hpp - the layer dataflow graph and its text format.
//
// A model file is line oriented:
//
//   model <name>
//   input <tensor> batch=16 channels=3 height=8 width=8
//   layer <name> kind=conv in=<tensor> out=<tensor> out_channels=8
//         kernel=3 stride=1 pad=1 shift=6   (all on one line)
//   layer <name> kind=fc   in=<tensor> out=<tensor> out_features=64 shift=7
//   layer <name> kind=pool in=<tensor> out=<tensor> window=2 stride=2 mode=max
//   layer <name> kind=act  in=<tensor> out=<tensor> fn=relu
//   layer <name> kind=norm in=<tensor> out=<tensor> mul=3 shift=2
//
// '#' starts a comment. Layers must reference tensors defined above them,
// which also fixes the single topological order used everywhere.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bpsim/common.hpp"

namespace bpsim::model {

struct TensorShape {
  std::int64_t batch = 1, channels = 1, height = 1, width = 1;

  std::int64_t elements() const { return batch * channels * height * width; }
  std::int64_t bytes() const { return elements(); }  // int8 tensors
  bool operator==(const TensorShape&) const = default;
};

enum class LayerKind { kConv, kFc, kPool, kActivation, kNormalization };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::kConv: return "conv";
    case LayerKind::kFc: return "fc";
    case LayerKind::kPool: return "pool";
    case LayerKind::kActivation: return "act";
    case LayerKind::kNormalization: return "norm";
  }
  return "?";
}

enum class PoolMode { kMax, kAvg };
enum class ActFn { kRelu, kIdentity };

struct Layer {
  std::string name;
  LayerKind kind = LayerKind::kFc;
  std::string input;
  std::string output;

  std::int64_t out_channels = 0;  // conv; fc reuses as out_features
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int out_shift = 0;  // wide accumulator >> shift before the int8 clamp

  PoolMode pool_mode = PoolMode::kMax;
  ActFn act_fn = ActFn::kRelu;
  std::int64_t norm_mul = 1;
  int norm_shift = 0;

  TensorShape in_shape, out_shape;

  bool mixed_signal() const { return kind == LayerKind::kConv || kind == LayerKind::kFc; }

  // Reduction length per output element.
  std::int64_t dot_length() const {
    if (kind == LayerKind::kConv)
      return in_shape.channels * kernel * kernel;
    if (kind == LayerKind::kFc)
      return in_shape.channels * in_shape.height * in_shape.width;
    return 0;
  }

  std::int64_t weight_count() const {
    if (!mixed_signal()) return 0;
    return out_channels * dot_length();
  }
};

struct LayerDFG {
  std::string name;
  std::vector<std::pair<std::string, TensorShape>> inputs;
  std::vector<Layer> layers;  // topological order by construction

  const TensorShape* find_tensor(const std::string& tensor) const {
    for (const auto& [n, s] : inputs)
      if (n == tensor) return &s;
    for (const auto& l : layers)
      if (l.output == tensor) return &l.out_shape;
    return nullptr;
  }

  // Tensors no layer consumes; the network outputs.
  std::vector<std::string> output_tensors() const {
    std::vector<std::string> out;
    auto consumed = [this](const std::string& t) {
      for (const auto& l : layers)
        if (l.input == t) return true;
      return false;
    };
    for (const auto& l : layers)
      if (!consumed(l.output)) out.push_back(l.output);
    return out;
  }
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

struct KeyValues {
  std::map<std::string, std::string> kv;
  std::string where;

  bool has(const std::string& k) const { return kv.count(k) != 0; }

  std::string str(const std::string& k) const {
    auto it = kv.find(k);
    if (it == kv.end()) throw ParseError(where, "missing field '" + k + "'");
    return it->second;
  }

  std::int64_t num(const std::string& k) const {
    const std::string v = str(k);
    try {
      std::size_t pos = 0;
      const std::int64_t n = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return n;
    } catch (const std::exception&) {
      throw ParseError(where, "field '" + k + "' is not an integer: '" + v + "'");
    }
  }

  std::int64_t num_or(const std::string& k, std::int64_t dflt) const {
    return has(k) ? num(k) : dflt;
  }
};

inline KeyValues parse_kv(const std::vector<std::string>& toks, std::size_t first,
                          const std::string& where) {
  KeyValues out;
  out.where = where;
  for (std::size_t i = first; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError(where, "expected key=value, got '" + toks[i] + "'");
    out.kv[toks[i].substr(0, eq)] = toks[i].substr(eq + 1);
  }
  return out;
}

}  // namespace detail

inline LayerDFG parse_model(const std::string& text, const std::string& filename) {
  LayerDFG dfg;
  std::map<std::string, TensorShape> tensors;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto toks = detail::split_ws(line);
    if (toks.empty()) continue;
    const std::string where = filename + ":" + std::to_string(lineno);

    if (toks[0] == "model") {
      if (toks.size() != 2) throw ParseError(where, "model directive takes one name");
      dfg.name = toks[1];
    } else if (toks[0] == "input") {
      if (toks.size() < 2) throw ParseError(where, "input directive needs a tensor name");
      auto kv = detail::parse_kv(toks, 2, where);
      TensorShape s{kv.num("batch"), kv.num("channels"), kv.num("height"), kv.num("width")};
      if (s.batch < 1 || s.channels < 1 || s.height < 1 || s.width < 1)
        throw ParseError(where, "input dimensions must be positive");
      if (tensors.count(toks[1])) throw ParseError(where, "tensor '" + toks[1] + "' redefined");
      tensors[toks[1]] = s;
      dfg.inputs.emplace_back(toks[1], s);
    } else if (toks[0] == "layer") {
      if (toks.size() < 3) throw ParseError(where, "layer directive needs a name and fields");
      auto kv = detail::parse_kv(toks, 2, where);
      Layer l;
      l.name = toks[1];
      const std::string kind = kv.str("kind");
      l.input = kv.str("in");
      l.output = kv.str("out");
      auto found = tensors.find(l.input);
      if (found == tensors.end())
        throw ParseError(where, "layer '" + l.name + "' references undefined tensor '" +
                                    l.input + "'");
      if (tensors.count(l.output))
        throw ParseError(where, "tensor '" + l.output + "' redefined");
      l.in_shape = found->second;

      if (kind == "conv") {
        l.kind = LayerKind::kConv;
        l.out_channels = kv.num("out_channels");
        l.kernel = static_cast<int>(kv.num("kernel"));
        l.stride = static_cast<int>(kv.num_or("stride", 1));
        l.pad = static_cast<int>(kv.num_or("pad", 0));
        l.out_shift = static_cast<int>(kv.num_or("shift", 0));
        if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1 || l.pad < 0)
          throw ParseError(where, "invalid conv parameters");
        const std::int64_t oh =
            (l.in_shape.height + 2 * l.pad - l.kernel) / l.stride + 1;
        const std::int64_t ow = (l.in_shape.width + 2 * l.pad - l.kernel) / l.stride + 1;
        if (l.in_shape.height + 2 * l.pad < l.kernel || l.in_shape.width + 2 * l.pad < l.kernel)
          throw ParseError(where, "kernel larger than padded input on edge '" + l.input + "'");
        l.out_shape = {l.in_shape.batch, l.out_channels, oh, ow};
      } else if (kind == "fc") {
        l.kind = LayerKind::kFc;
        l.out_channels = kv.num("out_features");
        l.out_shift = static_cast<int>(kv.num_or("shift", 0));
        if (l.out_channels < 1) throw ParseError(where, "invalid fc parameters");
        l.out_shape = {l.in_shape.batch, l.out_channels, 1, 1};
      } else if (kind == "pool") {
        l.kind = LayerKind::kPool;
        l.kernel = static_cast<int>(kv.num("window"));
        l.stride = static_cast<int>(kv.num_or("stride", l.kernel));
        const std::string mode = kv.has("mode") ? kv.str("mode") : "max";
        if (mode == "max")
          l.pool_mode = PoolMode::kMax;
        else if (mode == "avg")
          l.pool_mode = PoolMode::kAvg;
        else
          throw ParseError(where, "pool mode must be max or avg");
        if (l.kernel < 1 || l.stride < 1 || l.in_shape.height < l.kernel ||
            l.in_shape.width < l.kernel)
          throw ParseError(where, "invalid pool parameters for edge '" + l.input + "'");
        l.out_shape = {l.in_shape.batch, l.in_shape.channels,
                       (l.in_shape.height - l.kernel) / l.stride + 1,
                       (l.in_shape.width - l.kernel) / l.stride + 1};
      } else if (kind == "act") {
        l.kind = LayerKind::kActivation;
        const std::string fn = kv.has("fn") ? kv.str("fn") : "relu";
        if (fn == "relu")
          l.act_fn = ActFn::kRelu;
        else if (fn == "identity")
          l.act_fn = ActFn::kIdentity;
        else
          throw ParseError(where, "act fn must be relu or identity");
        l.out_shape = l.in_shape;
      } else if (kind == "norm") {
        l.kind = LayerKind::kNormalization;
        l.norm_mul = kv.num_or("mul", 1);
        l.norm_shift = static_cast<int>(kv.num_or("shift", 0));
        if (l.norm_mul < 0 || l.norm_shift < 0 || l.norm_shift > 31)
          throw ParseError(where, "invalid norm parameters");
        l.out_shape = l.in_shape;
      } else {
        throw ParseError(where, "unknown layer kind '" + kind + "'");
      }

      tensors[l.output] = l.out_shape;
      dfg.layers.push_back(std::move(l));
    } else {
      throw ParseError(where, "unknown directive '" + toks[0] + "'");
    }
  }
  if (dfg.name.empty()) throw ParseError(filename, "missing model directive");
  return dfg;
}

inline LayerDFG load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open model file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str(), path);
}

}  // namespace bpsim::model
