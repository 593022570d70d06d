// Copyright (c) 2026 The gfnfair Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfn/error.hpp"
#include "gfn/linalg.hpp"
#include "gfn/rng.hpp"

namespace gfn {

enum class HiddenActivation { kReLU };
enum class OutputActivation { kIdentity, kSigmoid };

// Logistic function with the pre-activation clamped to [-36, 36], which keeps
// both sigmoid(z) and 1 - sigmoid(z) representable away from zero.
inline double Sigmoid(double z) {
  z = std::clamp(z, -36.0, 36.0);
  return 1.0 / (1.0 + std::exp(-z));
}

// Fully connected network. weights[l] maps layer l (width layer_dims[l]) to
// layer l + 1; every layer but the last uses the hidden activation.
struct Mlp {
  std::vector<std::size_t> layer_dims;
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  HiddenActivation hidden_activation = HiddenActivation::kReLU;
  OutputActivation output_activation = OutputActivation::kIdentity;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return layer_dims.front(); }
  std::size_t output_dim() const { return layer_dims.back(); }

  // Parameter blocks in the order W0, b0, W1, b1, ...
  std::vector<std::span<double>> Parameters() {
    std::vector<std::span<double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l].values());
      out.push_back(biases[l]);
    }
    return out;
  }

  std::vector<std::string> ParameterNames() const {
    std::vector<std::string> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back("weights[" + std::to_string(l) + "]");
      out.push_back("biases[" + std::to_string(l) + "]");
    }
    return out;
  }

  std::size_t ParameterCount() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
      n += weights[l].size() + biases[l].size();
    return n;
  }

  bool operator==(const Mlp&) const = default;
};

inline void ValidateMlp(const Mlp& m) {
  Require(m.layer_dims.size() >= 2, ErrorKind::kInputShape,
          "mlp needs at least an input and an output layer");
  for (std::size_t d : m.layer_dims)
    Require(d > 0, ErrorKind::kInputShape, "mlp layer widths must be positive");
  Require(m.weights.size() == m.layer_dims.size() - 1 &&
              m.biases.size() == m.weights.size(),
          ErrorKind::kInputShape, "mlp layer count does not match layer_dims");
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    Require(m.weights[l].rows() == m.layer_dims[l + 1] &&
                m.weights[l].cols() == m.layer_dims[l],
            ErrorKind::kInputShape,
            "weights[" + std::to_string(l) + "] has the wrong shape");
    Require(m.biases[l].size() == m.layer_dims[l + 1], ErrorKind::kInputShape,
            "biases[" + std::to_string(l) + "] has the wrong length");
    Require(AllFinite(m.weights[l].values()) && AllFinite(m.biases[l]),
            ErrorKind::kNumeric,
            "layer " + std::to_string(l) + " has non-finite parameters");
  }
}

// All-zero network of the given layout.
inline Mlp MakeMlp(std::vector<std::size_t> layer_dims, OutputActivation output) {
  Mlp m;
  m.layer_dims = std::move(layer_dims);
  m.output_activation = output;
  Require(m.layer_dims.size() >= 2, ErrorKind::kInputShape,
          "mlp needs at least an input and an output layer");
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    m.weights.emplace_back(m.layer_dims[l + 1], m.layer_dims[l]);
    m.biases.emplace_back(m.layer_dims[l + 1], 0.0);
  }
  ValidateMlp(m);
  return m;
}

// Glorot-uniform weights, zero biases.
inline Mlp InitMlp(std::vector<std::size_t> layer_dims, OutputActivation output,
                   Rng& rng) {
  Mlp m = MakeMlp(std::move(layer_dims), output);
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    const double fan = static_cast<double>(m.layer_dims[l] + m.layer_dims[l + 1]);
    const double limit = std::sqrt(6.0 / fan);
    for (double& w : m.weights[l].values()) w = rng.Uniform(-limit, limit);
  }
  return m;
}

// Per-layer values kept from a forward pass for the backward pass.
// pre[l] is the affine output of layer l, post[l] its activation.
struct MlpTrace {
  Vector input;
  std::vector<Vector> pre;
  std::vector<Vector> post;

  const Vector& output() const { return post.back(); }
};

inline MlpTrace MlpForwardTrace(const Mlp& m, std::span<const double> input) {
  if (input.size() != m.input_dim())
    Fail(ErrorKind::kInputShape,
         "mlp_forward: input length " + std::to_string(input.size()) +
              " but the model expects " + std::to_string(m.input_dim()));
  MlpTrace t;
  t.input.assign(input.begin(), input.end());
  t.pre.resize(m.num_layers());
  t.post.resize(m.num_layers());
  std::span<const double> x = t.input;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    Vector& z = t.pre[l];
    z.resize(m.layer_dims[l + 1]);
    Affine(m.weights[l], x, m.biases[l], z);
    Vector& a = t.post[l];
    a = z;
    const bool last = l + 1 == m.num_layers();
    if (!last) {
      for (double& v : a) v = v > 0.0 ? v : 0.0;
    } else if (m.output_activation == OutputActivation::kSigmoid) {
      for (double& v : a) v = Sigmoid(v);
    }
    x = a;
  }
  return t;
}

inline Vector MlpForward(const Mlp& m, std::span<const double> input) {
  return std::move(MlpForwardTrace(m, input).post.back());
}

// Gradients of <upstream, mlp(input)> with respect to every parameter block
// and to the input.
struct MlpGradient {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Vector input;

  static MlpGradient ZerosLike(const Mlp& m) {
    MlpGradient g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      g.weights.emplace_back(m.weights[l].rows(), m.weights[l].cols());
      g.biases.emplace_back(m.biases[l].size(), 0.0);
    }
    g.input.assign(m.input_dim(), 0.0);
    return g;
  }

  std::vector<std::span<const double>> Blocks() const {
    std::vector<std::span<const double>> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l].values());
      out.push_back(biases[l]);
    }
    return out;
  }

  void SetZero() {
    for (auto& w : weights) std::fill(w.values().begin(), w.values().end(), 0.0);
    for (auto& b : biases) std::fill(b.begin(), b.end(), 0.0);
    std::fill(input.begin(), input.end(), 0.0);
  }
};

// Adds the parameter gradients for one traced example into *acc and writes the
// input gradient to acc->input (overwritten, not accumulated).
inline void MlpBackwardAccumulate(const Mlp& m, const MlpTrace& t,
                                  std::span<const double> upstream,
                                  MlpGradient* acc) {
  if (upstream.size() != m.output_dim())
    Fail(ErrorKind::kInputShape,
         "mlp_backward: upstream gradient length " +
              std::to_string(upstream.size()) + " but output width is " +
              std::to_string(m.output_dim()));
  const std::size_t n = m.num_layers();
  Vector delta(upstream.begin(), upstream.end());
  if (m.output_activation == OutputActivation::kSigmoid) {
    for (std::size_t i = 0; i < delta.size(); ++i) {
      const double s = t.post[n - 1][i];
      delta[i] *= s * (1.0 - s);
    }
  }
  for (std::size_t l = n; l-- > 0;) {
    const Vector& below = l == 0 ? t.input : t.post[l - 1];
    Matrix& gw = acc->weights[l];
    Vector& gb = acc->biases[l];
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      gb[r] += d;
      auto row = gw.row(r);
      for (std::size_t c = 0; c < below.size(); ++c) row[c] += d * below[c];
    }
    Vector next(below.size(), 0.0);
    const Matrix& w = m.weights[l];
    for (std::size_t r = 0; r < delta.size(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      auto row = w.row(r);
      for (std::size_t c = 0; c < next.size(); ++c) next[c] += d * row[c];
    }
    if (l > 0) {
      const Vector& z = t.pre[l - 1];
      for (std::size_t c = 0; c < next.size(); ++c)
        if (z[c] <= 0.0) next[c] = 0.0;
    }
    delta = std::move(next);
  }
  acc->input = std::move(delta);
}

inline MlpGradient MlpBackward(const Mlp& m, std::span<const double> input,
                               std::span<const double> upstream) {
  MlpGradient g = MlpGradient::ZerosLike(m);
  MlpBackwardAccumulate(m, MlpForwardTrace(m, input), upstream, &g);
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoint format (format_version 1):
//   {"format_version": 1, "layer_dims": [..], "hidden_activation": "relu",
//    "output_activation": "identity" | "sigmoid",
//    "weights": [[row-major values of W0], ...], "biases": [[b0], ...]}
// Doubles are written in shortest round-trip form, so a save/load cycle is
// bit-exact.

inline constexpr int kMlpFormatVersion = 1;

inline nlohmann::json MlpToJson(const Mlp& m) {
  nlohmann::json j;
  j["format_version"] = kMlpFormatVersion;
  j["layer_dims"] = m.layer_dims;
  j["hidden_activation"] = "relu";
  j["output_activation"] =
      m.output_activation == OutputActivation::kSigmoid ? "sigmoid" : "identity";
  j["weights"] = nlohmann::json::array();
  j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    auto v = m.weights[l].values();
    j["weights"].push_back(std::vector<double>(v.begin(), v.end()));
    j["biases"].push_back(m.biases[l]);
  }
  return j;
}

inline Mlp MlpFromJson(const nlohmann::json& j) {
  try {
    Require(j.at("format_version").get<int>() == kMlpFormatVersion,
            ErrorKind::kIo, "unsupported mlp format_version");
    Require(j.at("hidden_activation").get<std::string>() == "relu", ErrorKind::kIo,
            "unsupported hidden activation");
    const auto out = j.at("output_activation").get<std::string>();
    Require(out == "sigmoid" || out == "identity", ErrorKind::kIo,
            "unsupported output activation '" + out + "'");
    Mlp m = MakeMlp(j.at("layer_dims").get<std::vector<std::size_t>>(),
                    out == "sigmoid" ? OutputActivation::kSigmoid
                                     : OutputActivation::kIdentity);
    const auto& jw = j.at("weights");
    const auto& jb = j.at("biases");
    Require(jw.size() == m.num_layers() && jb.size() == m.num_layers(),
            ErrorKind::kIo, "mlp checkpoint layer count mismatch");
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      const auto w = jw[l].get<std::vector<double>>();
      Require(w.size() == m.weights[l].size(), ErrorKind::kIo,
              "mlp checkpoint weights[" + std::to_string(l) + "] size mismatch");
      std::copy(w.begin(), w.end(), m.weights[l].values().begin());
      m.biases[l] = jb[l].get<std::vector<double>>();
    }
    ValidateMlp(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("malformed mlp checkpoint: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    Fail(ErrorKind::kIo, std::string("invalid mlp checkpoint: ") + e.what());
  }
}

// Order-sensitive FNV-1a over the raw bits of every parameter.
inline std::uint64_t ParameterHash(const Mlp& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](double x) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    for (double w : m.weights[l].values()) mix(w);
    for (double b : m.biases[l]) mix(b);
  }
  return h;
}

}  // namespace gfn
