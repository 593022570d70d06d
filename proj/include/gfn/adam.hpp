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

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gfn/error.hpp"
#include "gfn/linalg.hpp"

namespace gfn {

// One named parameter tensor and its gradient, viewed as flat arrays.
struct ParamBlock {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
};

struct AdamState {
  std::uint64_t step = 0;
  std::vector<Vector> first_moment;
  std::vector<Vector> second_moment;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  double epoch_decay = 1.0;

  // Zeroed moments for blocks of the given sizes.
  static AdamState ForSizes(const std::vector<std::size_t>& sizes,
                            double learning_rate, double epoch_decay = 1.0) {
    Require(learning_rate > 0.0, ErrorKind::kConfig, "adam: learning_rate must be > 0");
    Require(epoch_decay > 0.0 && epoch_decay <= 1.0, ErrorKind::kConfig,
            "adam: epoch_decay must lie in (0, 1]");
    AdamState s;
    s.learning_rate = learning_rate;
    s.epoch_decay = epoch_decay;
    for (std::size_t n : sizes) {
      s.first_moment.emplace_back(n, 0.0);
      s.second_moment.emplace_back(n, 0.0);
    }
    return s;
  }

  static AdamState ForBlocks(std::span<const ParamBlock> blocks, double learning_rate,
                             double epoch_decay = 1.0) {
    std::vector<std::size_t> sizes;
    for (const auto& b : blocks) sizes.push_back(b.values.size());
    return ForSizes(sizes, learning_rate, epoch_decay);
  }

  // Called once at the end of every epoch.
  void DecayEpoch() { learning_rate *= epoch_decay; }
};

// Bias-corrected Adam update applied in place. Gradients are checked before
// any parameter is touched, so a non-finite gradient leaves everything as is.
inline void AdamStep(std::span<const ParamBlock> blocks, AdamState& state) {
  Require(blocks.size() == state.first_moment.size(), ErrorKind::kInputShape,
          "adam: block count does not match optimizer state");
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& b = blocks[k];
    Require(b.values.size() == b.grads.size() &&
                b.values.size() == state.first_moment[k].size(),
            ErrorKind::kInputShape, "adam: shape mismatch in block " + b.name);
    Require(AllFinite(b.grads), ErrorKind::kNumeric,
            "adam: non-finite gradient in block " + b.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& b = blocks[k];
    for (std::size_t i = 0; i < b.values.size(); ++i) {
      const double g = b.grads[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      b.values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace gfn
