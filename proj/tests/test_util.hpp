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

// Shared fixtures for the unit tests: small configs that train in well under
// a second.

#ifndef GFN_TESTS_TEST_UTIL_HPP_
#define GFN_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <vector>

#include "gfn/gfn.hpp"

namespace gfn::testing {

inline SynthConfig SmallSynth(std::uint64_t seed = 3) {
  SynthConfig c;
  c.latent_dim = 6;
  c.feature_dim = 8;
  c.frames_per_utterance = 40;
  c.utterances_per_speaker = 4;
  c.seed = seed;
  return c;
}

inline TrainConfig SmallTrain(std::size_t epochs = 2) {
  TrainConfig c;
  c.speakers_per_batch = 4;
  c.crop_frames = 20;
  c.epochs = epochs;
  c.hidden_dims = {12};
  c.embedding_dim = 6;
  return c;
}

inline CropProtocol SmallProtocol() {
  CropProtocol p;
  p.n_crops = 3;
  p.crop_frames = 25;
  return p;
}

inline Vector RandomVector(Rng& rng, std::size_t n, double sd = 1.0) {
  Vector v(n);
  for (double& x : v) x = rng.Normal(0.0, sd);
  return v;
}

// Relative error with an absolute floor for near-zero gradients.
inline double RelativeError(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Fourth-order central difference of f at 0.
template <typename F>
double Stencil5(F&& f, double h) {
  return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
}

}  // namespace gfn::testing

#endif  // GFN_TESTS_TEST_UTIL_HPP_
