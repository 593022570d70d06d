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

#include <cmath>
#include <vector>

#include "gtest/gtest.h"

#include "gfn/adam.hpp"
#include "gfn/linalg.hpp"
#include "gfn/mlp.hpp"
#include "gfn/rng.hpp"
#include "test_util.hpp"

namespace gfn {
namespace {

using testing::RandomVector;
using testing::RelativeError;

TEST(MlpForward, ZeroSigmoidNetGivesHalf) {
  const Mlp m = MakeMlp({3, 5, 1}, OutputActivation::kSigmoid);
  EXPECT_DOUBLE_EQ(MlpForward(m, std::vector<double>{0.3, -2.0, 7.0})[0], 0.5);
}

TEST(MlpForward, IdentityLayer) {
  Mlp m = MakeMlp({2, 2}, OutputActivation::kIdentity);
  m.weights[0](0, 0) = 1.0;
  m.weights[0](1, 1) = 1.0;
  const Vector y = MlpForward(m, std::vector<double>{1.0, 2.0});
  EXPECT_EQ(y, (Vector{1.0, 2.0}));
}

TEST(MlpForward, OneOneOneNet) {
  Mlp m = MakeMlp({1, 1, 1}, OutputActivation::kIdentity);
  m.weights[0](0, 0) = 2.0;
  m.weights[1](0, 0) = 2.0;
  EXPECT_DOUBLE_EQ(MlpForward(m, std::vector<double>{3.0})[0], 12.0);
  // ReLU clips the negative hidden pre-activation.
  EXPECT_DOUBLE_EQ(MlpForward(m, std::vector<double>{-3.0})[0], 0.0);
}

TEST(MlpForward, ShapeMismatchThrows) {
  const Mlp m = MakeMlp({3, 2}, OutputActivation::kIdentity);
  try {
    MlpForward(m, std::vector<double>{1.0, 2.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInputShape);
  }
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  const Mlp m = InitMlp({4, 6, 3}, OutputActivation::kIdentity, rng);
  const auto g = MlpBackward(m, RandomVector(rng, 4), Vector(3, 0.0));
  for (auto block : g.Blocks())
    for (double x : block) EXPECT_EQ(x, 0.0);
}

TEST(MlpBackward, LinearScalarWeightGradientIsInput) {
  Mlp m = MakeMlp({1, 1}, OutputActivation::kIdentity);
  m.weights[0](0, 0) = 0.7;
  const auto g = MlpBackward(m, std::vector<double>{2.5}, std::vector<double>{1.0});
  EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 2.5);
  EXPECT_DOUBLE_EQ(g.biases[0][0], 1.0);
  EXPECT_DOUBLE_EQ(g.input[0], 0.7);
}

// Central differences on the fusion-shaped and a deeper net, contracted with a
// random upstream vector.
void CheckFiniteDifferences(std::vector<std::size_t> dims, OutputActivation out,
                            std::uint64_t seed) {
  Rng rng(seed);
  Mlp m = InitMlp(dims, out, rng);
  for (auto& b : m.biases)
    for (double& x : b) x = rng.Normal(0.0, 0.1);
  const Vector x = RandomVector(rng, dims.front());
  const Vector up = RandomVector(rng, dims.back());
  auto objective = [&](const Mlp& mm, std::span<const double> in) {
    return Dot(MlpForward(mm, in), up);
  };
  const auto g = MlpBackward(m, x, up);
  const double h = 1e-5;
  auto params = m.Parameters();
  const auto grads = g.Blocks();
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); i += 7) {
      const double keep = params[b][i];
      params[b][i] = keep + h;
      const double fp = objective(m, x);
      params[b][i] = keep - h;
      const double fm = objective(m, x);
      params[b][i] = keep;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LT(RelativeError(grads[b][i], fd), 1e-4)
          << m.ParameterNames()[b] << "[" << i << "] analytic " << grads[b][i] << " fd " << fd;
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (objective(m, xp) - objective(m, xm)) / (2 * h);
    EXPECT_LT(RelativeError(g.input[i], fd), 1e-4) << "input[" << i << "]";
  }
}

TEST(MlpBackward, FiniteDifferencesSigmoidNet) {
  for (std::uint64_t s = 1; s <= 3; ++s)
    CheckFiniteDifferences({3, 32, 32, 32, 1}, OutputActivation::kSigmoid, s);
}

TEST(MlpBackward, FiniteDifferencesIdentityNet) {
  CheckFiniteDifferences({8, 16, 16, 5}, OutputActivation::kIdentity, 11);
}

TEST(MlpInit, GlorotBoundsAndZeroBiases) {
  Rng rng(2);
  const Mlp m = InitMlp({40, 64, 32}, OutputActivation::kIdentity, rng);
  const double limit0 = std::sqrt(6.0 / (40 + 64));
  for (double w : m.weights[0].values()) EXPECT_LE(std::abs(w), limit0);
  for (const auto& b : m.biases)
    for (double x : b) EXPECT_EQ(x, 0.0);
}

TEST(MlpCheckpoint, JsonRoundTripIsExact) {
  Rng rng(8);
  const Mlp m = InitMlp({3, 4, 1}, OutputActivation::kSigmoid, rng);
  const Mlp back = MlpFromJson(nlohmann::json::parse(MlpToJson(m).dump()));
  EXPECT_EQ(back, m);
  EXPECT_EQ(ParameterHash(back), ParameterHash(m));
}

TEST(MlpCheckpoint, RejectsWrongVersionAndShapes) {
  Rng rng(8);
  auto j = MlpToJson(InitMlp({3, 4, 1}, OutputActivation::kSigmoid, rng));
  auto bad = j;
  bad["format_version"] = 99;
  EXPECT_THROW(MlpFromJson(bad), Error);
  bad = j;
  bad["weights"][0].erase(0);
  EXPECT_THROW(MlpFromJson(bad), Error);
}

TEST(Adam, ZeroGradientLeavesParamsAndCountsStep) {
  Vector p{1.0, -2.0};
  const Vector g{0.0, 0.0};
  std::vector<ParamBlock> blocks{{"p", p, g}};
  auto st = AdamState::ForBlocks(blocks, 1e-3);
  AdamStep(blocks, st);
  EXPECT_EQ(p, (Vector{1.0, -2.0}));
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  // Bias-corrected moments are g and g^2, so the step is lr * g / (|g| + eps).
  Vector p{0.5};
  const Vector g{1.0};
  std::vector<ParamBlock> blocks{{"p", p, g}};
  auto st = AdamState::ForBlocks(blocks, 0.001);
  AdamStep(blocks, st);
  EXPECT_NEAR(0.5 - p[0], 0.001 / (1.0 + 1e-8), 1e-15);
}

TEST(Adam, EpochDecay) {
  auto st = AdamState::ForSizes({1}, 0.001, 0.95);
  st.DecayEpoch();
  EXPECT_NEAR(st.learning_rate, 0.00095, 1e-15);
}

TEST(Adam, NonFiniteGradientNamesBlockAndLeavesParams) {
  Vector a{1.0}, b{2.0};
  const Vector ga{0.5}, gb{std::nan("")};
  std::vector<ParamBlock> blocks{{"weights[0]", a, ga}, {"biases[0]", b, gb}};
  auto st = AdamState::ForBlocks(blocks, 1e-3);
  try {
    AdamStep(blocks, st);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(e.what()).find("biases[0]"), std::string::npos);
  }
  EXPECT_EQ(a[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Cosine, Examples) {
  const Vector a{0.3, -1.2, 4.0};
  EXPECT_NEAR(CosineSimilarity(a, a), 1.0, 1e-15);
  EXPECT_EQ(CosineSimilarity(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_NEAR(CosineSimilarity(Vector{1, 1}, Vector{1, 0}), 0.7071, 1e-4);
  EXPECT_NEAR(CosineSimilarity(Vector{1, 1}, Vector{1, 0}), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(Cosine, ZeroVectorIsDegenerate) {
  try {
    CosineSimilarity(Vector{0, 0}, Vector{1, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDegenerate);
  }
}

TEST(Rng, DeterministicStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    const double x = a.Normal();
    EXPECT_EQ(x, b.Normal());
  }
  EXPECT_NE(Rng(42).NextU64(), Rng(43).NextU64());
  EXPECT_NE(DeriveSeed(1, 2), DeriveSeed(2, 1));
}

TEST(Rng, NormalMoments) {
  Rng r(9);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.Normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, BelowIsInRangeAndCoversAll) {
  Rng r(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[r.Below(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

}  // namespace
}  // namespace gfn
