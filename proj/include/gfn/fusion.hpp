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
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfn/adam.hpp"
#include "gfn/encoders.hpp"
#include "gfn/error.hpp"
#include "gfn/io.hpp"
#include "gfn/mlp.hpp"
#include "gfn/rng.hpp"
#include "gfn/speaker_sim.hpp"
#include "gfn/trials.hpp"

namespace gfn {

// Cosine scores of one utterance pair under the base, female-adapted and
// male-adapted encoders.
struct ScoreTriple {
  double base = 0.0;
  double female = 0.0;
  double male = 0.0;

  std::array<double, 3> values() const { return {base, female, male}; }

  void Validate() const {
    for (double s : values())
      Require(std::isfinite(s) && std::abs(s) <= 1.0 + 1e-12, ErrorKind::kNumeric,
              "score triple component outside [-1, 1]");
  }
};

// f(.; W): 3 -> 32 -> 32 -> 1, ReLU hidden layers, sigmoid output.
struct FusionModel {
  Mlp mlp;
  std::vector<double> loss_history;
};

inline constexpr std::size_t kFusionHidden = 32;

inline FusionModel InitFusion(std::uint64_t seed) {
  Rng rng(DeriveSeed(seed, HashString("fusion-init")));
  return {InitMlp({3, kFusionHidden, kFusionHidden, 1}, OutputActivation::kSigmoid, rng),
          {}};
}

inline void ValidateFusion(const FusionModel& m) {
  ValidateMlp(m.mlp);
  Require(m.mlp.input_dim() == 3 && m.mlp.output_dim() == 1 &&
              m.mlp.output_activation == OutputActivation::kSigmoid,
          ErrorKind::kInputShape, "fusion model must map 3 scores to one sigmoid output");
}

inline ScoreTriple ComputeScoreTriple(const EncoderModel& base, const EncoderModel& female,
                                      const EncoderModel& male, const Utterance& a,
                                      const Utterance& b, const CropProtocol& protocol) {
  const EncoderModel* models[] = {&base, &female, &male};
  const auto s = CropSimilarity(models, a, b, protocol);
  ScoreTriple t{s[0], s[1], s[2]};
  t.Validate();
  return t;
}

inline double Fuse(const FusionModel& model, const ScoreTriple& t) {
  const auto v = t.values();
  return MlpForward(model.mlp, v).front();
}

// Equal weights of 1/3 on each score.
inline double EqualWeightFuse(const ScoreTriple& t) {
  return (t.base + t.female + t.male) / 3.0;
}

enum class Decision { kSame, kDifferent };

// Same speaker iff the fused score is strictly greater than the threshold.
inline Decision Verify(const FusionModel& model, const ScoreTriple& t, double threshold) {
  Require(threshold >= 0.0 && threshold <= 1.0, ErrorKind::kConfig,
          "verify: threshold must lie in [0, 1]");
  return Fuse(model, t) > threshold ? Decision::kSame : Decision::kDifferent;
}

// ---------------------------------------------------------------------------
// Training pairs

struct LabeledPair {
  std::size_t utt_a = 0;  // indices into the source corpus
  std::size_t utt_b = 0;
  int label = 0;
  bool cross_group = false;
};

struct PairBatch {
  std::vector<LabeledPair> pairs;
  std::size_t positives = 0;
  std::size_t negatives = 0;

  std::size_t size() const { return pairs.size(); }
};

// n_pairs distinct unordered pairs: round(n_pairs * positive_fraction)
// same-speaker pairs, the rest different-speaker pairs split evenly between
// same-group and cross-group (the odd one goes to cross-group).
inline PairBatch SamplePairs(const Corpus& corpus, std::size_t n_pairs,
                             double positive_fraction, std::uint64_t seed) {
  Require(positive_fraction >= 0.0 && positive_fraction <= 1.0, ErrorKind::kConfig,
          "sample_pairs: positive_fraction must lie in [0, 1]");
  const auto fem = detail::IndexGroup(corpus, Group::kFemale);
  const auto mal = detail::IndexGroup(corpus, Group::kMale);
  Require(fem.by_speaker.size() >= 2 && mal.by_speaker.size() >= 2, ErrorKind::kCapacity,
          "sample_pairs: need at least two speakers per group");
  Rng rng(seed);
  const auto n_pos =
      static_cast<std::size_t>(std::llround(static_cast<double>(n_pairs) * positive_fraction));
  const std::size_t n_neg = n_pairs - n_pos;
  const std::size_t n_same = n_neg / 2;
  const std::size_t n_cross = n_neg - n_same;

  detail::GroupIndex both = fem;
  both.by_speaker.insert(both.by_speaker.end(), mal.by_speaker.begin(), mal.by_speaker.end());
  both.utterances.insert(both.utterances.end(), mal.utterances.begin(), mal.utterances.end());
  both.speaker_of.insert(both.speaker_of.end(), mal.speaker_of.begin(), mal.speaker_of.end());

  PairBatch batch;
  for (const auto& [a, b] : detail::SamplePositives(both, n_pos, rng, "sample_pairs positives"))
    batch.pairs.push_back({a, b, 1, false});

  // Same-group negatives: uniform over the union of both groups' eligible pairs.
  auto same_cap = [](const detail::GroupIndex& gi) {
    std::uint64_t within = 0;
    for (const auto& s : gi.by_speaker) within += detail::Choose2(s.size());
    return detail::Choose2(gi.utterances.size()) - within;
  };
  const std::uint64_t cap_f = same_cap(fem), cap_m = same_cap(mal);
  auto draw_same = [&]() {
    const auto& gi = rng.Below(cap_f + cap_m) < cap_f ? fem : mal;
    for (;;) {
      const auto i = rng.Below(gi.utterances.size());
      const auto j = rng.Below(gi.utterances.size());
      if (gi.speaker_of[i] != gi.speaker_of[j])
        return std::make_pair(gi.utterances[i], gi.utterances[j]);
    }
  };
  auto enumerate_same = [&]() {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (const auto* gi : {&fem, &mal})
      for (std::size_t i = 0; i < gi->utterances.size(); ++i)
        for (std::size_t j = i + 1; j < gi->utterances.size(); ++j)
          if (gi->speaker_of[i] != gi->speaker_of[j])
            all.emplace_back(gi->utterances[i], gi->utterances[j]);
    return all;
  };
  for (const auto& [a, b] : detail::SampleDistinctPairs(n_same, cap_f + cap_m, rng, draw_same,
                                                        enumerate_same,
                                                        "sample_pairs same-group negatives"))
    batch.pairs.push_back({a, b, 0, false});
  for (const auto& [a, b] :
       detail::SampleCrossGroupNegatives(fem, mal, n_cross, rng, "sample_pairs cross-group negatives"))
    batch.pairs.push_back({a, b, 0, true});

  rng.Shuffle(batch.pairs.begin(), batch.pairs.end());
  batch.positives = n_pos;
  batch.negatives = n_neg;
  return batch;
}

// ---------------------------------------------------------------------------
// Binary cross-entropy over positive and negative pairs:
//   L = -(1/M) (sum_{n in P} y_n log S_n + sum_{n in N} (1 - y_n) log(1 - S_n))
// with S_n clamped into [1e-12, 1 - 1e-12].

inline constexpr double kProbClamp = 1e-12;

inline double ClampProb(double s) { return std::clamp(s, kProbClamp, 1.0 - kProbClamp); }

inline double BceLoss(std::span<const double> scores, std::span<const int> labels) {
  Require(!scores.empty(), ErrorKind::kConfig, "bce_loss: empty batch");
  Require(scores.size() == labels.size(), ErrorKind::kInputShape,
          "bce_loss: scores and labels differ in length");
  double sum = 0.0;
  for (std::size_t n = 0; n < scores.size(); ++n) {
    const double s = ClampProb(scores[n]);
    sum += labels[n] == 1 ? std::log(s) : std::log(1.0 - s);
  }
  return -sum / static_cast<double>(scores.size());
}

// dL/dS_n for the loss above.
inline double BceScoreGradient(double score, int label, std::size_t batch_size) {
  const double s = ClampProb(score);
  const double g = label == 1 ? -1.0 / s : 1.0 / (1.0 - s);
  return g / static_cast<double>(batch_size);
}

struct FusionTrainConfig {
  std::size_t n_pairs = 20000;
  double positive_fraction = 0.5;
  std::size_t batch_size = 1000;
  std::size_t epochs = 50;
  double learning_rate = 1e-3;
  double epoch_decay = 1.0;
  std::uint64_t seed = 11;

  void Validate() const {
    Require(n_pairs > 0 && batch_size > 0, ErrorKind::kConfig,
            "fusion: n_pairs and batch_size must be positive");
    Require(learning_rate > 0.0, ErrorKind::kConfig, "fusion: learning_rate must be > 0");
    Require(epoch_decay > 0.0 && epoch_decay <= 1.0, ErrorKind::kConfig,
            "fusion: epoch_decay must lie in (0, 1]");
  }
};

inline nlohmann::json ToJson(const FusionTrainConfig& c) {
  return {{"n_pairs", c.n_pairs},           {"positive_fraction", c.positive_fraction},
          {"batch_size", c.batch_size},     {"epochs", c.epochs},
          {"learning_rate", c.learning_rate}, {"epoch_decay", c.epoch_decay},
          {"seed", c.seed}};
}

inline FusionTrainConfig FusionTrainConfigFromJson(const nlohmann::json& j) {
  FusionTrainConfig c;
  c.n_pairs = j.value("n_pairs", c.n_pairs);
  c.positive_fraction = j.value("positive_fraction", c.positive_fraction);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epoch_decay = j.value("epoch_decay", c.epoch_decay);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

// 200,000 pairs in minibatches of 1000 for 50 epochs at lr 0.001.
inline FusionTrainConfig FullScaleFusionConfig() {
  FusionTrainConfig c;
  c.n_pairs = 200000;
  c.batch_size = 1000;
  c.epochs = 50;
  c.learning_rate = 0.001;
  return c;
}

inline std::vector<double> FuseAll(const FusionModel& model,
                                   std::span<const ScoreTriple> triples) {
  std::vector<double> out;
  out.reserve(triples.size());
  for (const auto& t : triples) out.push_back(Fuse(model, t));
  return out;
}

// Sum over a minibatch of the BCE gradient with respect to the fusion
// parameters, for the batch mean loss. Returns the batch loss.
inline double FusionBatchGradient(const FusionModel& model,
                                  std::span<const ScoreTriple> triples,
                                  std::span<const int> labels, MlpGradient* grad) {
  grad->SetZero();
  std::vector<double> scores;
  scores.reserve(triples.size());
  for (std::size_t n = 0; n < triples.size(); ++n) {
    const auto v = triples[n].values();
    const MlpTrace tr = MlpForwardTrace(model.mlp, v);
    const double s = tr.output().front();
    scores.push_back(s);
    const double up = BceScoreGradient(s, labels[n], triples.size());
    MlpBackwardAccumulate(model.mlp, tr, std::span<const double>(&up, 1), grad);
  }
  return BceLoss(scores, labels);
}

// Trains the fusion MLP with Adam on precomputed score triples. Pairs are
// reshuffled every epoch.
inline FusionModel TrainFusionOnTriples(std::span<const ScoreTriple> triples,
                                        std::span<const int> labels,
                                        const FusionTrainConfig& config) {
  config.Validate();
  Require(triples.size() == labels.size() && !triples.empty(), ErrorKind::kInputShape,
          "train_fusion: triples and labels must be non-empty and aligned");
  FusionModel model = InitFusion(config.seed);
  MlpGradient grad = MlpGradient::ZerosLike(model.mlp);
  auto blocks = [&]() {
    std::vector<ParamBlock> b;
    auto params = model.mlp.Parameters();
    auto grads = grad.Blocks();
    auto names = model.mlp.ParameterNames();
    for (std::size_t i = 0; i < params.size(); ++i) b.push_back({names[i], params[i], grads[i]});
    return b;
  };
  AdamState adam = AdamState::ForBlocks(blocks(), config.learning_rate, config.epoch_decay);
  Rng rng(DeriveSeed(config.seed, HashString("fusion-shuffle")));
  std::vector<std::size_t> order(triples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<ScoreTriple> bt;
  std::vector<int> bl;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order.begin(), order.end());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += config.batch_size) {
      const std::size_t end = std::min(order.size(), i + config.batch_size);
      bt.clear();
      bl.clear();
      for (std::size_t k = i; k < end; ++k) {
        bt.push_back(triples[order[k]]);
        bl.push_back(labels[order[k]]);
      }
      loss_sum += FusionBatchGradient(model, bt, bl, &grad);
      ++batches;
      AdamStep(blocks(), adam);
    }
    model.loss_history.push_back(loss_sum / static_cast<double>(batches));
    adam.DecayEpoch();
  }
  return model;
}

struct FusionTrainingData {
  PairBatch pairs;
  std::vector<ScoreTriple> triples;
  std::vector<int> labels;
};

// Samples training pairs from `corpus` and scores them once with the frozen
// encoders.
inline FusionTrainingData PrepareFusionData(const EncoderModel& base,
                                            const EncoderModel& female,
                                            const EncoderModel& male, const Corpus& corpus,
                                            const FusionTrainConfig& config,
                                            const CropProtocol& protocol) {
  config.Validate();
  FusionTrainingData d;
  d.pairs = SamplePairs(corpus, config.n_pairs, config.positive_fraction,
                        DeriveSeed(config.seed, HashString("fusion-pairs")));
  std::vector<bool> used(corpus.utterances.size(), false);
  for (const auto& p : d.pairs.pairs) used[p.utt_a] = used[p.utt_b] = true;
  std::array<std::vector<Vector>, 3> centroids;
  const EncoderModel* models[] = {&base, &female, &male};
  for (int m = 0; m < 3; ++m) {
    centroids[m].resize(corpus.utterances.size());
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u)
      if (used[u]) centroids[m][u] = CropCentroid(*models[m], corpus.utterances[u], protocol);
  }
  for (const auto& p : d.pairs.pairs) {
    ScoreTriple t{Dot(centroids[0][p.utt_a], centroids[0][p.utt_b]),
                  Dot(centroids[1][p.utt_a], centroids[1][p.utt_b]),
                  Dot(centroids[2][p.utt_a], centroids[2][p.utt_b])};
    t.Validate();
    d.triples.push_back(t);
    d.labels.push_back(p.label);
  }
  return d;
}

inline FusionModel TrainFusion(const EncoderModel& base, const EncoderModel& female,
                               const EncoderModel& male, const Corpus& corpus,
                               const FusionTrainConfig& config,
                               const CropProtocol& protocol) {
  const auto d = PrepareFusionData(base, female, male, corpus, config, protocol);
  return TrainFusionOnTriples(d.triples, d.labels, config);
}

inline nlohmann::json FusionToJson(const FusionModel& m) {
  nlohmann::json j = MlpToJson(m.mlp);
  j["model"] = "score_fusion";
  j["loss_history"] = m.loss_history;
  return j;
}

inline FusionModel FusionFromJson(const nlohmann::json& j) {
  FusionModel m;
  m.mlp = MlpFromJson(j);
  m.loss_history = j.value("loss_history", std::vector<double>{});
  ValidateFusion(m);
  return m;
}

// ---------------------------------------------------------------------------
// Score file: one trial per line,
//   <utt_a> <utt_b> <s_base> <s_female> <s_male> <s_fused> <label>
// Scores use %.17g; a component the scoring system does not produce is
// written as "nan".

struct ScoreRecord {
  std::string utt_a;
  std::string utt_b;
  ScoreTriple triple;
  double fused = 0.0;
  int label = 0;
  TrialCategory category = TrialCategory::kPosFF;
};

inline std::string FormatScoreFile(std::span<const ScoreRecord> records) {
  std::string out;
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, " %.17g %.17g %.17g %.17g %d\n", r.triple.base,
                  r.triple.female, r.triple.male, r.fused, r.label);
    out += r.utt_a;
    out += ' ';
    out += r.utt_b;
    out += buf;
  }
  return out;
}

inline std::vector<ScoreRecord> ParseScoreFile(const std::string& text) {
  std::vector<ScoreRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    ScoreRecord r;
    std::string sb, sf, sm, sz;
    if (!(ls >> r.utt_a >> r.utt_b >> sb >> sf >> sm >> sz >> r.label))
      Fail(ErrorKind::kIo, "score file line " + std::to_string(lineno) + " is malformed");
    r.triple = {std::stod(sb), std::stod(sf), std::stod(sm)};
    r.fused = std::stod(sz);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace gfn
