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
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"

#include "gfn/adam.hpp"
#include "gfn/error.hpp"
#include "gfn/linalg.hpp"
#include "gfn/mlp.hpp"
#include "gfn/rng.hpp"
#include "gfn/speaker_sim.hpp"

namespace gfn {

enum class EncoderKind { kBase, kFemaleAdapted, kMaleAdapted, kGenderBatched };

inline const char* EncoderKindName(EncoderKind k) {
  switch (k) {
    case EncoderKind::kBase: return "base";
    case EncoderKind::kFemaleAdapted: return "female_adapted";
    case EncoderKind::kMaleAdapted: return "male_adapted";
    case EncoderKind::kGenderBatched: return "gender_batched";
  }
  return "?";
}

inline EncoderKind ParseEncoderKind(const std::string& s) {
  for (auto k : {EncoderKind::kBase, EncoderKind::kFemaleAdapted,
                 EncoderKind::kMaleAdapted, EncoderKind::kGenderBatched})
    if (s == EncoderKindName(k)) return k;
  Fail(ErrorKind::kIo, "unknown encoder kind '" + s + "'");
}

inline EncoderKind AdaptedKind(Group g) {
  return g == Group::kFemale ? EncoderKind::kFemaleAdapted : EncoderKind::kMaleAdapted;
}

// Learnable similarity scale and offset of the angular prototypical loss.
struct ApLossParams {
  double scale = 10.0;
  double offset = -5.0;

  bool operator==(const ApLossParams&) const = default;
};

inline constexpr double kMinApScale = 1e-6;

struct TrainConfig {
  std::size_t speakers_per_batch = 32;
  std::size_t utterances_per_speaker_in_batch = 2;
  std::size_t crop_frames = 100;
  std::size_t epochs = 40;
  double learning_rate = 1e-3;
  double epoch_decay = 0.95;
  std::uint64_t seed = 7;
  std::vector<std::size_t> hidden_dims = {64, 64};
  std::size_t embedding_dim = 32;

  void Validate() const {
    Require(speakers_per_batch >= 2, ErrorKind::kConfig,
            "train: speakers_per_batch must be >= 2");
    Require(utterances_per_speaker_in_batch == 2, ErrorKind::kConfig,
            "train: exactly 2 utterances per speaker (query + prototype) are supported");
    Require(crop_frames > 0, ErrorKind::kConfig, "train: crop_frames must be > 0");
    Require(learning_rate > 0.0, ErrorKind::kConfig, "train: learning_rate must be > 0");
    Require(epoch_decay > 0.0 && epoch_decay <= 1.0, ErrorKind::kConfig,
            "train: epoch_decay must lie in (0, 1]");
    Require(embedding_dim > 0, ErrorKind::kConfig, "train: embedding_dim must be > 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

inline nlohmann::json ToJson(const TrainConfig& c) {
  return {{"speakers_per_batch", c.speakers_per_batch},
          {"utterances_per_speaker_in_batch", c.utterances_per_speaker_in_batch},
          {"crop_frames", c.crop_frames},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"epoch_decay", c.epoch_decay},
          {"seed", c.seed},
          {"hidden_dims", c.hidden_dims},
          {"embedding_dim", c.embedding_dim}};
}

inline TrainConfig TrainConfigFromJson(const nlohmann::json& j) {
  TrainConfig c;
  c.speakers_per_batch = j.value("speakers_per_batch", c.speakers_per_batch);
  c.utterances_per_speaker_in_batch =
      j.value("utterances_per_speaker_in_batch", c.utterances_per_speaker_in_batch);
  c.crop_frames = j.value("crop_frames", c.crop_frames);
  c.epochs = j.value("epochs", c.epochs);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epoch_decay = j.value("epoch_decay", c.epoch_decay);
  c.seed = j.value("seed", c.seed);
  c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.Validate();
  return c;
}

// Full-scale settings: 300 epochs, 200 speakers x 2 segments per batch,
// lr 0.001 decayed by 0.95 per epoch, 512-dim embeddings.
inline TrainConfig FullScaleTrainConfig() {
  TrainConfig c;
  c.speakers_per_batch = 200;
  c.epochs = 300;
  c.learning_rate = 0.001;
  c.epoch_decay = 0.95;
  c.embedding_dim = 512;
  return c;
}

// Temporal mean pooling followed by an MLP trunk and L2 normalization.
struct EncoderModel {
  EncoderKind kind = EncoderKind::kBase;
  Mlp trunk;
  ApLossParams loss_params;
  std::optional<TrainConfig> trained_with;
  std::vector<double> loss_history;

  std::size_t feature_dim() const { return trunk.input_dim(); }
  std::size_t embedding_dim() const { return trunk.output_dim(); }
};

inline EncoderModel InitEncoder(std::size_t feature_dim, const TrainConfig& config) {
  config.Validate();
  std::vector<std::size_t> dims{feature_dim};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.embedding_dim);
  Rng rng(DeriveSeed(config.seed, HashString("encoder-init")));
  EncoderModel m;
  m.trunk = InitMlp(std::move(dims), OutputActivation::kIdentity, rng);
  return m;
}

// Mean of frames [start, start + count).
inline Vector MeanPool(const Matrix& frames, std::size_t start, std::size_t count) {
  Require(count > 0 && start + count <= frames.rows(), ErrorKind::kLength,
          "mean_pool: window exceeds utterance length");
  Vector out(frames.cols(), 0.0);
  for (std::size_t t = start; t < start + count; ++t) {
    auto row = frames.row(t);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += row[c];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (double& x : out) x *= inv;
  return out;
}

inline Vector EmbedPooled(const EncoderModel& model, std::span<const double> pooled) {
  const Vector y = MlpForward(model.trunk, pooled);
  const double n = Norm(y);
  Require(n > 0.0, ErrorKind::kDegenerate, "embed: encoder produced a zero vector");
  Vector e = y;
  for (double& x : e) x /= n;
  return e;
}

inline Vector Embed(const EncoderModel& model, const Matrix& frames) {
  Require(frames.rows() >= 1, ErrorKind::kLength, "embed: utterance has no frames");
  if (frames.cols() != model.feature_dim())
    Fail(ErrorKind::kInputShape,
         "embed: feature dim " + std::to_string(frames.cols()) +
              " but encoder expects " + std::to_string(model.feature_dim()));
  return EmbedPooled(model, MeanPool(frames, 0, frames.rows()));
}

// ---------------------------------------------------------------------------
// Angular prototypical loss with one query and one prototype per speaker:
//   S[j][k] = scale * cos(query_j, prototype_k) + offset
//   loss    = -(1/N) sum_j log softmax_k(S[j][.])[j]

struct ApBatchItem {
  std::int64_t speaker_id = 0;
  Vector query;
  Vector prototype;
};

struct ApLossResult {
  double loss = 0.0;
  std::vector<Vector> grad_query;
  std::vector<Vector> grad_prototype;
  double grad_scale = 0.0;
  double grad_offset = 0.0;
};

inline ApLossResult ApLoss(std::span<const ApBatchItem> batch, const ApLossParams& params) {
  const std::size_t n = batch.size();
  Require(n >= 2, ErrorKind::kBatchConstruction, "ap_loss: need at least 2 speakers");
  std::unordered_set<std::int64_t> ids;
  for (const auto& it : batch)
    if (!ids.insert(it.speaker_id).second)
      Fail(ErrorKind::kBatchConstruction,
           "ap_loss: duplicate speaker " + std::to_string(it.speaker_id) + " in batch");

  std::vector<double> qn(n), pn(n);
  for (std::size_t j = 0; j < n; ++j) {
    qn[j] = Norm(batch[j].query);
    pn[j] = Norm(batch[j].prototype);
    Require(qn[j] > 0.0 && pn[j] > 0.0, ErrorKind::kDegenerate,
            "ap_loss: zero-norm embedding");
  }
  Matrix cos(n, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      cos(j, k) = Dot(batch[j].query, batch[k].prototype) / (qn[j] * pn[k]);

  ApLossResult r;
  // dS[j][k] = dLoss/dS[j][k] = (softmax[j][k] - [j == k]) / N
  Matrix d_s(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -INFINITY;
    for (std::size_t k = 0; k < n; ++k)
      mx = std::max(mx, params.scale * cos(j, k) + params.offset);
    double z = 0.0;
    for (std::size_t k = 0; k < n; ++k)
      z += std::exp(params.scale * cos(j, k) + params.offset - mx);
    const double log_z = mx + std::log(z);
    r.loss -= (params.scale * cos(j, j) + params.offset - log_z);
    for (std::size_t k = 0; k < n; ++k) {
      const double p = std::exp(params.scale * cos(j, k) + params.offset - log_z);
      d_s(j, k) = (p - (j == k ? 1.0 : 0.0)) / static_cast<double>(n);
    }
  }
  r.loss /= static_cast<double>(n);

  const std::size_t dim = batch[0].query.size();
  r.grad_query.assign(n, Vector(dim, 0.0));
  r.grad_prototype.assign(n, Vector(dim, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t k = 0; k < n; ++k) {
      const double g = d_s(j, k);
      r.grad_scale += g * cos(j, k);
      r.grad_offset += g;
      const double gc = g * params.scale;  // dLoss/dcos[j][k]
      if (gc == 0.0) continue;
      const auto& q = batch[j].query;
      const auto& p = batch[k].prototype;
      const double c = cos(j, k);
      // d cos(q, p) / dq = p / (|q||p|) - cos * q / |q|^2
      for (std::size_t i = 0; i < dim; ++i) {
        r.grad_query[j][i] += gc * (p[i] / (qn[j] * pn[k]) - c * q[i] / (qn[j] * qn[j]));
        r.grad_prototype[k][i] +=
            gc * (q[i] / (qn[j] * pn[k]) - c * p[i] / (pn[k] * pn[k]));
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

struct BatchSpec {
  std::vector<std::int64_t> speakers;
  double weight = 1.0;
};

// One epoch uses every utterance of every speaker at most once: utterances
// are shuffled per speaker and consumed two at a time, speakers are shuffled
// each round and chunked into batches of at most N (a final batch with a
// single speaker is dropped).
inline std::vector<BatchSpec> PlanMixedEpoch(
    const std::vector<std::int64_t>& speakers, std::size_t rounds, std::size_t n,
    Rng& rng) {
  std::vector<BatchSpec> out;
  std::vector<std::int64_t> order = speakers;
  for (std::size_t r = 0; r < rounds; ++r) {
    rng.Shuffle(order.begin(), order.end());
    for (std::size_t i = 0; i < order.size(); i += n) {
      const std::size_t end = std::min(order.size(), i + n);
      if (end - i < 2) continue;
      out.push_back({{order.begin() + i, order.begin() + end}, 1.0});
    }
  }
  return out;
}

// Builds the speaker pool shared by the trainers: speaker ids with at least
// two utterances, and each speaker's utterance indices.
struct SpeakerPool {
  std::vector<std::int64_t> ids;
  std::map<std::int64_t, std::vector<std::size_t>> utterances;
  std::map<std::int64_t, Group> groups;
  std::size_t rounds = 0;  // utterance pairs per speaker per epoch
};

inline SpeakerPool MakeSpeakerPool(const Corpus& corpus, std::size_t crop_frames) {
  SpeakerPool pool;
  pool.rounds = SIZE_MAX;
  for (const auto& s : corpus.speakers) pool.groups[s.id] = s.group;
  for (auto& [id, utts] : corpus.UtterancesBySpeaker()) {
    if (utts.size() < 2) continue;
    for (auto u : utts)
      Require(corpus.utterances[u].duration_frames() >= crop_frames, ErrorKind::kLength,
              "train: utterance " + corpus.utterances[u].id + " is shorter than crop_frames");
    pool.ids.push_back(id);
    pool.rounds = std::min(pool.rounds, utts.size() / 2);
    pool.utterances[id] = utts;
  }
  Require(pool.ids.size() >= 2, ErrorKind::kCapacity,
          "train: need at least 2 speakers with 2 or more utterances in '" +
              corpus.name + "'");
  return pool;
}

// Runs `epochs` epochs of Adam on the trunk and loss parameters.
// `plan_epoch(rng)` returns the batches of one epoch.
template <typename PlanEpoch>
void TrainLoop(EncoderModel& model, const Corpus& corpus, const SpeakerPool& pool,
               const TrainConfig& config, std::uint64_t stream, PlanEpoch plan_epoch) {
  Rng rng(DeriveSeed(config.seed, stream));
  Mlp& trunk = model.trunk;
  MlpGradient grad = MlpGradient::ZerosLike(trunk);
  double grad_scale = 0.0, grad_offset = 0.0;

  auto blocks = [&]() {
    std::vector<ParamBlock> b;
    auto params = trunk.Parameters();
    auto grads = grad.Blocks();
    auto names = trunk.ParameterNames();
    for (std::size_t i = 0; i < params.size(); ++i) b.push_back({names[i], params[i], grads[i]});
    b.push_back({"ap_scale", {&model.loss_params.scale, 1}, {&grad_scale, 1}});
    b.push_back({"ap_offset", {&model.loss_params.offset, 1}, {&grad_offset, 1}});
    return b;
  };
  AdamState adam =
      AdamState::ForBlocks(blocks(), config.learning_rate, config.epoch_decay);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    // Per-speaker utterance queues for this epoch.
    std::map<std::int64_t, std::vector<std::size_t>> queue;
    for (const auto& [id, utts] : pool.utterances) {
      queue[id] = utts;
      rng.Shuffle(queue[id].begin(), queue[id].end());
    }
    std::map<std::int64_t, std::size_t> cursor;
    const auto batches = plan_epoch(rng);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (const auto& spec : batches) {
      const std::size_t n = spec.speakers.size();
      std::vector<ApBatchItem> items(n);
      std::vector<MlpTrace> traces(2 * n);
      std::vector<double> norms(2 * n);
      for (std::size_t j = 0; j < n; ++j) {
        const auto id = spec.speakers[j];
        auto& q = queue[id];
        std::size_t& c = cursor[id];
        items[j].speaker_id = id;
        for (int side = 0; side < 2; ++side) {
          const Utterance& u = corpus.utterances[q[(c++) % q.size()]];
          const std::size_t span = u.duration_frames() - config.crop_frames;
          const std::size_t start = span == 0 ? 0 : rng.Below(span + 1);
          auto& tr = traces[2 * j + side];
          tr = MlpForwardTrace(trunk, MeanPool(*u.frames, start, config.crop_frames));
          const double nrm = Norm(tr.output());
          Require(nrm > 0.0, ErrorKind::kDegenerate,
                  "train: encoder produced a zero vector");
          norms[2 * j + side] = nrm;
          Vector e = tr.output();
          for (double& x : e) x /= nrm;
          (side == 0 ? items[j].query : items[j].prototype) = std::move(e);
        }
      }
      const ApLossResult res = ApLoss(items, model.loss_params);
      loss_sum += res.loss;
      ++loss_count;

      grad.SetZero();
      grad_scale = spec.weight * res.grad_scale;
      grad_offset = spec.weight * res.grad_offset;
      for (std::size_t k = 0; k < 2 * n; ++k) {
        const Vector& e = k % 2 == 0 ? items[k / 2].query : items[k / 2].prototype;
        const Vector& g = k % 2 == 0 ? res.grad_query[k / 2] : res.grad_prototype[k / 2];
        // Back through y -> y / |y|.
        const double eg = Dot(e, g);
        Vector up(e.size());
        for (std::size_t i = 0; i < e.size(); ++i)
          up[i] = spec.weight * (g[i] - e[i] * eg) / norms[k];
        MlpBackwardAccumulate(trunk, traces[k], up, &grad);
      }
      AdamStep(blocks(), adam);
      model.loss_params.scale = std::max(model.loss_params.scale, kMinApScale);
    }
    model.loss_history.push_back(loss_count ? loss_sum / loss_count : 0.0);
    adam.DecayEpoch();
  }
}

}  // namespace detail

// Metric-learning training of a fresh encoder on a (typically mixed-group)
// corpus.
inline EncoderModel TrainBase(const Corpus& corpus, const TrainConfig& config) {
  config.Validate();
  Require(corpus.speakers.size() >= config.speakers_per_batch, ErrorKind::kConfig,
          "train_base: corpus '" + corpus.name + "' has " +
              std::to_string(corpus.speakers.size()) + " speakers, fewer than the batch size " +
              std::to_string(config.speakers_per_batch));
  Require(!corpus.utterances.empty(), ErrorKind::kCapacity, "train_base: empty corpus");
  const auto pool = detail::MakeSpeakerPool(corpus, config.crop_frames);
  EncoderModel model = InitEncoder(corpus.utterances.front().feature_dim(), config);
  model.kind = EncoderKind::kBase;
  detail::TrainLoop(model, corpus, pool, config, HashString("train-base"),
                    [&](Rng& rng) {
                      return detail::PlanMixedEpoch(pool.ids, pool.rounds,
                                                    config.speakers_per_batch, rng);
                    });
  model.trained_with = config;
  return model;
}

// Fine-tunes a copy of `base` on a single-group corpus with a fresh optimizer
// and the same schedule. When the group has fewer speakers than the batch
// size, batches hold every speaker of the group.
inline EncoderModel Adapt(const EncoderModel& base, const Corpus& group_corpus,
                          const TrainConfig& config) {
  config.Validate();
  Require(!group_corpus.speakers.empty(), ErrorKind::kConfig, "adapt: empty corpus");
  const Group g = group_corpus.speakers.front().group;
  Require(IsSingleGroup(group_corpus, g), ErrorKind::kConfig,
          "adapt: corpus '" + group_corpus.name + "' mixes groups");
  Require(group_corpus.utterances.empty() ||
              group_corpus.utterances.front().feature_dim() == base.feature_dim(),
          ErrorKind::kInputShape, "adapt: corpus feature dim does not match the encoder");
  EncoderModel model = base;
  model.kind = AdaptedKind(g);
  model.loss_history.clear();
  if (config.epochs == 0) return model;
  const auto pool = detail::MakeSpeakerPool(group_corpus, config.crop_frames);
  const std::size_t n = std::min(config.speakers_per_batch, pool.ids.size());
  detail::TrainLoop(model, group_corpus, pool, config,
                    HashString(std::string("adapt-") + GroupTag(g)), [&](Rng& rng) {
                      return detail::PlanMixedEpoch(pool.ids, pool.rounds, n, rng);
                    });
  model.trained_with = config;
  return model;
}

// Loss weight of the majority group's single-group batches: minority speaker
// count over majority speaker count (1/9 at 1:9); 1 when balanced.
inline std::pair<double, double> GenderBatchWeights(std::size_t n_female,
                                                    std::size_t n_male) {
  Require(n_female > 0 && n_male > 0, ErrorKind::kConfig,
          "gender batching needs both groups");
  if (n_female > n_male)
    return {static_cast<double>(n_male) / static_cast<double>(n_female), 1.0};
  if (n_male > n_female)
    return {1.0, static_cast<double>(n_female) / static_cast<double>(n_male)};
  return {1.0, 1.0};
}

// Fine-tunes a copy of `base` with alternating all-female and all-male
// batches, scaling the majority group's batch loss by the reciprocal ratio.
inline EncoderModel FineTuneGenderBatched(const EncoderModel& base, const Corpus& corpus,
                                          const TrainConfig& config) {
  config.Validate();
  EncoderModel model = base;
  model.kind = EncoderKind::kGenderBatched;
  model.loss_history.clear();
  const auto pool = detail::MakeSpeakerPool(corpus, config.crop_frames);
  std::vector<std::int64_t> fem, mal;
  for (auto id : pool.ids) (pool.groups.at(id) == Group::kFemale ? fem : mal).push_back(id);
  Require(fem.size() >= 2 && mal.size() >= 2, ErrorKind::kCapacity,
          "gender batching needs at least 2 trainable speakers per group");
  const auto weights =
      GenderBatchWeights(corpus.SpeakerCount(Group::kFemale), corpus.SpeakerCount(Group::kMale));
  const double w_f = weights.first;
  const double w_m = weights.second;
  if (config.epochs == 0) return model;
  detail::TrainLoop(
      model, corpus, pool, config, HashString("gbwl"), [&](Rng& rng) {
        auto bf = detail::PlanMixedEpoch(
            fem, pool.rounds, std::min(config.speakers_per_batch, fem.size()), rng);
        auto bm = detail::PlanMixedEpoch(
            mal, pool.rounds, std::min(config.speakers_per_batch, mal.size()), rng);
        for (auto& b : bf) b.weight = w_f;
        for (auto& b : bm) b.weight = w_m;
        std::vector<detail::BatchSpec> out;
        std::size_t i = 0, j = 0;
        while (i < bf.size() || j < bm.size()) {
          if (i < bf.size()) out.push_back(std::move(bf[i++]));
          if (j < bm.size()) out.push_back(std::move(bm[j++]));
        }
        return out;
      });
  model.trained_with = config;
  return model;
}

// ---------------------------------------------------------------------------
// Crop scoring protocol: n_crops windows of crop_frames frames per utterance,
// at seeded uniform offsets. Offsets depend only on (protocol seed,
// utterance id), so an utterance is cropped identically in every trial and
// scores do not depend on evaluation order.

struct CropProtocol {
  std::size_t n_crops = 10;
  std::size_t crop_frames = 150;
  std::uint64_t seed = 99;
};

inline nlohmann::json ToJson(const CropProtocol& p) {
  return {{"n_crops", p.n_crops}, {"crop_frames", p.crop_frames}, {"seed", p.seed}};
}

inline CropProtocol CropProtocolFromJson(const nlohmann::json& j) {
  CropProtocol p;
  p.n_crops = j.value("n_crops", p.n_crops);
  p.crop_frames = j.value("crop_frames", p.crop_frames);
  p.seed = j.value("seed", p.seed);
  Require(p.n_crops > 0 && p.crop_frames > 0, ErrorKind::kConfig,
          "crop protocol: n_crops and crop_frames must be positive");
  return p;
}

inline std::vector<std::size_t> CropOffsets(const Utterance& u, const CropProtocol& p) {
  if (u.duration_frames() < p.crop_frames)
    Fail(ErrorKind::kLength,
         "crop: utterance " + u.id + " has " + std::to_string(u.duration_frames()) +
              " frames, fewer than crop_frames " + std::to_string(p.crop_frames));
  Rng rng(DeriveSeed(p.seed, HashString(u.id)));
  const std::size_t span = u.duration_frames() - p.crop_frames;
  std::vector<std::size_t> out(p.n_crops);
  for (auto& o : out) o = span == 0 ? 0 : rng.Below(span + 1);
  return out;
}

// Unit-norm embeddings of every crop of `u`.
inline std::vector<Vector> CropEmbeddings(const EncoderModel& model, const Utterance& u,
                                          const CropProtocol& p) {
  Require(u.feature_dim() == model.feature_dim(), ErrorKind::kInputShape,
          "crop: utterance feature dim does not match the encoder");
  std::vector<Vector> out;
  for (auto start : CropOffsets(u, p))
    out.push_back(EmbedPooled(model, MeanPool(*u.frames, start, p.crop_frames)));
  return out;
}

// Mean of the crop embeddings. The mean cosine over all crop pairs of two
// utterances equals the dot product of their centroids.
inline Vector CropCentroid(const EncoderModel& model, const Utterance& u,
                           const CropProtocol& p) {
  const auto crops = CropEmbeddings(model, u, p);
  Vector c(model.embedding_dim(), 0.0);
  for (const auto& e : crops)
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += e[i];
  for (double& x : c) x /= static_cast<double>(crops.size());
  return c;
}

// Per model, the mean of the n_crops x n_crops pairwise cosine similarities.
inline std::vector<double> CropSimilarity(std::span<const EncoderModel* const> models,
                                          const Utterance& a, const Utterance& b,
                                          const CropProtocol& p) {
  std::vector<double> out;
  for (const EncoderModel* m : models)
    out.push_back(Dot(CropCentroid(*m, a, p), CropCentroid(*m, b, p)));
  return out;
}

inline double CropSimilarity(const EncoderModel& model, const Utterance& a,
                             const Utterance& b, const CropProtocol& p) {
  const EncoderModel* m[] = {&model};
  return CropSimilarity(m, a, b, p).front();
}

// Crop centroids of every utterance of a corpus, keyed by utterance id.
using CentroidTable = std::unordered_map<std::string, Vector>;

inline CentroidTable ComputeCentroids(const EncoderModel& model, const Corpus& corpus,
                                      const CropProtocol& p) {
  CentroidTable t;
  t.reserve(corpus.utterances.size());
  for (const auto& u : corpus.utterances) t.emplace(u.id, CropCentroid(model, u, p));
  return t;
}

inline double CentroidScore(const CentroidTable& t, const std::string& a,
                            const std::string& b) {
  auto ia = t.find(a);
  auto ib = t.find(b);
  if (ia == t.end() || ib == t.end())
    Fail(ErrorKind::kConfig,
         "score: unknown utterance " + (ia == t.end() ? a : b));
  return Dot(ia->second, ib->second);
}

// ---------------------------------------------------------------------------
// Encoder checkpoint: the mlp checkpoint format plus kind, embedding_dim,
// pooling, loss parameters, loss history and the training config echo.

inline nlohmann::json EncoderToJson(const EncoderModel& m) {
  nlohmann::json j = MlpToJson(m.trunk);
  j["kind"] = EncoderKindName(m.kind);
  j["embedding_dim"] = m.embedding_dim();
  j["pooling"] = "temporal-mean";
  j["ap_scale"] = m.loss_params.scale;
  j["ap_offset"] = m.loss_params.offset;
  j["loss_history"] = m.loss_history;
  if (m.trained_with) j["train_config"] = ToJson(*m.trained_with);
  return j;
}

inline EncoderModel EncoderFromJson(const nlohmann::json& j) {
  EncoderModel m;
  m.trunk = MlpFromJson(j);
  try {
    m.kind = ParseEncoderKind(j.at("kind").get<std::string>());
    Require(j.at("pooling").get<std::string>() == "temporal-mean", ErrorKind::kIo,
            "encoder checkpoint: unsupported pooling");
    Require(j.at("embedding_dim").get<std::size_t>() == m.trunk.output_dim(),
            ErrorKind::kIo, "encoder checkpoint: embedding_dim disagrees with layer_dims");
    m.loss_params.scale = j.at("ap_scale").get<double>();
    m.loss_params.offset = j.at("ap_offset").get<double>();
    m.loss_history = j.value("loss_history", std::vector<double>{});
    if (j.contains("train_config")) m.trained_with = TrainConfigFromJson(j["train_config"]);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("encoder checkpoint: ") + e.what());
  }
  return m;
}

}  // namespace gfn
