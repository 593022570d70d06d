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
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "gfn/encoders.hpp"
#include "gfn/error.hpp"
#include "gfn/evaluation.hpp"
#include "gfn/fusion.hpp"
#include "gfn/io.hpp"
#include "gfn/speaker_sim.hpp"
#include "gfn/svg_chart.hpp"
#include "gfn/trials.hpp"

namespace gfn {

// Scoring systems compared by the harness.
//   Baseline: base encoder cosine.      GFN: learned fusion of three scores.
//   F-FT/M-FT: single adapted encoder.  ES: equal-weight fusion.
//   GBWL: base fine-tuned with gender batching and weighted loss.
enum class Variant { kBaseline, kGfn, kFemaleFt, kMaleFt, kEqualScore, kGbwl };

inline constexpr Variant kAllVariants[] = {Variant::kBaseline, Variant::kGfn,
                                           Variant::kFemaleFt, Variant::kMaleFt,
                                           Variant::kEqualScore, Variant::kGbwl};

inline const char* VariantName(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "Baseline";
    case Variant::kGfn: return "GFN";
    case Variant::kFemaleFt: return "F-FT";
    case Variant::kMaleFt: return "M-FT";
    case Variant::kEqualScore: return "ES";
    case Variant::kGbwl: return "GBWL";
  }
  return "?";
}

inline Variant ParseVariant(const std::string& s) {
  for (auto v : kAllVariants)
    if (s == VariantName(v)) return v;
  Fail(ErrorKind::kConfig, "unknown variant '" + s + "'");
}

inline bool NeedsAdaptedEncoders(Variant v) {
  return v == Variant::kGfn || v == Variant::kFemaleFt || v == Variant::kMaleFt ||
         v == Variant::kEqualScore;
}

// Variants that score with all three encoders.
inline bool UsesScoreTriple(Variant v) {
  return v == Variant::kGfn || v == Variant::kEqualScore;
}

// Suite worlds use noisier utterances and wider group separation than the
// SynthConfig defaults. With the defaults every baseline reaches 0% EER and
// group effects cannot be measured.
inline SynthConfig SuiteSynthConfig() {
  SynthConfig s;
  s.utterance_noise = 10.0;
  s.group_separation = 3.0;
  return s;
}

struct ExperimentConfig {
  SynthConfig synth = SuiteSynthConfig();
  std::size_t total_speakers = 200;
  std::vector<GroupRatio> ratios = {{9, 1}, {1, 1}, {1, 9}};
  std::size_t eval_female_speakers = 50;
  std::size_t eval_male_speakers = 50;
  std::size_t trials_per_category = 2000;
  TrainConfig encoder;
  FusionTrainConfig fusion;
  CropProtocol protocol;
  std::vector<Variant> variants = {Variant::kBaseline, Variant::kGfn};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string output_dir = "gfn-out";
  std::size_t workers = 1;
  // Checkpoints, score files and trial lists per cell.
  bool write_artifacts = true;
  // Silhouette protocol: speakers x utterances sampled from the eval corpus.
  std::size_t silhouette_speakers = 8;
  std::size_t silhouette_utterances = 10;

  void Validate() const {
    synth.Validate();
    encoder.Validate();
    fusion.Validate();
    Require(!variants.empty(), ErrorKind::kConfig, "experiment: no variants requested");
    Require(!seeds.empty(), ErrorKind::kConfig, "experiment: no seeds requested");
    Require(!ratios.empty(), ErrorKind::kConfig, "experiment: no ratios requested");
    for (const auto& r : ratios) SplitSpeakers(total_speakers, r);
    Require(eval_female_speakers >= 2 && eval_male_speakers >= 2, ErrorKind::kConfig,
            "experiment: eval corpus needs at least 2 speakers per group");
    Require(workers >= 1, ErrorKind::kConfig, "experiment: workers must be >= 1");
  }
};

inline nlohmann::json ToJson(const ExperimentConfig& c) {
  nlohmann::json j;
  j["synth"] = ToJson(c.synth);
  j["total_speakers"] = c.total_speakers;
  j["ratios"] = nlohmann::json::array();
  for (const auto& r : c.ratios) j["ratios"].push_back(RatioName(r));
  j["eval_female_speakers"] = c.eval_female_speakers;
  j["eval_male_speakers"] = c.eval_male_speakers;
  j["trials_per_category"] = c.trials_per_category;
  j["encoder"] = ToJson(c.encoder);
  j["fusion"] = ToJson(c.fusion);
  j["protocol"] = ToJson(c.protocol);
  j["variants"] = nlohmann::json::array();
  for (auto v : c.variants) j["variants"].push_back(VariantName(v));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["write_artifacts"] = c.write_artifacts;
  j["silhouette_speakers"] = c.silhouette_speakers;
  j["silhouette_utterances"] = c.silhouette_utterances;
  return j;
}

inline ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("synth")) c.synth = SynthConfigFromJson(j["synth"], c.synth);
    c.total_speakers = j.value("total_speakers", c.total_speakers);
    if (j.contains("ratios")) {
      c.ratios.clear();
      for (const auto& r : j["ratios"]) c.ratios.push_back(ParseRatio(r.get<std::string>()));
    }
    c.eval_female_speakers = j.value("eval_female_speakers", c.eval_female_speakers);
    c.eval_male_speakers = j.value("eval_male_speakers", c.eval_male_speakers);
    c.trials_per_category = j.value("trials_per_category", c.trials_per_category);
    if (j.contains("encoder")) c.encoder = TrainConfigFromJson(j["encoder"]);
    if (j.contains("fusion")) c.fusion = FusionTrainConfigFromJson(j["fusion"]);
    if (j.contains("protocol")) c.protocol = CropProtocolFromJson(j["protocol"]);
    if (j.contains("variants")) {
      c.variants.clear();
      for (const auto& v : j["variants"]) c.variants.push_back(ParseVariant(v.get<std::string>()));
    }
    c.seeds = j.value("seeds", c.seeds);
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
    c.write_artifacts = j.value("write_artifacts", c.write_artifacts);
    c.silhouette_speakers = j.value("silhouette_speakers", c.silhouette_speakers);
    c.silhouette_utterances = j.value("silhouette_utterances", c.silhouette_utterances);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, std::string("experiment config: ") + e.what());
  }
  c.Validate();
  return c;
}

// FNV-1a of the canonical JSON dump, hex encoded.
inline std::string ConfigHash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(HashString(ToJson(c).dump())));
  return buf;
}

// ---------------------------------------------------------------------------
// Seeds. Each experiment seed defines its own synthetic world (mixing matrix,
// group axis) and evaluation corpus; training corpora for different ratios
// under one seed share that world and evaluation set.

inline SynthConfig WorldFor(const ExperimentConfig& c, std::uint64_t seed) {
  SynthConfig s = c.synth;
  s.seed = DeriveSeed(c.synth.seed, seed);
  return s;
}

inline Corpus MakeEvalCorpus(const ExperimentConfig& c, std::uint64_t seed) {
  const SynthConfig world = WorldFor(c, seed);
  CorpusOptions opt;
  opt.name = "eval";
  opt.sample_seed = DeriveSeed(world.seed, HashString("eval-corpus"));
  opt.first_speaker_id = 0;
  return GenerateCorpus(world, c.eval_female_speakers, c.eval_male_speakers, opt);
}

inline TrialSet MakeEvalTrials(const ExperimentConfig& c, const Corpus& eval,
                               std::uint64_t seed) {
  return BuildTrialSet(eval, c.trials_per_category,
                       DeriveSeed(WorldFor(c, seed).seed, HashString("trials")));
}

inline Corpus MakeTrainCorpus(const ExperimentConfig& c, const GroupRatio& ratio,
                              std::size_t ratio_index, std::uint64_t seed) {
  const SynthConfig world = WorldFor(c, seed);
  return GenerateGrcCorpus(world, c.total_speakers, ratio, ratio_index,
                           DeriveSeed(world.seed, HashString("train-" + RatioName(ratio))));
}

inline TrainConfig EncoderConfigFor(const ExperimentConfig& c, const GroupRatio& ratio,
                                    std::uint64_t seed) {
  TrainConfig t = c.encoder;
  t.seed = DeriveSeed(DeriveSeed(c.encoder.seed, seed), HashString(RatioName(ratio)));
  return t;
}

inline FusionTrainConfig FusionConfigFor(const ExperimentConfig& c, const GroupRatio& ratio,
                                         std::uint64_t seed) {
  FusionTrainConfig f = c.fusion;
  f.seed = DeriveSeed(DeriveSeed(c.fusion.seed, seed), HashString(RatioName(ratio)));
  return f;
}

// ---------------------------------------------------------------------------
// One (ratio, seed) cell: trained systems are built lazily and shared by the
// variants evaluated in the cell.

class CellSystems {
 public:
  CellSystems(const Corpus& train, const TrainConfig& encoder_config,
              const FusionTrainConfig& fusion_config, const CropProtocol& protocol)
      : train_(train),
        encoder_config_(encoder_config),
        fusion_config_(fusion_config),
        protocol_(protocol) {}

  const EncoderModel& base() {
    if (!base_) base_ = TrainBase(train_, encoder_config_);
    return *base_;
  }
  const EncoderModel& female() {
    if (!female_) female_ = Adapt(base(), SplitByGroup(train_, Group::kFemale), encoder_config_);
    return *female_;
  }
  const EncoderModel& male() {
    if (!male_) male_ = Adapt(base(), SplitByGroup(train_, Group::kMale), encoder_config_);
    return *male_;
  }
  const EncoderModel& gbwl() {
    if (!gbwl_) gbwl_ = FineTuneGenderBatched(base(), train_, encoder_config_);
    return *gbwl_;
  }
  const FusionModel& fusion() {
    if (!fusion_)
      fusion_ = TrainFusion(base(), female(), male(), train_, fusion_config_, protocol_);
    return *fusion_;
  }

  bool has_base() const { return base_.has_value(); }
  bool has_female() const { return female_.has_value(); }
  bool has_male() const { return male_.has_value(); }
  bool has_gbwl() const { return gbwl_.has_value(); }
  bool has_fusion() const { return fusion_.has_value(); }

 private:
  const Corpus& train_;
  TrainConfig encoder_config_;
  FusionTrainConfig fusion_config_;
  CropProtocol protocol_;
  std::optional<EncoderModel> base_, female_, male_, gbwl_;
  std::optional<FusionModel> fusion_;
};

inline std::vector<ScoredTrial> ToScored(std::span<const ScoreRecord> records) {
  std::vector<ScoredTrial> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.fused, r.label, r.category});
  return out;
}

// Scores every trial with the given variant. Unused triple components are NaN.
inline std::vector<ScoreRecord> ScoreVariant(Variant v, CellSystems& systems,
                                             const Corpus& eval, const TrialSet& trials,
                                             const CropProtocol& protocol) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::optional<CentroidTable> tb, tf, tm;
  auto table = [&](std::optional<CentroidTable>& t, const EncoderModel& m) -> const CentroidTable& {
    if (!t) t = ComputeCentroids(m, eval, protocol);
    return *t;
  };
  std::vector<ScoreRecord> out;
  out.reserve(trials.trials.size());
  const bool three = v == Variant::kGfn || v == Variant::kEqualScore;
  const CentroidTable* single = nullptr;
  if (three) {
    table(tb, systems.base());
    table(tf, systems.female());
    table(tm, systems.male());
  } else if (v == Variant::kBaseline) {
    single = &table(tb, systems.base());
  } else if (v == Variant::kFemaleFt) {
    single = &table(tf, systems.female());
  } else if (v == Variant::kMaleFt) {
    single = &table(tm, systems.male());
  } else {
    single = &table(tb, systems.gbwl());
  }
  const FusionModel* fusion = v == Variant::kGfn ? &systems.fusion() : nullptr;
  for (const auto& t : trials.trials) {
    ScoreRecord r{t.utt_a, t.utt_b, {nan, nan, nan}, 0.0, t.label, t.category};
    if (three) {
      r.triple = {CentroidScore(*tb, t.utt_a, t.utt_b), CentroidScore(*tf, t.utt_a, t.utt_b),
                  CentroidScore(*tm, t.utt_a, t.utt_b)};
      r.fused = fusion ? Fuse(*fusion, r.triple) : EqualWeightFuse(r.triple);
    } else {
      const double s = CentroidScore(*single, t.utt_a, t.utt_b);
      if (v == Variant::kFemaleFt) r.triple.female = s;
      else if (v == Variant::kMaleFt) r.triple.male = s;
      else r.triple.base = s;
      r.fused = s;
    }
    out.push_back(std::move(r));
  }
  return out;
}

struct EvalContext {
  const Corpus& train;
  const Corpus& eval;
  const TrialSet& trials;
  TrainConfig encoder;
  FusionTrainConfig fusion;
  CropProtocol protocol;
};

// Single base encoder scored with crop cosine.
inline MetricReport RunBaseline(const EvalContext& ctx) {
  CellSystems s(ctx.train, ctx.encoder, ctx.fusion, ctx.protocol);
  return GroupMetrics(ToScored(ScoreVariant(Variant::kBaseline, s, ctx.eval, ctx.trials,
                                            ctx.protocol)));
}

// Base + two adapted encoders + learned score fusion.
inline MetricReport RunGfn(const EvalContext& ctx) {
  CellSystems s(ctx.train, ctx.encoder, ctx.fusion, ctx.protocol);
  return GroupMetrics(
      ToScored(ScoreVariant(Variant::kGfn, s, ctx.eval, ctx.trials, ctx.protocol)));
}

inline MetricReport RunAblation(Variant v, const EvalContext& ctx) {
  Require(v == Variant::kFemaleFt || v == Variant::kMaleFt || v == Variant::kEqualScore ||
              v == Variant::kGbwl,
          ErrorKind::kConfig, std::string("run_ablation: ") + VariantName(v) +
                                  " is not an ablation");
  CellSystems s(ctx.train, ctx.encoder, ctx.fusion, ctx.protocol);
  return GroupMetrics(ToScored(ScoreVariant(v, s, ctx.eval, ctx.trials, ctx.protocol)));
}

// ---------------------------------------------------------------------------
// Embedding export

struct EmbeddingRow {
  std::string utterance_id;
  std::int64_t speaker_id = 0;
  Group group = Group::kFemale;
  Vector embedding;
};

// Full-utterance embeddings of n_utterances utterances from each of
// n_speakers randomly chosen speakers; with several models the per-model
// unit embeddings are concatenated in order.
inline std::vector<EmbeddingRow> ExportEmbeddings(std::span<const EncoderModel* const> models,
                                                  const Corpus& corpus,
                                                  std::size_t n_speakers,
                                                  std::size_t n_utterances,
                                                  std::uint64_t seed) {
  Require(!models.empty(), ErrorKind::kConfig, "export_embeddings: no models");
  auto by_speaker = corpus.UtterancesBySpeaker();
  std::vector<std::int64_t> eligible;
  for (const auto& [id, utts] : by_speaker)
    if (utts.size() >= n_utterances) eligible.push_back(id);
  Require(eligible.size() >= n_speakers, ErrorKind::kCapacity,
          "export_embeddings: only " + std::to_string(eligible.size()) +
              " speakers have " + std::to_string(n_utterances) + " utterances");
  Rng rng(seed);
  rng.Shuffle(eligible.begin(), eligible.end());
  eligible.resize(n_speakers);
  std::sort(eligible.begin(), eligible.end());
  std::vector<EmbeddingRow> rows;
  for (auto id : eligible) {
    auto utts = by_speaker[id];
    rng.Shuffle(utts.begin(), utts.end());
    utts.resize(n_utterances);
    std::sort(utts.begin(), utts.end());
    for (auto u : utts) {
      const Utterance& utt = corpus.utterances[u];
      EmbeddingRow row{utt.id, utt.speaker_id, utt.group, {}};
      for (const auto* m : models) {
        const Vector e = Embed(*m, *utt.frames);
        row.embedding.insert(row.embedding.end(), e.begin(), e.end());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

inline std::vector<LabeledPoint> ToLabeledPoints(std::span<const EmbeddingRow> rows) {
  std::vector<LabeledPoint> out;
  for (const auto& r : rows) out.push_back({r.embedding, r.speaker_id});
  return out;
}

// Tab-separated: utterance_id, speaker_id, group, then the embedding values.
inline std::string FormatEmbeddingDump(std::span<const EmbeddingRow> rows) {
  std::string out;
  char buf[64];
  for (const auto& r : rows) {
    out += r.utterance_id + "\t" + std::to_string(r.speaker_id) + "\t" + GroupTag(r.group);
    for (double x : r.embedding) {
      std::snprintf(buf, sizeof buf, "\t%.17g", x);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Suite

struct CellResult {
  GroupRatio ratio;
  Variant variant = Variant::kBaseline;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string failure;
  MetricReport report;
  std::map<std::string, std::string> artifacts;
};

struct SilhouetteRecord {
  GroupRatio ratio;
  std::uint64_t seed = 0;
  double base = 0.0;
  double gfn = 0.0;  // concatenated base + female + male embeddings
};

struct RunRecord {
  std::string config_hash;
  ExperimentConfig config;
  std::vector<CellResult> cells;
  std::vector<SilhouetteRecord> silhouettes;
  // (ratio, seed) -> number of speakers shared by training and eval corpora.
  std::vector<std::pair<std::string, std::size_t>> speaker_overlap;
  double wall_seconds = 0.0;

  const CellResult* Find(const GroupRatio& r, Variant v, std::uint64_t seed) const {
    for (const auto& c : cells)
      if (c.ratio.female_parts == r.female_parts && c.ratio.male_parts == r.male_parts &&
          c.variant == v && c.seed == seed)
        return &c;
    return nullptr;
  }
};

inline std::string CellDirName(const GroupRatio& r, std::uint64_t seed) {
  return "ratio_" + std::to_string(r.female_parts) + "-" + std::to_string(r.male_parts) +
         "/seed_" + std::to_string(seed);
}

namespace detail {

struct CellGroupResult {
  std::vector<CellResult> cells;
  std::optional<SilhouetteRecord> silhouette;
  std::size_t overlap = 0;
};

inline std::string VariantFileTag(Variant v) {
  std::string s = VariantName(v);
  for (char& c : s) c = c == '-' ? '_' : static_cast<char>(std::tolower(c));
  return s;
}

inline CellGroupResult RunCellGroup(const ExperimentConfig& config, const GroupRatio& ratio,
                                    std::size_t ratio_index, std::uint64_t seed) {
  namespace fs = std::filesystem;
  CellGroupResult out;
  auto fail_all = [&](const std::string& why) {
    for (auto v : config.variants) out.cells.push_back({ratio, v, seed, false, why, {}, {}});
  };
  std::optional<Corpus> train, eval;
  std::optional<TrialSet> trials;
  try {
    eval = MakeEvalCorpus(config, seed);
    trials = MakeEvalTrials(config, *eval, seed);
    train = MakeTrainCorpus(config, ratio, ratio_index, seed);
    out.overlap = SharedSpeakers(*train, *eval).size();
    Require(out.overlap == 0, ErrorKind::kConfig,
            "training and evaluation corpora share speakers");
  } catch (const std::exception& e) {
    fail_all(e.what());
    return out;
  }
  const fs::path dir = fs::path(config.output_dir) / CellDirName(ratio, seed);
  CellSystems systems(*train, EncoderConfigFor(config, ratio, seed),
                      FusionConfigFor(config, ratio, seed), config.protocol);
  if (config.write_artifacts) {
    try {
      WriteTrialList(*trials, dir / "trials.txt");
    } catch (const std::exception&) {
      // Reported per variant below through the missing artifact.
    }
  }
  for (auto v : config.variants) {
    CellResult cell{ratio, v, seed, false, "", {}, {}};
    try {
      const auto records = ScoreVariant(v, systems, *eval, *trials, config.protocol);
      cell.report = GroupMetrics(ToScored(records));
      cell.ok = true;
      if (config.write_artifacts) {
        const std::string tag = VariantFileTag(v);
        const fs::path scores = dir / ("scores_" + tag + ".txt");
        WriteTextAtomic(scores, FormatScoreFile(records));
        WriteJsonFile(dir / ("report_" + tag + ".json"), ToJson(cell.report));
        cell.artifacts["scores"] = scores.string();
        cell.artifacts["trials"] = (dir / "trials.txt").string();
        cell.artifacts["report"] = (dir / ("report_" + tag + ".json")).string();
        auto save = [&](const char* key, const nlohmann::json& j) {
          const fs::path p = dir / (std::string(key) + ".json");
          if (!fs::exists(p)) WriteJsonFile(p, j);
          cell.artifacts[key] = p.string();
        };
        if (v == Variant::kBaseline || UsesScoreTriple(v) || v == Variant::kGbwl)
          save("base", EncoderToJson(systems.base()));
        if (UsesScoreTriple(v) || v == Variant::kFemaleFt)
          save("female", EncoderToJson(systems.female()));
        if (UsesScoreTriple(v) || v == Variant::kMaleFt)
          save("male", EncoderToJson(systems.male()));
        if (v == Variant::kGfn) save("fusion", FusionToJson(systems.fusion()));
        if (v == Variant::kGbwl) save("gbwl", EncoderToJson(systems.gbwl()));
      }
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.failure = e.what();
    }
    out.cells.push_back(std::move(cell));
  }
  if (systems.has_female() && systems.has_male()) {
    try {
      const std::uint64_t sc_seed = DeriveSeed(WorldFor(config, seed).seed, HashString("sc"));
      const EncoderModel* base_only[] = {&systems.base()};
      const EncoderModel* all3[] = {&systems.base(), &systems.female(), &systems.male()};
      const auto rb = ExportEmbeddings(base_only, *eval, config.silhouette_speakers,
                                       config.silhouette_utterances, sc_seed);
      const auto rg = ExportEmbeddings(all3, *eval, config.silhouette_speakers,
                                       config.silhouette_utterances, sc_seed);
      out.silhouette = SilhouetteRecord{ratio, seed, Silhouette(ToLabeledPoints(rb)).mean,
                                        Silhouette(ToLabeledPoints(rg)).mean};
    } catch (const std::exception&) {
      // Silhouettes are diagnostic; a failure leaves the record without one.
    }
  }
  return out;
}

}  // namespace detail

inline std::string FormatMetricsCsv(const RunRecord& record) {
  std::string out =
      "ratio,variant,seed,status,eer_f,eer_m,eer_all,ds,threshold_f,threshold_m,threshold_all,"
      "count_f,count_m,count_all\n";
  char buf[512];
  for (const auto& c : record.cells) {
    if (c.ok) {
      const auto& r = c.report;
      std::snprintf(buf, sizeof buf,
                    "%s,%s,%llu,ok,%.6f,%.6f,%.6f,%.6f,%.9f,%.9f,%.9f,%zu,%zu,%zu\n",
                    RatioName(c.ratio).c_str(), VariantName(c.variant),
                    static_cast<unsigned long long>(c.seed), r.eer_f, r.eer_m, r.eer_all, r.ds,
                    r.threshold_f, r.threshold_m, r.threshold_all, r.count_f, r.count_m,
                    r.count_all);
    } else {
      std::snprintf(buf, sizeof buf, "%s,%s,%llu,failed,,,,,,,,,,\n", RatioName(c.ratio).c_str(),
                    VariantName(c.variant), static_cast<unsigned long long>(c.seed));
    }
    out += buf;
  }
  return out;
}

inline std::string FormatSilhouetteCsv(const RunRecord& record) {
  std::string out = "ratio,seed,sc_base,sc_gfn\n";
  char buf[256];
  for (const auto& s : record.silhouettes) {
    std::snprintf(buf, sizeof buf, "%s,%llu,%.6f,%.6f\n", RatioName(s.ratio).c_str(),
                  static_cast<unsigned long long>(s.seed), s.base, s.gfn);
    out += buf;
  }
  return out;
}

inline nlohmann::json ToJson(const RunRecord& r) {
  nlohmann::json j;
  j["config_hash"] = r.config_hash;
  j["config"] = ToJson(r.config);
  j["wall_seconds"] = r.wall_seconds;
  j["fusion_models"] = "one per (ratio, seed)";
  j["gbwl_epochs"] = "reuses the adaptation epoch budget";
  j["cells"] = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json jc = {{"ratio", RatioName(c.ratio)},
                         {"variant", VariantName(c.variant)},
                         {"seed", c.seed},
                         {"status", c.ok ? "ok" : "failed"}};
    if (c.ok) jc["report"] = ToJson(c.report);
    else jc["failure"] = c.failure;
    jc["artifacts"] = c.artifacts;
    j["cells"].push_back(jc);
  }
  j["silhouettes"] = nlohmann::json::array();
  for (const auto& s : r.silhouettes)
    j["silhouettes"].push_back(
        {{"ratio", RatioName(s.ratio)}, {"seed", s.seed}, {"base", s.base}, {"gfn", s.gfn}});
  j["speaker_overlap"] = nlohmann::json::array();
  for (const auto& [cell, n] : r.speaker_overlap)
    j["speaker_overlap"].push_back({{"cell", cell}, {"shared_speakers", n}});
  return j;
}

inline RunRecord RunRecordFromJson(const nlohmann::json& j) {
  RunRecord r;
  try {
    r.config_hash = j.at("config_hash");
    r.config = ExperimentConfigFromJson(j.at("config"));
    r.wall_seconds = j.value("wall_seconds", 0.0);
    for (const auto& jc : j.at("cells")) {
      CellResult c;
      c.ratio = ParseRatio(jc.at("ratio"));
      c.variant = ParseVariant(jc.at("variant"));
      c.seed = jc.at("seed");
      c.ok = jc.at("status") == "ok";
      if (c.ok) c.report = MetricReportFromJson(jc.at("report"));
      else c.failure = jc.value("failure", "");
      c.artifacts = jc.value("artifacts", std::map<std::string, std::string>{});
      r.cells.push_back(std::move(c));
    }
    for (const auto& js : j.value("silhouettes", nlohmann::json::array()))
      r.silhouettes.push_back(
          {ParseRatio(js.at("ratio")), js.at("seed"), js.at("base"), js.at("gfn")});
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("run record: ") + e.what());
  }
  return r;
}

// Mean over successful seeds of each metric, per (variant, ratio).
inline std::vector<SvgSeries> MetricSeries(const RunRecord& record,
                                           double MetricReport::*field) {
  std::vector<SvgSeries> out;
  for (auto v : record.config.variants) {
    SvgSeries s;
    s.name = VariantName(v);
    for (const auto& ratio : record.config.ratios) {
      double sum = 0.0;
      std::size_t n = 0;
      for (auto seed : record.config.seeds)
        if (const auto* c = record.Find(ratio, v, seed); c && c->ok) {
          sum += c->report.*field;
          ++n;
        }
      s.values.push_back(n ? sum / static_cast<double>(n)
                           : std::numeric_limits<double>::quiet_NaN());
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline void WriteCharts(const RunRecord& record, const std::filesystem::path& dir) {
  std::vector<std::string> x;
  for (const auto& r : record.config.ratios) x.push_back(RatioName(r));
  const std::pair<const char*, double MetricReport::*> panels[] = {
      {"EER[F]", &MetricReport::eer_f},
      {"EER[M]", &MetricReport::eer_m},
      {"EER[All]", &MetricReport::eer_all},
      {"DS", &MetricReport::ds}};
  std::vector<SvgPanel> all;
  for (const auto& [title, field] : panels) {
    SvgPanel p{title, x, MetricSeries(record, field)};
    std::string file = std::string("chart_") + title + ".svg";
    for (char& c : file)
      if (c == '[' || c == ']') c = '_';
    WriteTextAtomic(dir / file, RenderLineChart(p));
    all.push_back(std::move(p));
  }
  WriteTextAtomic(dir / "chart_grid.svg", RenderPanelGrid(all));
}

// Aligned text table of per-(ratio, variant) means over seeds.
inline std::string FormatSummaryTable(const RunRecord& record) {
  std::string out = "ratio  variant   EER[F]  EER[M]  EER[All]    DS   ok/seeds\n";
  char buf[160];
  for (const auto& ratio : record.config.ratios)
    for (auto v : record.config.variants) {
      double f = 0, m = 0, a = 0, d = 0;
      std::size_t n = 0;
      for (auto seed : record.config.seeds)
        if (const auto* c = record.Find(ratio, v, seed); c && c->ok) {
          f += c->report.eer_f;
          m += c->report.eer_m;
          a += c->report.eer_all;
          d += c->report.ds;
          ++n;
        }
      const double k = n ? static_cast<double>(n) : 1.0;
      std::snprintf(buf, sizeof buf, "%-6s %-8s %7.2f %7.2f %8.2f %6.2f   %zu/%zu\n",
                    RatioName(ratio).c_str(), VariantName(v), f / k, m / k, a / k, d / k, n,
                    record.config.seeds.size());
      out += buf;
    }
  return out;
}

// Runs every (ratio x variant x seed) cell. Cells that share a (ratio, seed)
// reuse the trained encoders; groups run on up to `workers` threads and the
// record is assembled in a fixed order, so output does not depend on
// scheduling.
inline RunRecord RunSuite(const ExperimentConfig& config) {
  config.Validate();
  const auto t0 = std::chrono::steady_clock::now();
  struct Job {
    std::size_t ratio_index;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < config.ratios.size(); ++i)
    for (auto s : config.seeds) jobs.push_back({i, s});
  std::vector<detail::CellGroupResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k; (k = next.fetch_add(1)) < jobs.size();)
      results[k] = detail::RunCellGroup(config, config.ratios[jobs[k].ratio_index],
                                        jobs[k].ratio_index, jobs[k].seed);
  };
  const std::size_t n_threads = std::min(config.workers, jobs.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }

  RunRecord record;
  record.config = config;
  record.config_hash = ConfigHash(config);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    auto& r = results[k];
    for (auto& c : r.cells) record.cells.push_back(std::move(c));
    if (r.silhouette) record.silhouettes.push_back(*r.silhouette);
    record.speaker_overlap.emplace_back(
        CellDirName(config.ratios[jobs[k].ratio_index], jobs[k].seed), r.overlap);
  }
  // Fixed order: ratio, then variant, then seed.
  auto ratio_pos = [&](const GroupRatio& r) {
    for (std::size_t i = 0; i < config.ratios.size(); ++i)
      if (config.ratios[i].female_parts == r.female_parts &&
          config.ratios[i].male_parts == r.male_parts)
        return i;
    return config.ratios.size();
  };
  auto variant_pos = [&](Variant v) {
    return static_cast<std::size_t>(
        std::find(config.variants.begin(), config.variants.end(), v) - config.variants.begin());
  };
  auto seed_pos = [&](std::uint64_t s) {
    return static_cast<std::size_t>(
        std::find(config.seeds.begin(), config.seeds.end(), s) - config.seeds.begin());
  };
  std::stable_sort(record.cells.begin(), record.cells.end(),
                   [&](const CellResult& a, const CellResult& b) {
                     return std::tuple(ratio_pos(a.ratio), variant_pos(a.variant),
                                       seed_pos(a.seed)) <
                            std::tuple(ratio_pos(b.ratio), variant_pos(b.variant),
                                       seed_pos(b.seed));
                   });
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const std::filesystem::path out(config.output_dir);
  WriteTextAtomic(out / "metrics.csv", FormatMetricsCsv(record));
  WriteTextAtomic(out / "silhouette.csv", FormatSilhouetteCsv(record));
  WriteJsonFile(out / "run_record.json", ToJson(record));
  WriteCharts(record, out);
  return record;
}

}  // namespace gfn
