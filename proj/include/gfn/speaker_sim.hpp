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

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gfn/error.hpp"
#include "gfn/io.hpp"
#include "gfn/linalg.hpp"
#include "gfn/rng.hpp"

namespace gfn {

enum class Group { kFemale, kMale };

inline constexpr Group kGroups[] = {Group::kFemale, Group::kMale};

inline const char* GroupTag(Group g) { return g == Group::kFemale ? "F" : "M"; }

inline Group ParseGroup(const std::string& s) {
  if (s == "F" || s == "f" || s == "female") return Group::kFemale;
  if (s == "M" || s == "m" || s == "male") return Group::kMale;
  Fail(ErrorKind::kConfig, "unknown group '" + s + "' (expected F or M)");
}

inline Group OtherGroup(Group g) {
  return g == Group::kFemale ? Group::kMale : Group::kFemale;
}

// Generative model: speaker identities live in a latent space with the two
// group means at +/- group_separation along a fixed unit axis; frames are a
// fixed linear mixing of the identity plus white noise.
struct SynthConfig {
  std::size_t latent_dim = 16;
  std::size_t feature_dim = 40;
  std::size_t frames_per_utterance = 200;
  double group_separation = 1.5;
  double speaker_spread = 1.0;
  double utterance_noise = 0.8;
  std::size_t utterances_per_speaker = 20;
  // Fixes the mixing matrix and group axis shared by every corpus generated
  // from this config.
  std::uint64_t seed = 1;

  void Validate() const {
    Require(latent_dim > 0 && feature_dim > 0 && frames_per_utterance > 0,
            ErrorKind::kConfig, "synth: dimensions must be positive");
    Require(group_separation >= 0.0, ErrorKind::kConfig,
            "synth: group_separation must be >= 0");
    Require(speaker_spread > 0.0, ErrorKind::kConfig,
            "synth: speaker_spread must be > 0");
    // Zero utterance noise is allowed: it produces noise-free utterances.
    Require(utterance_noise >= 0.0, ErrorKind::kConfig,
            "synth: utterance_noise must be >= 0");
    Require(utterances_per_speaker > 0, ErrorKind::kConfig,
            "synth: utterances_per_speaker must be > 0");
  }
};

inline nlohmann::json ToJson(const SynthConfig& c) {
  return {{"latent_dim", c.latent_dim},
          {"feature_dim", c.feature_dim},
          {"frames_per_utterance", c.frames_per_utterance},
          {"group_separation", c.group_separation},
          {"speaker_spread", c.speaker_spread},
          {"utterance_noise", c.utterance_noise},
          {"utterances_per_speaker", c.utterances_per_speaker},
          {"seed", c.seed}};
}

// Keys missing from j keep their value from base.
inline SynthConfig SynthConfigFromJson(const nlohmann::json& j,
                                       const SynthConfig& base = SynthConfig{}) {
  SynthConfig c = base;
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.frames_per_utterance = j.value("frames_per_utterance", c.frames_per_utterance);
  c.group_separation = j.value("group_separation", c.group_separation);
  c.speaker_spread = j.value("speaker_spread", c.speaker_spread);
  c.utterance_noise = j.value("utterance_noise", c.utterance_noise);
  c.utterances_per_speaker =
      j.value("utterances_per_speaker", c.utterances_per_speaker);
  c.seed = j.value("seed", c.seed);
  c.Validate();
  return c;
}

struct Speaker {
  std::int64_t id = 0;
  Group group = Group::kFemale;
  Vector identity;
};

// Frames are immutable once generated and shared between a corpus and the
// group subsets split from it.
struct Utterance {
  std::string id;
  std::int64_t speaker_id = 0;
  Group group = Group::kFemale;
  std::shared_ptr<const Matrix> frames;

  std::size_t duration_frames() const { return frames->rows(); }
  std::size_t feature_dim() const { return frames->cols(); }
};

struct Corpus {
  std::string name;
  std::vector<Speaker> speakers;
  std::vector<Utterance> utterances;
  std::string ratio_label;
  SynthConfig config;

  std::size_t SpeakerCount(Group g) const {
    std::size_t n = 0;
    for (const auto& s : speakers) n += s.group == g;
    return n;
  }

  std::size_t UtteranceCount(Group g) const {
    std::size_t n = 0;
    for (const auto& u : utterances) n += u.group == g;
    return n;
  }

  std::set<std::int64_t> SpeakerIds() const {
    std::set<std::int64_t> ids;
    for (const auto& s : speakers) ids.insert(s.id);
    return ids;
  }

  // Utterance indices grouped by speaker, keyed by speaker id.
  std::map<std::int64_t, std::vector<std::size_t>> UtterancesBySpeaker() const {
    std::map<std::int64_t, std::vector<std::size_t>> out;
    for (const auto& s : speakers) out[s.id];
    for (std::size_t i = 0; i < utterances.size(); ++i)
      out[utterances[i].speaker_id].push_back(i);
    return out;
  }

  std::map<std::string, std::size_t> UtteranceIndex() const {
    std::map<std::string, std::size_t> out;
    for (std::size_t i = 0; i < utterances.size(); ++i) out[utterances[i].id] = i;
    return out;
  }
};

// "9:1" style label for a female:male split, reduced by the gcd.
inline std::string RatioLabel(std::size_t n_female, std::size_t n_male) {
  const std::size_t g = std::gcd(n_female, n_male);
  if (g == 0) return "0:0";
  return std::to_string(n_female / g) + ":" + std::to_string(n_male / g);
}

// Shared structure of every corpus generated from one SynthConfig.
struct SynthWorld {
  Matrix mixing;    // feature_dim x latent_dim
  Vector group_axis;  // unit vector in latent space
};

inline SynthWorld MakeWorld(const SynthConfig& config) {
  config.Validate();
  Rng rng(DeriveSeed(config.seed, HashString("world")));
  SynthWorld w;
  w.mixing = Matrix(config.feature_dim, config.latent_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(config.latent_dim));
  for (double& a : w.mixing.values()) a = rng.Normal(0.0, scale);
  Vector axis(config.latent_dim);
  for (double& a : axis) a = rng.Normal();
  w.group_axis = Normalized(axis);
  return w;
}

struct CorpusOptions {
  std::string name = "corpus";
  // Seed of the speaker and utterance draws; defaults to the config seed.
  std::optional<std::uint64_t> sample_seed;
  std::int64_t first_speaker_id = 0;
};

inline std::string UtteranceId(std::int64_t speaker_id, std::size_t k) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "spk%06lld-utt%03zu",
                static_cast<long long>(speaker_id), k);
  return buf;
}

// Female speakers come first, then male; ids are consecutive from
// first_speaker_id.
inline Corpus GenerateCorpus(const SynthConfig& config, std::size_t n_female,
                             std::size_t n_male, const CorpusOptions& options = {}) {
  config.Validate();
  Require(n_female + n_male >= 2, ErrorKind::kConfig,
          "generate_corpus: need at least two speakers");
  Require(n_female > 0, ErrorKind::kConfig,
          "generate_corpus: utterances requested for group F but it has no speakers");
  Require(n_male > 0, ErrorKind::kConfig,
          "generate_corpus: utterances requested for group M but it has no speakers");
  const SynthWorld world = MakeWorld(config);
  Rng rng(options.sample_seed.value_or(
      DeriveSeed(config.seed, HashString("corpus"))));

  Corpus corpus;
  corpus.name = options.name;
  corpus.config = config;
  corpus.ratio_label = RatioLabel(n_female, n_male);
  const std::size_t d = config.latent_dim;
  for (std::size_t k = 0; k < n_female + n_male; ++k) {
    Speaker s;
    s.id = options.first_speaker_id + static_cast<std::int64_t>(k);
    s.group = k < n_female ? Group::kFemale : Group::kMale;
    const double sign = s.group == Group::kFemale ? 1.0 : -1.0;
    s.identity.resize(d);
    for (std::size_t i = 0; i < d; ++i)
      s.identity[i] = sign * config.group_separation * world.group_axis[i] +
                      config.speaker_spread * rng.Normal();
    corpus.speakers.push_back(std::move(s));
  }

  const std::size_t frames = config.frames_per_utterance;
  const std::size_t f = config.feature_dim;
  Vector clean(f);
  for (const auto& s : corpus.speakers) {
    Affine(world.mixing, s.identity, Vector(f, 0.0), clean);
    for (std::size_t k = 0; k < config.utterances_per_speaker; ++k) {
      auto m = std::make_shared<Matrix>(frames, f);
      for (std::size_t t = 0; t < frames; ++t) {
        auto row = m->row(t);
        for (std::size_t c = 0; c < f; ++c)
          row[c] = clean[c] + config.utterance_noise * rng.Normal();
      }
      Utterance u;
      u.id = UtteranceId(s.id, k);
      u.speaker_id = s.id;
      u.group = s.group;
      u.frames = std::move(m);
      corpus.utterances.push_back(std::move(u));
    }
  }
  return corpus;
}

struct GroupRatio {
  std::size_t female_parts = 1;
  std::size_t male_parts = 1;
};

inline std::string RatioName(const GroupRatio& r) {
  return std::to_string(r.female_parts) + ":" + std::to_string(r.male_parts);
}

inline GroupRatio ParseRatio(const std::string& s) {
  const auto colon = s.find(':');
  Require(colon != std::string::npos, ErrorKind::kConfig,
          "ratio '" + s + "' is not of the form F:M");
  try {
    return {std::stoul(s.substr(0, colon)), std::stoul(s.substr(colon + 1))};
  } catch (const std::exception&) {
    Fail(ErrorKind::kConfig, "ratio '" + s + "' is not of the form F:M");
  }
}

// Exact integer split of total_speakers; no rounding.
inline std::pair<std::size_t, std::size_t> SplitSpeakers(std::size_t total,
                                                         const GroupRatio& r) {
  const std::size_t parts = r.female_parts + r.male_parts;
  Require(r.female_parts > 0 && r.male_parts > 0, ErrorKind::kConfig,
          "ratio " + RatioName(r) + " must have positive parts");
  Require(total % parts == 0, ErrorKind::kConfig,
          "ratio " + RatioName(r) + " does not split " + std::to_string(total) +
              " speakers into integers");
  const std::size_t unit = total / parts;
  return {unit * r.female_parts, unit * r.male_parts};
}

// Speaker id namespace of the i-th training corpus; evaluation corpora use
// ids below kTrainSpeakerIdBase.
inline constexpr std::int64_t kTrainSpeakerIdBase = 1'000'000;

inline Corpus GenerateGrcCorpus(const SynthConfig& config, std::size_t total_speakers,
                                const GroupRatio& ratio, std::size_t index,
                                std::uint64_t sample_seed) {
  const auto [n_female, n_male] = SplitSpeakers(total_speakers, ratio);
  CorpusOptions opt;
  opt.name = "grc-" + std::to_string(ratio.female_parts) + "-" +
             std::to_string(ratio.male_parts);
  opt.sample_seed = sample_seed;
  opt.first_speaker_id =
      kTrainSpeakerIdBase * static_cast<std::int64_t>(index + 1);
  return GenerateCorpus(config, n_female, n_male, opt);
}

// One corpus per ratio, each with exactly total_speakers speakers, sampled
// independently.
inline std::vector<Corpus> BuildGrcSuite(const SynthConfig& config,
                                         std::size_t total_speakers,
                                         const std::vector<GroupRatio>& ratios) {
  for (const auto& r : ratios) SplitSpeakers(total_speakers, r);
  std::vector<Corpus> out;
  for (std::size_t i = 0; i < ratios.size(); ++i)
    out.push_back(GenerateGrcCorpus(config, total_speakers, ratios[i], i,
                                    DeriveSeed(config.seed, 1000 + i)));
  return out;
}

inline Corpus SplitByGroup(const Corpus& corpus, Group group) {
  Corpus out;
  out.name = corpus.name + "-" + GroupTag(group);
  out.config = corpus.config;
  for (const auto& s : corpus.speakers)
    if (s.group == group) out.speakers.push_back(s);
  for (const auto& u : corpus.utterances)
    if (u.group == group) out.utterances.push_back(u);
  Require(!out.speakers.empty(), ErrorKind::kConfig,
          "split_by_group: corpus '" + corpus.name + "' has no speakers in group " +
              GroupTag(group));
  out.ratio_label = group == Group::kFemale ? "1:0" : "0:1";
  return out;
}

inline bool IsSingleGroup(const Corpus& corpus, Group group) {
  for (const auto& s : corpus.speakers)
    if (s.group != group) return false;
  return !corpus.speakers.empty();
}

// Checks the structural invariants: unique speaker ids, every utterance owned
// by a known speaker of the same group, finite values, ratio label agreement.
inline void ValidateCorpus(const Corpus& corpus) {
  std::map<std::int64_t, Group> groups;
  for (const auto& s : corpus.speakers) {
    Require(groups.emplace(s.id, s.group).second, ErrorKind::kConfig,
            "corpus: duplicate speaker id " + std::to_string(s.id));
    Require(AllFinite(s.identity), ErrorKind::kNumeric,
            "corpus: non-finite identity vector");
  }
  std::set<std::string> ids;
  for (const auto& u : corpus.utterances) {
    auto it = groups.find(u.speaker_id);
    Require(it != groups.end(), ErrorKind::kConfig,
            "corpus: utterance " + u.id + " has unknown speaker");
    Require(it->second == u.group, ErrorKind::kConfig,
            "corpus: utterance " + u.id + " group disagrees with its speaker");
    Require(ids.insert(u.id).second, ErrorKind::kConfig,
            "corpus: duplicate utterance id " + u.id);
    Require(u.frames && u.frames->rows() > 0, ErrorKind::kLength,
            "corpus: utterance " + u.id + " has no frames");
    Require(AllFinite(u.frames->values()), ErrorKind::kNumeric,
            "corpus: utterance " + u.id + " has non-finite frames");
  }
  const auto nf = corpus.SpeakerCount(Group::kFemale);
  const auto nm = corpus.SpeakerCount(Group::kMale);
  if (nf > 0 && nm > 0)
    Require(RatioLabel(nf, nm) == corpus.ratio_label, ErrorKind::kConfig,
            "corpus: ratio label " + corpus.ratio_label + " does not match " +
                std::to_string(nf) + ":" + std::to_string(nm) + " speakers");
}

// ---------------------------------------------------------------------------
// On-disk layout: <dir>/manifest.json plus <dir>/frames/<utterance id>.f64,
// each a little-endian row-major array of T x F doubles.

inline constexpr int kCorpusFormatVersion = 1;

inline void SaveCorpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "frames");
  nlohmann::json j;
  j["format_version"] = kCorpusFormatVersion;
  j["name"] = corpus.name;
  j["ratio_label"] = corpus.ratio_label;
  j["config"] = ToJson(corpus.config);
  j["speakers"] = nlohmann::json::array();
  for (const auto& s : corpus.speakers)
    j["speakers"].push_back(
        {{"id", s.id}, {"group", GroupTag(s.group)}, {"identity", s.identity}});
  j["utterances"] = nlohmann::json::array();
  for (const auto& u : corpus.utterances) {
    const std::string file = "frames/" + u.id + ".f64";
    j["utterances"].push_back({{"id", u.id},
                               {"speaker_id", u.speaker_id},
                               {"frames", u.frames->rows()},
                               {"dims", u.frames->cols()},
                               {"file", file}});
    WriteF64File(dir / file, u.frames->values());
  }
  WriteTextAtomic(dir / "manifest.json", j.dump(1) + "\n");
}

inline Corpus LoadCorpus(const std::filesystem::path& dir) {
  const nlohmann::json j = ReadJsonFile(dir / "manifest.json");
  Corpus corpus;
  try {
    Require(j.at("format_version").get<int>() == kCorpusFormatVersion,
            ErrorKind::kIo, "corpus manifest: unsupported format_version");
    corpus.name = j.at("name").get<std::string>();
    corpus.ratio_label = j.at("ratio_label").get<std::string>();
    corpus.config = SynthConfigFromJson(j.at("config"));
    std::map<std::int64_t, Group> groups;
    for (const auto& js : j.at("speakers")) {
      Speaker s;
      s.id = js.at("id").get<std::int64_t>();
      s.group = ParseGroup(js.at("group").get<std::string>());
      s.identity = js.at("identity").get<Vector>();
      groups[s.id] = s.group;
      corpus.speakers.push_back(std::move(s));
    }
    for (const auto& ju : j.at("utterances")) {
      Utterance u;
      u.id = ju.at("id").get<std::string>();
      u.speaker_id = ju.at("speaker_id").get<std::int64_t>();
      auto it = groups.find(u.speaker_id);
      Require(it != groups.end(), ErrorKind::kIo,
              "corpus manifest: utterance " + u.id + " references unknown speaker");
      u.group = it->second;
      const auto rows = ju.at("frames").get<std::size_t>();
      const auto cols = ju.at("dims").get<std::size_t>();
      auto m = std::make_shared<Matrix>(rows, cols);
      ReadF64File(dir / ju.at("file").get<std::string>(), m->values());
      u.frames = std::move(m);
      corpus.utterances.push_back(std::move(u));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("corpus manifest: ") + e.what());
  }
  ValidateCorpus(corpus);
  return corpus;
}

}  // namespace gfn
