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
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "gfn/error.hpp"
#include "gfn/io.hpp"
#include "gfn/rng.hpp"
#include "gfn/speaker_sim.hpp"

namespace gfn {

// Gender composition of a trial. There is no positive M-F category: a
// positive trial shares one speaker and therefore one group.
enum class TrialCategory { kPosFF, kNegFF, kNegMF, kPosMM, kNegMM };

inline constexpr std::array<TrialCategory, 5> kTrialCategories = {
    TrialCategory::kPosFF, TrialCategory::kNegFF, TrialCategory::kNegMF,
    TrialCategory::kPosMM, TrialCategory::kNegMM};

inline const char* CategoryName(TrialCategory c) {
  switch (c) {
    case TrialCategory::kPosFF: return "PosFF";
    case TrialCategory::kNegFF: return "NegFF";
    case TrialCategory::kNegMF: return "NegMF";
    case TrialCategory::kPosMM: return "PosMM";
    case TrialCategory::kNegMM: return "NegMM";
  }
  return "?";
}

inline TrialCategory ParseCategory(const std::string& s) {
  for (auto c : kTrialCategories)
    if (s == CategoryName(c)) return c;
  Fail(ErrorKind::kIo, "unknown trial category '" + s + "'");
}

inline int CategoryLabel(TrialCategory c) {
  return c == TrialCategory::kPosFF || c == TrialCategory::kPosMM ? 1 : 0;
}

// Expected category for a pair; `same_speaker` decides positive vs negative.
inline TrialCategory CategoryFor(bool same_speaker, Group a, Group b) {
  if (a != b) return TrialCategory::kNegMF;
  if (a == Group::kFemale)
    return same_speaker ? TrialCategory::kPosFF : TrialCategory::kNegFF;
  return same_speaker ? TrialCategory::kPosMM : TrialCategory::kNegMM;
}

struct Trial {
  std::string utt_a;
  std::string utt_b;
  int label = 0;
  TrialCategory category = TrialCategory::kPosFF;

  bool operator==(const Trial&) const = default;
};

struct TrialSet {
  std::string corpus_name;
  std::size_t per_category = 0;
  std::vector<Trial> trials;

  std::array<std::size_t, 5> Counts() const {
    std::array<std::size_t, 5> n{};
    for (const auto& t : trials) ++n[static_cast<std::size_t>(t.category)];
    return n;
  }
};

enum class MetricPool { kFemale, kMale, kAll };

inline const char* PoolName(MetricPool p) {
  switch (p) {
    case MetricPool::kFemale: return "F";
    case MetricPool::kMale: return "M";
    case MetricPool::kAll: return "All";
  }
  return "?";
}

// F pool: trials whose true speakers are female, plus the mixed negatives;
// M pool likewise. NegMF is shared by both.
inline bool InPool(TrialCategory c, MetricPool pool) {
  switch (pool) {
    case MetricPool::kAll: return true;
    case MetricPool::kFemale:
      return c == TrialCategory::kPosFF || c == TrialCategory::kNegFF ||
             c == TrialCategory::kNegMF;
    case MetricPool::kMale:
      return c == TrialCategory::kPosMM || c == TrialCategory::kNegMM ||
             c == TrialCategory::kNegMF;
  }
  return false;
}

inline std::vector<Trial> PoolForMetric(const TrialSet& set, MetricPool pool) {
  std::vector<Trial> out;
  for (const auto& t : set.trials)
    if (InPool(t.category, pool)) out.push_back(t);
  return out;
}

namespace detail {

using PairKey = std::uint64_t;

inline PairKey MakePairKey(std::size_t a, std::size_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

// Draws `count` distinct unordered pairs. `draw` must return uniformly
// distributed eligible pairs; `enumerate` lists all of them and is used
// instead of rejection when the request is a large fraction of capacity.
template <typename Draw, typename Enumerate>
std::vector<std::pair<std::size_t, std::size_t>> SampleDistinctPairs(
    std::size_t count, std::uint64_t capacity, Rng& rng, Draw draw,
    Enumerate enumerate, const std::string& what) {
  Require(count <= capacity, ErrorKind::kCapacity,
          what + ": requested " + std::to_string(count) + " distinct pairs but only " +
              std::to_string(capacity) + " exist");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count);
  if (count * 2 > capacity) {
    auto all = enumerate();
    for (std::size_t i = 0; i < count; ++i) {
      const auto j = i + rng.Below(all.size() - i);
      std::swap(all[i], all[j]);
      out.push_back(all[i]);
    }
    return out;
  }
  std::unordered_set<PairKey> seen;
  while (out.size() < count) {
    auto p = draw();
    if (seen.insert(MakePairKey(p.first, p.second)).second) out.push_back(p);
  }
  return out;
}

// Per-group utterance indices, bucketed by speaker.
struct GroupIndex {
  std::vector<std::size_t> utterances;
  std::vector<std::vector<std::size_t>> by_speaker;
  std::vector<std::int64_t> speaker_of;  // parallel to utterances
};

inline GroupIndex IndexGroup(const Corpus& corpus, Group g) {
  GroupIndex gi;
  for (const auto& [id, utts] : corpus.UtterancesBySpeaker()) {
    if (utts.empty() || corpus.utterances[utts.front()].group != g) continue;
    gi.by_speaker.push_back(utts);
    for (auto u : utts) {
      gi.utterances.push_back(u);
      gi.speaker_of.push_back(id);
    }
  }
  return gi;
}

inline std::uint64_t Choose2(std::uint64_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

inline std::vector<std::pair<std::size_t, std::size_t>> SamplePositives(
    const GroupIndex& gi, std::size_t count, Rng& rng, const std::string& what) {
  std::vector<std::uint64_t> cumulative;
  std::uint64_t cap = 0;
  for (const auto& s : gi.by_speaker) {
    cap += Choose2(s.size());
    cumulative.push_back(cap);
  }
  auto draw = [&]() {
    const auto r = rng.Below(cap);
    const auto k = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin());
    const auto& utts = gi.by_speaker[k];
    const auto i = rng.Below(utts.size());
    auto j = rng.Below(utts.size() - 1);
    if (j >= i) ++j;
    return std::make_pair(utts[i], utts[j]);
  };
  auto enumerate = [&]() {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (const auto& utts : gi.by_speaker)
      for (std::size_t i = 0; i < utts.size(); ++i)
        for (std::size_t j = i + 1; j < utts.size(); ++j)
          all.emplace_back(utts[i], utts[j]);
    return all;
  };
  return SampleDistinctPairs(count, cap, rng, draw, enumerate, what);
}

inline std::vector<std::pair<std::size_t, std::size_t>> SampleSameGroupNegatives(
    const GroupIndex& gi, std::size_t count, Rng& rng, const std::string& what) {
  std::uint64_t within = 0;
  for (const auto& s : gi.by_speaker) within += Choose2(s.size());
  const std::uint64_t cap =
      gi.by_speaker.size() < 2 ? 0 : Choose2(gi.utterances.size()) - within;
  auto draw = [&]() {
    for (;;) {
      const auto i = rng.Below(gi.utterances.size());
      const auto j = rng.Below(gi.utterances.size());
      if (gi.speaker_of[i] != gi.speaker_of[j])
        return std::make_pair(gi.utterances[i], gi.utterances[j]);
    }
  };
  auto enumerate = [&]() {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (std::size_t i = 0; i < gi.utterances.size(); ++i)
      for (std::size_t j = i + 1; j < gi.utterances.size(); ++j)
        if (gi.speaker_of[i] != gi.speaker_of[j])
          all.emplace_back(gi.utterances[i], gi.utterances[j]);
    return all;
  };
  return SampleDistinctPairs(count, cap, rng, draw, enumerate, what);
}

inline std::vector<std::pair<std::size_t, std::size_t>> SampleCrossGroupNegatives(
    const GroupIndex& a, const GroupIndex& b, std::size_t count, Rng& rng,
    const std::string& what) {
  const std::uint64_t cap =
      static_cast<std::uint64_t>(a.utterances.size()) * b.utterances.size();
  auto draw = [&]() {
    return std::make_pair(a.utterances[rng.Below(a.utterances.size())],
                          b.utterances[rng.Below(b.utterances.size())]);
  };
  auto enumerate = [&]() {
    std::vector<std::pair<std::size_t, std::size_t>> all;
    for (auto i : a.utterances)
      for (auto j : b.utterances) all.emplace_back(i, j);
    return all;
  };
  return SampleDistinctPairs(count, cap, rng, draw, enumerate, what);
}

}  // namespace detail

// Exactly per_category trials in each of the five categories, sampled
// uniformly without replacement from the eligible unordered pairs. An
// utterance may appear in several trials.
inline TrialSet BuildTrialSet(const Corpus& corpus, std::size_t per_category,
                              std::uint64_t seed) {
  const auto fem = detail::IndexGroup(corpus, Group::kFemale);
  const auto mal = detail::IndexGroup(corpus, Group::kMale);
  Require(fem.by_speaker.size() >= 2 && mal.by_speaker.size() >= 2,
          ErrorKind::kCapacity,
          "build_trial_set: need at least two speakers per group");
  Rng rng(seed);
  TrialSet set;
  set.corpus_name = corpus.name;
  set.per_category = per_category;
  set.trials.reserve(5 * per_category);
  auto emit = [&](TrialCategory c, const auto& pairs) {
    for (const auto& [a, b] : pairs)
      set.trials.push_back({corpus.utterances[a].id, corpus.utterances[b].id,
                            CategoryLabel(c), c});
  };
  emit(TrialCategory::kPosFF,
       detail::SamplePositives(fem, per_category, rng, "PosFF"));
  emit(TrialCategory::kNegFF,
       detail::SampleSameGroupNegatives(fem, per_category, rng, "NegFF"));
  emit(TrialCategory::kNegMF,
       detail::SampleCrossGroupNegatives(fem, mal, per_category, rng, "NegMF"));
  emit(TrialCategory::kPosMM,
       detail::SamplePositives(mal, per_category, rng, "PosMM"));
  emit(TrialCategory::kNegMM,
       detail::SampleSameGroupNegatives(mal, per_category, rng, "NegMM"));
  return set;
}

// Throws unless every trial's label and category agree with the speakers and
// groups of its two utterances.
inline void CheckTrialSoundness(const TrialSet& set, const Corpus& corpus) {
  const auto index = corpus.UtteranceIndex();
  for (const auto& t : set.trials) {
    auto ia = index.find(t.utt_a);
    auto ib = index.find(t.utt_b);
    Require(ia != index.end() && ib != index.end(), ErrorKind::kConfig,
            "trial references unknown utterance " + t.utt_a + " / " + t.utt_b);
    const auto& a = corpus.utterances[ia->second];
    const auto& b = corpus.utterances[ib->second];
    const bool same = a.speaker_id == b.speaker_id;
    Require(t.label == (same ? 1 : 0), ErrorKind::kConfig,
            "trial " + t.utt_a + " " + t.utt_b + " has an inconsistent label");
    Require(CategoryFor(same, a.group, b.group) == t.category, ErrorKind::kConfig,
            "trial " + t.utt_a + " " + t.utt_b + " has an inconsistent category");
    Require(t.utt_a != t.utt_b, ErrorKind::kConfig, "trial pairs an utterance with itself");
  }
}

// Speaker ids present in both corpora; empty means disjoint.
inline std::set<std::int64_t> SharedSpeakers(const Corpus& a, const Corpus& b) {
  const auto ia = a.SpeakerIds();
  std::set<std::int64_t> out;
  for (const auto& s : b.speakers)
    if (ia.count(s.id)) out.insert(s.id);
  return out;
}

// ---------------------------------------------------------------------------
// Trial list file: one trial per line,
//   <label> <utt_a> <utt_b> <category>
// label is 1 (same speaker) or 0, category one of PosFF NegFF NegMF PosMM
// NegMM, fields separated by single spaces. Blank lines are ignored.

inline std::string FormatTrialList(const TrialSet& set) {
  std::string out;
  for (const auto& t : set.trials) {
    out += std::to_string(t.label);
    out += ' ';
    out += t.utt_a;
    out += ' ';
    out += t.utt_b;
    out += ' ';
    out += CategoryName(t.category);
    out += '\n';
  }
  return out;
}

inline void WriteTrialList(const TrialSet& set, const std::filesystem::path& path) {
  WriteTextAtomic(path, FormatTrialList(set));
}

inline TrialSet ParseTrialList(const std::string& text, const std::string& corpus_name = "") {
  TrialSet set;
  set.corpus_name = corpus_name;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Trial t;
    std::string label, cat, extra;
    if (!(ls >> label >> t.utt_a >> t.utt_b >> cat) || (ls >> extra) ||
        (label != "0" && label != "1"))
      Fail(ErrorKind::kIo, "trial list line " + std::to_string(lineno) + " is malformed");
    t.label = label == "1";
    t.category = ParseCategory(cat);
    Require(CategoryLabel(t.category) == t.label, ErrorKind::kIo,
            "trial list line " + std::to_string(lineno) + ": label contradicts category");
    set.trials.push_back(std::move(t));
  }
  const auto counts = set.Counts();
  if (std::all_of(counts.begin(), counts.end(), [&](auto n) { return n == counts[0]; }))
    set.per_category = counts[0];
  return set;
}

inline TrialSet ReadTrialList(const std::filesystem::path& path) {
  return ParseTrialList(ReadTextFile(path));
}

}  // namespace gfn
