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

// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails. All tolerances and thresholds are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "gfn/gfn.hpp"

namespace {

using namespace gfn;
namespace fs = std::filesystem;

constexpr double kEerTolerancePp = 0.05;
constexpr std::size_t kEerScoreSets = 1000;
constexpr std::size_t kSweepThresholds = 1'000'000;
constexpr double kEerMaxSeconds = 30.0;
constexpr double kBceTolerance = 1e-12;
constexpr double kGradRelTolerance = 1e-4;
constexpr std::size_t kGradInstances = 60;
constexpr double kGradMaxSeconds = 60.0;
constexpr double kUnitNormTolerance = 1e-6;
constexpr double kSuiteMaxSeconds = 600.0;
constexpr int kMajority = 4;    // of 5 seeds
constexpr int kEsMajority = 3;  // of 5 seeds

using Clock = std::chrono::steady_clock;
double Seconds(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int g_failures = 0;
void Report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  g_failures += !pass;
}

std::string Fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. EER against a dense threshold sweep. The sweep walks 10^6 evenly spaced
// thresholds, counts accepted negatives and rejected positives with two
// pointers into the sorted score lists, and interpolates the FAR/FRR crossing
// between the two grid thresholds that bracket it.

double SweepEer(std::vector<double> pos, std::vector<double> neg) {
  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  const double lo = std::min(pos.front(), neg.front());
  const double hi = std::max(pos.back(), neg.back());
  const double step = (hi - lo) / static_cast<double>(kSweepThresholds - 2);
  std::size_t ip = 0, in = 0;
  double prev_far = 1.0, prev_frr = 0.0;
  for (std::size_t i = 0; i < kSweepThresholds; ++i) {
    const double t = lo - step + step * static_cast<double>(i);
    while (ip < pos.size() && pos[ip] <= t) ++ip;
    while (in < neg.size() && neg[in] <= t) ++in;
    const double far = static_cast<double>(neg.size() - in) / static_cast<double>(neg.size());
    const double frr = static_cast<double>(ip) / static_cast<double>(pos.size());
    if (frr >= far) {
      const double d0 = prev_far - prev_frr, d1 = far - frr;
      const double a = d0 == d1 ? 0.0 : d0 / (d0 - d1);
      return 100.0 * 0.5 * ((prev_far + a * (far - prev_far)) + (prev_frr + a * (frr - prev_frr)));
    }
    prev_far = far;
    prev_frr = frr;
  }
  return 100.0 * 0.5 * (prev_far + prev_frr);
}

void CriterionEer() {
  const auto t0 = Clock::now();
  Rng rng(20260101);
  double worst = 0.0;
  std::size_t ties = 0, max_ratio = 0;
  for (std::size_t k = 0; k < kEerScoreSets; ++k) {
    // Class sizes with imbalance up to 100:1 in either direction.
    const std::size_t small = 5 + rng.Below(46);
    const std::size_t ratio = 1 + rng.Below(100);
    const bool more_neg = rng.Below(4) != 0;
    const std::size_t np = more_neg ? small : small * ratio;
    const std::size_t nn = more_neg ? small * ratio : small;
    max_ratio = std::max(max_ratio, ratio);
    // Scores quantized to 1e-4; one set in four on a coarse 0.05 grid with
    // heavy ties.
    const double quantum = rng.Below(4) == 0 ? 0.05 : 1e-4;
    const double sep = rng.Uniform(0.0, 3.0);
    auto q = [&](double x) { return std::round(x / quantum) * quantum; };
    std::vector<double> pos(np), neg(nn);
    for (double& s : pos) s = q(rng.Normal(sep, 1.0));
    for (double& s : neg) s = q(rng.Normal(0.0, 1.0));
    std::vector<ScoredTrial> scored;
    for (double s : pos) scored.push_back({s, 1, TrialCategory::kPosFF});
    for (double s : neg) scored.push_back({s, 0, TrialCategory::kNegFF});
    std::set<double> distinct(pos.begin(), pos.end());
    distinct.insert(neg.begin(), neg.end());
    ties += distinct.size() < pos.size() + neg.size();
    worst = std::max(worst, std::abs(ComputeEer(scored).eer - SweepEer(pos, neg)));
  }
  const double secs = Seconds(t0);
  Report(1, worst <= kEerTolerancePp && secs < kEerMaxSeconds,
         Fmt("max |eer - sweep| = %.2e pp over %.0f sets (%.0f with ties, imbalance up to %.0f:1)",
             worst, static_cast<double>(kEerScoreSets), static_cast<double>(ties),
             static_cast<double>(max_ratio)) +
             Fmt(", %.1f s", secs));
}

// ---------------------------------------------------------------------------
// 2. BCE term by term, DS formula, spot values.

void CriterionFormulas(const RunRecord& suite) {
  Rng rng(7);
  double worst_bce = 0.0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + rng.Below(500);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.Uniform(1e-6, 1.0 - 1e-6);
      y[i] = static_cast<int>(rng.Below(2));
    }
    // -(1/M) [ sum over P of y log S + sum over N of (1 - y) log(1 - S) ]
    double sum_p = 0.0, sum_n = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 1) sum_p += y[i] * std::log(s[i]);
      else sum_n += (1 - y[i]) * std::log(1.0 - s[i]);
    }
    const double eq = -(sum_p + sum_n) / static_cast<double>(n);
    worst_bce = std::max(worst_bce, std::abs(BceLoss(s, y) - eq) / std::max(1.0, std::abs(eq)));
  }
  bool ds_exact = true;
  for (const auto& c : suite.cells)
    if (c.ok) ds_exact &= c.report.ds == std::abs(c.report.eer_f - c.report.eer_m);
  const std::string spot_ds = FormatFixed(DisparityScore(3.52, 7.22), 2);
  const std::vector<double> half(10, 0.5);
  const std::vector<int> labels{1, 0, 1, 1, 0, 0, 0, 1, 0, 1};
  const double bce_half = BceLoss(half, labels);
  const bool pass = worst_bce <= kBceTolerance && ds_exact && spot_ds == "3.70" &&
                    std::abs(DisparityScore(3.52, 7.22) - 3.70) < 1e-12 &&
                    bce_half == std::log(2.0);
  Report(2, pass,
         Fmt("bce max rel diff %.1e; ds exact on all suite cells: ", worst_bce) +
             (ds_exact ? "yes" : "no") + "; |3.52-7.22| -> " + spot_ds +
             Fmt("; uniform bce %.17g vs ln2 %.17g", bce_half, std::log(2.0)));
}

// ---------------------------------------------------------------------------
// 3. Gradient suites with central differences.

double RelErr(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

template <typename F>
double Stencil5(F&& f, double h) {
  return (f(-2 * h) - 8 * f(-h) + 8 * f(h) - f(2 * h)) / (12 * h);
}

// Signs of every hidden pre-activation over the batch.
std::vector<bool> ReluPattern(const FusionModel& m, const std::vector<ScoreTriple>& t) {
  std::vector<bool> out;
  for (const auto& x : t) {
    const auto v = x.values();
    const MlpTrace tr = MlpForwardTrace(m.mlp, v);
    for (std::size_t l = 0; l + 1 < tr.pre.size(); ++l)
      for (double z : tr.pre[l]) out.push_back(z > 0.0);
  }
  return out;
}

void CriterionGradients() {
  const auto t0 = Clock::now();
  Rng rng(314);
  double worst_ap = 0.0, worst_fusion = 0.0;
  std::size_t checked_ap = 0, checked_fusion = 0, skipped_fusion = 0;
  // Denominator floor: gradient entries smaller than this are compared in
  // absolute terms against kGradRelTolerance * floor.
  const double floor = 1e-6;
  for (std::size_t inst = 0; inst < kGradInstances; ++inst) {
    const std::size_t n = 2 + rng.Below(31), d = 2 + rng.Below(31);
    std::vector<ApBatchItem> batch;
    for (std::size_t j = 0; j < n; ++j) {
      ApBatchItem it{static_cast<std::int64_t>(j), Vector(d), Vector(d)};
      for (double& x : it.query) x = rng.Normal();
      for (double& x : it.prototype) x = rng.Normal();
      batch.push_back(std::move(it));
    }
    const ApLossParams p{rng.Uniform(1.0, 20.0), rng.Uniform(-10.0, 5.0)};
    const auto r = ApLoss(batch, p);
    // The loss is smooth, so the fourth-order stencil with a wide step keeps
    // both truncation and cancellation error well under the floor.
    const double h = 1e-3;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < d; ++i)
        for (int which = 0; which < 2; ++which) {
          const double fd = Stencil5(
              [&](double delta) {
                auto moved = batch;
                (which ? moved[j].prototype : moved[j].query)[i] += delta;
                return ApLoss(moved, p).loss;
              },
              h);
          worst_ap = std::max(
              worst_ap, RelErr(which ? r.grad_prototype[j][i] : r.grad_query[j][i], fd, floor));
          ++checked_ap;
        }
    const double fd_w = Stencil5(
        [&](double delta) { return ApLoss(batch, {p.scale + delta, p.offset}).loss; }, h);
    const double fd_b = Stencil5(
        [&](double delta) { return ApLoss(batch, {p.scale, p.offset + delta}).loss; }, h);
    worst_ap = std::max({worst_ap, RelErr(r.grad_scale, fd_w, floor),
                         RelErr(r.grad_offset, fd_b, floor)});
    checked_ap += 2;

    FusionModel m = InitFusion(rng.NextU64());
    for (auto& b : m.mlp.biases)
      for (double& x : b) x = rng.Normal(0.0, 0.1);
    const std::size_t bs = 1 + rng.Below(64);
    std::vector<ScoreTriple> t;
    std::vector<int> y;
    for (std::size_t k = 0; k < bs; ++k) {
      t.push_back({rng.Uniform(-1, 1), rng.Uniform(-1, 1), rng.Uniform(-1, 1)});
      y.push_back(static_cast<int>(rng.Below(2)));
    }
    MlpGradient g = MlpGradient::ZerosLike(m.mlp);
    FusionBatchGradient(m, t, y, &g);
    auto params = m.mlp.Parameters();
    const auto grads = g.Blocks();
    const double hf = 1e-5;
    const auto pattern = ReluPattern(m, t);
    for (std::size_t b = 0; b < params.size(); ++b)
      for (std::size_t i = 0; i < params[b].size(); ++i) {
        const double keep = params[b][i];
        params[b][i] = keep + hf;
        const double lp = BceLoss(FuseAll(m, t), y);
        const bool kink_p = ReluPattern(m, t) != pattern;
        params[b][i] = keep - hf;
        const double lm = BceLoss(FuseAll(m, t), y);
        const bool kink_m = ReluPattern(m, t) != pattern;
        params[b][i] = keep;
        // A step that flips a ReLU leaves the differentiable region.
        if (kink_p || kink_m) {
          ++skipped_fusion;
          continue;
        }
        worst_fusion = std::max(worst_fusion, RelErr(grads[b][i], (lp - lm) / (2 * hf), floor));
        ++checked_fusion;
      }
  }
  const double secs = Seconds(t0);
  Report(3,
         worst_ap <= kGradRelTolerance && worst_fusion <= kGradRelTolerance &&
             secs < kGradMaxSeconds,
         Fmt("ap_loss max rel err %.2e (%.0f entries), fusion max rel err %.2e (%.0f entries,",
             worst_ap, static_cast<double>(checked_ap), worst_fusion,
             static_cast<double>(checked_fusion)) +
             Fmt(" %.0f skipped at ReLU kinks)", static_cast<double>(skipped_fusion)) +
             Fmt(", %.0f instances each, %.1f s", static_cast<double>(kGradInstances), secs));
}

// ---------------------------------------------------------------------------
// 4. Structural invariants over the suite run.

void CriterionStructure(const ExperimentConfig& config, const RunRecord& suite) {
  double worst_norm = 0.0;
  std::size_t embeddings = 0, trial_sets = 0;
  bool trials_ok = true, disjoint = true;
  std::string why;
  for (auto seed : config.seeds) {
    const Corpus eval = MakeEvalCorpus(config, seed);
    const TrialSet trials = MakeEvalTrials(config, eval, seed);
    // Exhaustive scan of labels, categories and duplicates.
    const auto index = eval.UtteranceIndex();
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& t : trials.trials) {
      const auto& a = eval.utterances[index.at(t.utt_a)];
      const auto& b = eval.utterances[index.at(t.utt_b)];
      const bool same = a.speaker_id == b.speaker_id;
      const bool cross = a.group != b.group;
      TrialCategory want = cross ? TrialCategory::kNegMF
                           : a.group == Group::kFemale
                               ? (same ? TrialCategory::kPosFF : TrialCategory::kNegFF)
                               : (same ? TrialCategory::kPosMM : TrialCategory::kNegMM);
      if (t.label != (same ? 1 : 0) || t.category != want || t.utt_a == t.utt_b ||
          !seen.insert(std::minmax(t.utt_a, t.utt_b)).second) {
        trials_ok = false;
        why = "unsound trial " + t.utt_a + " " + t.utt_b;
      }
    }
    const std::size_t pc = config.trials_per_category;
    std::size_t nf = 0, nm = 0;
    for (const auto& t : trials.trials) {
      const bool f = t.category == TrialCategory::kPosFF || t.category == TrialCategory::kNegFF ||
                     t.category == TrialCategory::kNegMF;
      const bool m = t.category == TrialCategory::kPosMM || t.category == TrialCategory::kNegMM ||
                     t.category == TrialCategory::kNegMF;
      nf += f;
      nm += m;
    }
    if (nf != 3 * pc || nm != 3 * pc || trials.trials.size() != 5 * pc ||
        PoolForMetric(trials, MetricPool::kFemale).size() != 3 * pc ||
        PoolForMetric(trials, MetricPool::kMale).size() != 3 * pc ||
        PoolForMetric(trials, MetricPool::kAll).size() != 5 * pc) {
      trials_ok = false;
      why = "pool cardinality";
    }
    ++trial_sets;

    for (std::size_t ri = 0; ri < config.ratios.size(); ++ri) {
      const Corpus train = MakeTrainCorpus(config, config.ratios[ri], ri, seed);
      const auto eval_ids = eval.SpeakerIds();
      for (const auto& s : train.speakers) disjoint &= !eval_ids.count(s.id);
      // Every embedding the suite emitted for this cell: crop embeddings of
      // all evaluation utterances and full-utterance exports, per encoder.
      const fs::path cell = fs::path(config.output_dir) / CellDirName(config.ratios[ri], seed);
      for (const char* name : {"base.json", "female.json", "male.json"}) {
        if (!fs::exists(cell / name)) continue;
        const EncoderModel m = EncoderFromJson(ReadJsonFile(cell / name));
        for (const auto& u : eval.utterances) {
          for (const auto& e : CropEmbeddings(m, u, config.protocol)) {
            worst_norm = std::max(worst_norm, std::abs(Norm(e) - 1.0));
            ++embeddings;
          }
          worst_norm = std::max(worst_norm, std::abs(Norm(Embed(m, *u.frames)) - 1.0));
          ++embeddings;
        }
      }
    }
  }
  for (const auto& [cell, overlap] : suite.speaker_overlap) disjoint &= overlap == 0;
  const bool pass = worst_norm <= kUnitNormTolerance && embeddings > 0 && trials_ok && disjoint;
  Report(4, pass,
         Fmt("max | |e| - 1 | = %.1e over %.0f embeddings; %.0f trial sets scanned, ", worst_norm,
             static_cast<double>(embeddings), static_cast<double>(trial_sets)) +
             (trials_ok ? "sound" : "UNSOUND (" + why + ")") + "; train/eval speakers " +
             (disjoint ? "disjoint" : "OVERLAP"));
}

// ---------------------------------------------------------------------------
// 5-8. Trend criteria from the suite.

const MetricReport& Get(const RunRecord& r, GroupRatio ratio, Variant v, std::uint64_t seed) {
  const CellResult* c = r.Find(ratio, v, seed);
  if (!c || !c->ok)
    Fail(ErrorKind::kConfig, std::string("missing cell ") + RatioName(ratio) + " " +
                                 VariantName(v) + " seed " + std::to_string(seed) +
                                 (c ? ": " + c->failure : ""));
  return c->report;
}

int CountSeeds(const RunRecord& r, const std::function<bool(std::uint64_t)>& pred) {
  int n = 0;
  for (auto s : r.config.seeds) n += pred(s);
  return n;
}

const GroupRatio k91{9, 1}, k11{1, 1}, k19{1, 9};

void CriterionImbalance(const RunRecord& r) {
  const int ds_seeds = CountSeeds(r, [&](auto s) {
    const double ds11 = Get(r, k11, Variant::kBaseline, s).ds;
    return Get(r, k91, Variant::kBaseline, s).ds > ds11 &&
           Get(r, k19, Variant::kBaseline, s).ds > ds11;
  });
  const int minority_seeds = CountSeeds(r, [&](auto s) {
    const auto& a = Get(r, k91, Variant::kBaseline, s);
    const auto& b = Get(r, k19, Variant::kBaseline, s);
    return a.eer_m > a.eer_f && b.eer_f > b.eer_m;
  });
  Report(5,
         ds_seeds >= kMajority && minority_seeds >= kMajority && r.wall_seconds < kSuiteMaxSeconds,
         Fmt("DS(9:1), DS(1:9) > DS(1:1) in %.0f/5 seeds; minority EER > majority EER at both "
             "imbalanced ratios in %.0f/5 seeds; suite %.0f s",
             ds_seeds, minority_seeds, r.wall_seconds));
}

void CriterionMitigation(const RunRecord& r) {
  std::string detail;
  bool pass = true;
  for (const auto& ratio : {k91, k19}) {
    const int ds = CountSeeds(r, [&](auto s) {
      return Get(r, ratio, Variant::kGfn, s).ds < Get(r, ratio, Variant::kBaseline, s).ds;
    });
    const int all = CountSeeds(r, [&](auto s) {
      return Get(r, ratio, Variant::kGfn, s).eer_all <
             Get(r, ratio, Variant::kBaseline, s).eer_all;
    });
    pass &= ds >= kMajority && all >= kMajority;
    detail += RatioName(ratio) + Fmt(": GFN DS lower in %.0f/5, EER[All] lower in %.0f/5; ", ds, all);
  }
  Report(6, pass, detail);
}

void CriterionClustering(const RunRecord& r) {
  int wins = 0;
  std::string detail;
  for (const auto& sc : r.silhouettes) {
    if (sc.ratio.female_parts != k11.female_parts || sc.ratio.male_parts != k11.male_parts)
      continue;
    wins += sc.gfn > sc.base;
    detail += Fmt("%.3f/%.3f ", sc.base, sc.gfn);
  }
  Report(7, wins >= kMajority,
         Fmt("1:1 ratio, SC(GFN) > SC(base) in %.0f/5 seeds; base/GFN per seed: ", wins) + detail);
}

void CriterionAblation(const RunRecord& r) {
  const int mft = CountSeeds(r, [&](auto s) {
    return Get(r, k19, Variant::kMaleFt, s).eer_f > Get(r, k19, Variant::kGfn, s).eer_f;
  });
  // Overall EER of a seed: mean EER[All] over the suite's ratios.
  auto overall = [&](Variant v, std::uint64_t s) {
    double sum = 0.0;
    for (const auto& ratio : r.config.ratios) sum += Get(r, ratio, v, s).eer_all;
    return sum / static_cast<double>(r.config.ratios.size());
  };
  const int es = CountSeeds(
      r, [&](auto s) { return overall(Variant::kEqualScore, s) >= overall(Variant::kGfn, s); });
  Report(8, mft >= kMajority && es >= kEsMajority,
         Fmt("1:9 M-FT EER[F] > GFN EER[F] in %.0f/5 seeds; ES overall EER >= GFN in %.0f/5 "
             "seeds",
             mft, es));
}

// ---------------------------------------------------------------------------
// 9. Determinism: a repeated suite reproduces its metric CSV byte for byte,
// and its cells match the same cells of the main run.

void CriterionDeterminism(const ExperimentConfig& main_config, const RunRecord& main) {
  ExperimentConfig c = main_config;
  c.ratios = {k91};
  c.seeds = {main_config.seeds.front()};
  c.write_artifacts = false;
  c.output_dir = main_config.output_dir + "-repeat-a";
  const std::string a = FormatMetricsCsv(RunSuite(c));
  c.output_dir = main_config.output_dir + "-repeat-b";
  const std::string b = FormatMetricsCsv(RunSuite(c));
  const std::string file_a = ReadTextFile(fs::path(main_config.output_dir + "-repeat-a") / "metrics.csv");
  const std::string file_b = ReadTextFile(fs::path(main_config.output_dir + "-repeat-b") / "metrics.csv");
  // The same rows inside the main run's CSV.
  const std::string full = FormatMetricsCsv(main);
  bool rows_match = true;
  for (std::size_t pos = a.find('\n') + 1; pos < a.size();) {
    const std::size_t end = a.find('\n', pos);
    rows_match &= full.find(a.substr(pos, end - pos + 1)) != std::string::npos;
    pos = end + 1;
  }
  Report(9, a == b && file_a == file_b && file_a == a && rows_match,
         std::string("repeated suite CSV ") + (a == b && file_a == file_b ? "identical" : "DIFFERS") +
             "; rows match the main run: " + (rows_match ? "yes" : "no"));
}

}  // namespace

int main() {
  try {
    CriterionEer();
    CriterionGradients();

    ExperimentConfig config;
    config.variants = {Variant::kBaseline, Variant::kGfn, Variant::kMaleFt, Variant::kEqualScore};
    config.output_dir = (fs::temp_directory_path() / "gfn-acceptance").string();
    fs::remove_all(config.output_dir);
    std::printf("running suite: %zu ratios x %zu variants x %zu seeds\n", config.ratios.size(),
                config.variants.size(), config.seeds.size());
    std::fflush(stdout);
    const RunRecord suite = RunSuite(config);
    std::fputs(FormatSummaryTable(suite).c_str(), stdout);

    CriterionFormulas(suite);
    CriterionStructure(config, suite);
    CriterionImbalance(suite);
    CriterionMitigation(suite);
    CriterionClustering(suite);
    CriterionAblation(suite);
    CriterionDeterminism(config, suite);
  } catch (const std::exception& e) {
    std::printf("acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d criteria failed\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
