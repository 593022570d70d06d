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

// Command-line front end: corpus synthesis, trial lists, encoder and fusion
// training, evaluation, ablations and the full experiment suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "gfn/gfn.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<std::size_t> workers;
};

gfn::ExperimentConfig LoadConfig(const GlobalOptions& g) {
  gfn::ExperimentConfig c;
  if (!g.config_path.empty()) c = gfn::ExperimentConfigFromJson(gfn::ReadJsonFile(g.config_path));
  if (!g.out_dir.empty()) c.output_dir = g.out_dir;
  if (g.workers) c.workers = *g.workers;
  return c;
}

fs::path OutDir(const gfn::ExperimentConfig& c) {
  fs::create_directories(c.output_dir);
  return c.output_dir;
}

gfn::EncoderModel LoadEncoder(const std::string& path) {
  return gfn::EncoderFromJson(gfn::ReadJsonFile(path));
}

void Print(const std::string& s) { std::fputs(s.c_str(), stdout); }

void PrintReport(const gfn::MetricReport& r, const fs::path& dir,
                 const std::vector<gfn::ScoreRecord>& records) {
  gfn::WriteTextAtomic(dir / "scores.txt", gfn::FormatScoreFile(records));
  gfn::WriteJsonFile(dir / "report.json", gfn::ToJson(r));
  const std::string table = gfn::FormatReportTable(r);
  gfn::WriteTextAtomic(dir / "report.txt", table);
  const auto scored = gfn::ToScored(records);
  gfn::WriteTextAtomic(dir / "det.csv", gfn::FormatDetCsv(gfn::DetPoints(scored)));
  Print(table);
}

// Scores trials of an eval corpus with explicitly loaded models.
std::vector<gfn::ScoreRecord> ScoreWith(
    const gfn::Corpus& eval, const gfn::TrialSet& trials, const gfn::CropProtocol& protocol,
    const gfn::EncoderModel* base, const gfn::EncoderModel* female,
    const gfn::EncoderModel* male, const gfn::FusionModel* fusion, bool equal_weight) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::optional<gfn::CentroidTable> tb, tf, tm;
  if (base) tb = gfn::ComputeCentroids(*base, eval, protocol);
  if (female) tf = gfn::ComputeCentroids(*female, eval, protocol);
  if (male) tm = gfn::ComputeCentroids(*male, eval, protocol);
  const bool three = tb && tf && tm;
  gfn::Require(three || !(fusion || equal_weight), gfn::ErrorKind::kConfig,
               "fusion needs --base, --female and --male");
  std::vector<gfn::ScoreRecord> out;
  for (const auto& t : trials.trials) {
    gfn::ScoreRecord r{t.utt_a, t.utt_b, {nan, nan, nan}, 0.0, t.label, t.category};
    if (tb) r.triple.base = gfn::CentroidScore(*tb, t.utt_a, t.utt_b);
    if (tf) r.triple.female = gfn::CentroidScore(*tf, t.utt_a, t.utt_b);
    if (tm) r.triple.male = gfn::CentroidScore(*tm, t.utt_a, t.utt_b);
    if (fusion) r.fused = gfn::Fuse(*fusion, r.triple);
    else if (equal_weight) r.fused = gfn::EqualWeightFuse(r.triple);
    else if (tb) r.fused = r.triple.base;
    else if (tf) r.fused = r.triple.female;
    else r.fused = r.triple.male;
    out.push_back(std::move(r));
  }
  return out;
}

int Run(int argc, char** argv) {
  CLI::App app{"Group-adapted fusion network toolkit for fair speaker verification"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--workers", g.workers, "Parallel workers for the suite");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::string ratio;
  std::size_t total = 0, n_female = 0, n_male = 0;
  std::int64_t first_id = 0;
  synth->add_option("--ratio", ratio, "F:M ratio, used with --total");
  synth->add_option("--total", total, "Total speakers for --ratio");
  synth->add_option("--female", n_female, "Female speakers");
  synth->add_option("--male", n_male, "Male speakers");
  synth->add_option("--first-speaker-id", first_id, "Id of the first speaker");

  // trials
  auto* trials_cmd = app.add_subcommand("trials", "Build a controlled trial list");
  std::string corpus_dir;
  std::optional<std::size_t> per_category;
  trials_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  trials_cmd->add_option("--per-category", per_category, "Trials per category");

  // train-base
  auto* train_base = app.add_subcommand("train-base", "Train a base encoder");
  train_base->add_option("--corpus", corpus_dir, "Training corpus directory")->required();

  // adapt
  auto* adapt = app.add_subcommand("adapt", "Fine-tune a group-adapted encoder");
  std::string base_path, female_path, male_path, fusion_path, group_name;
  adapt->add_option("--base", base_path, "Base encoder checkpoint")->required();
  adapt->add_option("--corpus", corpus_dir, "Training corpus directory")->required();
  adapt->add_option("--group", group_name, "F or M")->required();

  // train-fusion
  auto* train_fusion = app.add_subcommand("train-fusion", "Train the score fusion model");
  train_fusion->add_option("--base", base_path, "Base encoder checkpoint")->required();
  train_fusion->add_option("--female", female_path, "Female-adapted encoder checkpoint")->required();
  train_fusion->add_option("--male", male_path, "Male-adapted encoder checkpoint")->required();
  train_fusion->add_option("--corpus", corpus_dir, "Training corpus directory")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score a trial list and report EERs");
  std::string trials_path;
  bool equal_weight = false;
  evaluate->add_option("--corpus", corpus_dir, "Evaluation corpus directory")->required();
  evaluate->add_option("--trials", trials_path, "Trial list")->required();
  evaluate->add_option("--base", base_path, "Base encoder checkpoint");
  evaluate->add_option("--female", female_path, "Female-adapted encoder checkpoint");
  evaluate->add_option("--male", male_path, "Male-adapted encoder checkpoint");
  evaluate->add_option("--fusion", fusion_path, "Fusion model checkpoint");
  evaluate->add_flag("--equal-weight", equal_weight, "Equal-weight fusion of the three scores");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Evaluate an ablation variant");
  std::string variant_name, train_corpus_dir;
  ablate->add_option("--variant", variant_name, "F-FT, M-FT, ES or GBWL")->required();
  ablate->add_option("--corpus", corpus_dir, "Evaluation corpus directory")->required();
  ablate->add_option("--trials", trials_path, "Trial list")->required();
  ablate->add_option("--base", base_path, "Base encoder checkpoint");
  ablate->add_option("--female", female_path, "Female-adapted encoder checkpoint");
  ablate->add_option("--male", male_path, "Male-adapted encoder checkpoint");
  ablate->add_option("--train-corpus", train_corpus_dir, "Training corpus (GBWL)");

  // suite
  auto* suite = app.add_subcommand("suite", "Run the ratio x variant x seed grid");

  // export-embeddings
  auto* exp = app.add_subcommand("export-embeddings", "Dump utterance embeddings");
  std::size_t n_speakers = 8, n_utts = 10;
  exp->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  exp->add_option("--base", base_path, "Base encoder checkpoint")->required();
  exp->add_option("--female", female_path, "Female-adapted encoder checkpoint");
  exp->add_option("--male", male_path, "Male-adapted encoder checkpoint");
  exp->add_option("--speakers", n_speakers, "Speakers to sample");
  exp->add_option("--utterances", n_utts, "Utterances per speaker");

  // report
  auto* report = app.add_subcommand("report", "Summarize a suite run record");
  std::string record_path;
  report->add_option("--record", record_path, "run_record.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  gfn::ExperimentConfig config = LoadConfig(g);

  if (*synth) {
    gfn::SynthConfig sc = config.synth;
    if (g.seed) sc.seed = *g.seed;
    if (!ratio.empty()) {
      gfn::Require(total > 0, gfn::ErrorKind::kConfig, "--ratio needs --total");
      std::tie(n_female, n_male) = gfn::SplitSpeakers(total, gfn::ParseRatio(ratio));
    }
    gfn::CorpusOptions opt;
    opt.name = "synth-" + gfn::RatioLabel(n_female, n_male);
    opt.first_speaker_id = first_id;
    const auto corpus = gfn::GenerateCorpus(sc, n_female, n_male, opt);
    gfn::SaveCorpus(corpus, OutDir(config));
    std::printf("wrote %zu speakers (%s), %zu utterances to %s\n", corpus.speakers.size(),
                corpus.ratio_label.c_str(), corpus.utterances.size(), config.output_dir.c_str());
  } else if (*trials_cmd) {
    const auto corpus = gfn::LoadCorpus(corpus_dir);
    const auto set = gfn::BuildTrialSet(corpus, per_category.value_or(config.trials_per_category),
                                        g.seed.value_or(1));
    gfn::CheckTrialSoundness(set, corpus);
    const auto path = OutDir(config) / "trials.txt";
    gfn::WriteTrialList(set, path);
    std::printf("wrote %zu trials to %s\n", set.trials.size(), path.string().c_str());
  } else if (*train_base) {
    auto tc = config.encoder;
    if (g.seed) tc.seed = *g.seed;
    const auto model = gfn::TrainBase(gfn::LoadCorpus(corpus_dir), tc);
    gfn::WriteJsonFile(OutDir(config) / "base.json", gfn::EncoderToJson(model));
    std::printf("base encoder: final epoch loss %.6f\n",
                model.loss_history.empty() ? 0.0 : model.loss_history.back());
  } else if (*adapt) {
    auto tc = config.encoder;
    if (g.seed) tc.seed = *g.seed;
    const gfn::Group group = gfn::ParseGroup(group_name);
    const auto corpus = gfn::LoadCorpus(corpus_dir);
    const auto model = gfn::Adapt(LoadEncoder(base_path), gfn::SplitByGroup(corpus, group), tc);
    const auto path =
        OutDir(config) / (group == gfn::Group::kFemale ? "female.json" : "male.json");
    gfn::WriteJsonFile(path, gfn::EncoderToJson(model));
    std::printf("wrote %s\n", path.string().c_str());
  } else if (*train_fusion) {
    auto fc = config.fusion;
    if (g.seed) fc.seed = *g.seed;
    const auto model =
        gfn::TrainFusion(LoadEncoder(base_path), LoadEncoder(female_path),
                         LoadEncoder(male_path), gfn::LoadCorpus(corpus_dir), fc, config.protocol);
    gfn::WriteJsonFile(OutDir(config) / "fusion.json", gfn::FusionToJson(model));
    std::printf("fusion: final epoch loss %.6f\n",
                model.loss_history.empty() ? 0.0 : model.loss_history.back());
  } else if (*evaluate) {
    const auto eval = gfn::LoadCorpus(corpus_dir);
    const auto set = gfn::ReadTrialList(trials_path);
    std::optional<gfn::EncoderModel> b, f, m;
    std::optional<gfn::FusionModel> fu;
    if (!base_path.empty()) b = LoadEncoder(base_path);
    if (!female_path.empty()) f = LoadEncoder(female_path);
    if (!male_path.empty()) m = LoadEncoder(male_path);
    if (!fusion_path.empty()) fu = gfn::FusionFromJson(gfn::ReadJsonFile(fusion_path));
    gfn::Require(b || f || m, gfn::ErrorKind::kConfig, "evaluate needs at least one encoder");
    const auto records = ScoreWith(eval, set, config.protocol, b ? &*b : nullptr,
                                   f ? &*f : nullptr, m ? &*m : nullptr, fu ? &*fu : nullptr,
                                   equal_weight);
    PrintReport(gfn::GroupMetrics(gfn::ToScored(records)), OutDir(config), records);
  } else if (*ablate) {
    const gfn::Variant v = gfn::ParseVariant(variant_name);
    const auto eval = gfn::LoadCorpus(corpus_dir);
    const auto set = gfn::ReadTrialList(trials_path);
    std::vector<gfn::ScoreRecord> records;
    if (v == gfn::Variant::kFemaleFt) {
      const auto f = LoadEncoder(female_path);
      records = ScoreWith(eval, set, config.protocol, nullptr, &f, nullptr, nullptr, false);
    } else if (v == gfn::Variant::kMaleFt) {
      const auto m = LoadEncoder(male_path);
      records = ScoreWith(eval, set, config.protocol, nullptr, nullptr, &m, nullptr, false);
    } else if (v == gfn::Variant::kEqualScore) {
      const auto b = LoadEncoder(base_path), f = LoadEncoder(female_path),
                 m = LoadEncoder(male_path);
      records = ScoreWith(eval, set, config.protocol, &b, &f, &m, nullptr, true);
    } else if (v == gfn::Variant::kGbwl) {
      gfn::Require(!train_corpus_dir.empty(), gfn::ErrorKind::kConfig,
                   "GBWL needs --train-corpus");
      auto tc = config.encoder;
      if (g.seed) tc.seed = *g.seed;
      const auto tuned = gfn::FineTuneGenderBatched(LoadEncoder(base_path),
                                                    gfn::LoadCorpus(train_corpus_dir), tc);
      gfn::WriteJsonFile(OutDir(config) / "gbwl.json", gfn::EncoderToJson(tuned));
      records = ScoreWith(eval, set, config.protocol, &tuned, nullptr, nullptr, nullptr, false);
    } else {
      gfn::Fail(gfn::ErrorKind::kConfig, variant_name + " is not an ablation variant");
    }
    PrintReport(gfn::GroupMetrics(gfn::ToScored(records)), OutDir(config), records);
  } else if (*suite) {
    if (g.seed) config.seeds = {*g.seed};
    const auto record = gfn::RunSuite(config);
    Print(gfn::FormatSummaryTable(record));
    std::size_t failed = 0;
    for (const auto& c : record.cells) failed += !c.ok;
    std::printf("%zu cells, %zu failed, %.1f s; outputs in %s\n", record.cells.size(), failed,
                record.wall_seconds, config.output_dir.c_str());
  } else if (*exp) {
    const auto corpus = gfn::LoadCorpus(corpus_dir);
    std::vector<gfn::EncoderModel> models{LoadEncoder(base_path)};
    if (!female_path.empty()) models.push_back(LoadEncoder(female_path));
    if (!male_path.empty()) models.push_back(LoadEncoder(male_path));
    std::vector<const gfn::EncoderModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(&m);
    const auto rows =
        gfn::ExportEmbeddings(ptrs, corpus, n_speakers, n_utts, g.seed.value_or(1));
    const auto path = OutDir(config) / "embeddings.tsv";
    gfn::WriteTextAtomic(path, gfn::FormatEmbeddingDump(rows));
    const auto sc = gfn::Silhouette(gfn::ToLabeledPoints(rows));
    std::printf("wrote %zu rows to %s; silhouette %.4f\n", rows.size(), path.string().c_str(),
                sc.mean);
  } else if (*report) {
    const auto record = gfn::RunRecordFromJson(gfn::ReadJsonFile(record_path));
    Print(gfn::FormatSummaryTable(record));
    gfn::WriteCharts(record, fs::path(record_path).parent_path());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Run(argc, argv);
  } catch (const gfn::Error& e) {
    nlohmann::json j = {{"error", std::string(gfn::ErrorKindName(e.kind()))},
                        {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json j = {{"error", "internal"}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
    return 1;
  }
}
