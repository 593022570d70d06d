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
#include <cstdio>
#include <iterator>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfn/error.hpp"
#include "gfn/io.hpp"
#include "gfn/linalg.hpp"
#include "gfn/trials.hpp"

namespace gfn {

struct ScoredTrial {
  double score = 0.0;
  int label = 0;
  TrialCategory category = TrialCategory::kPosFF;
};

// Error rates at threshold t under the rule "accept iff score > t":
// FAR = negatives accepted / negatives, FRR = positives rejected / positives.
struct DetPoint {
  double threshold = 0.0;
  double far = 0.0;
  double frr = 0.0;
};

namespace detail {

inline void SplitByLabel(std::span<const ScoredTrial> scored, std::vector<double>* pos,
                         std::vector<double>* neg) {
  for (const auto& s : scored) {
    Require(std::isfinite(s.score), ErrorKind::kNumeric, "non-finite trial score");
    (s.label == 1 ? pos : neg)->push_back(s.score);
  }
  Require(!pos->empty() && !neg->empty(), ErrorKind::kMetricUndefined,
          "error rates need at least one positive and one negative trial");
  std::sort(pos->begin(), pos->end());
  std::sort(neg->begin(), neg->end());
}

}  // namespace detail

inline DetPoint ErrorRatesAt(std::span<const ScoredTrial> scored, double threshold) {
  std::size_t np = 0, nn = 0, rejected = 0, accepted = 0;
  for (const auto& s : scored) {
    if (s.label == 1) {
      ++np;
      rejected += !(s.score > threshold);
    } else {
      ++nn;
      accepted += s.score > threshold;
    }
  }
  Require(np > 0 && nn > 0, ErrorKind::kMetricUndefined,
          "error rates need at least one positive and one negative trial");
  return {threshold, static_cast<double>(accepted) / nn, static_cast<double>(rejected) / np};
}

// Vertices of the DET staircase: a first point at -infinity (accept all),
// then one point per distinct score in ascending order. FAR is
// non-increasing and FRR non-decreasing along the list.
inline std::vector<DetPoint> DetPoints(std::span<const ScoredTrial> scored) {
  std::vector<double> pos, neg;
  detail::SplitByLabel(scored, &pos, &neg);
  std::vector<double> thresholds;
  thresholds.reserve(pos.size() + neg.size());
  std::merge(pos.begin(), pos.end(), neg.begin(), neg.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  std::vector<DetPoint> out;
  out.reserve(thresholds.size() + 1);
  out.push_back({-std::numeric_limits<double>::infinity(), 1.0, 0.0});
  std::size_t ip = 0, in = 0;  // counts of scores <= threshold
  for (double t : thresholds) {
    while (ip < pos.size() && pos[ip] <= t) ++ip;
    while (in < neg.size() && neg[in] <= t) ++in;
    out.push_back({t, (nn - static_cast<double>(in)) / nn, static_cast<double>(ip) / np});
  }
  return out;
}

struct EerResult {
  double eer = 0.0;        // percent
  double threshold = 0.0;  // accept iff score > threshold
};

// Walks the DET vertices to the first one with FRR >= FAR and linearly
// interpolates (FAR, FRR) on the segment that crosses the diagonal; the EER is
// the common value at the crossing.
inline EerResult ComputeEer(std::span<const ScoredTrial> scored) {
  const auto det = DetPoints(scored);
  std::size_t k = 0;
  while (k < det.size() && det[k].frr < det[k].far) ++k;
  // The last vertex always has FAR = 0, so k is in range.
  const DetPoint& hi = det[k];
  if (hi.frr == hi.far || k == 0) return {100.0 * hi.far, hi.threshold};
  const DetPoint& lo = det[k - 1];
  const double d_lo = lo.far - lo.frr;  // > 0
  const double d_hi = hi.far - hi.frr;  // < 0
  const double alpha = d_lo / (d_lo - d_hi);
  const double far = lo.far + alpha * (hi.far - lo.far);
  const double frr = lo.frr + alpha * (hi.frr - lo.frr);
  const double threshold = std::isfinite(lo.threshold)
                               ? lo.threshold + alpha * (hi.threshold - lo.threshold)
                               : hi.threshold;
  return {100.0 * 0.5 * (far + frr), threshold};
}

inline double DisparityScore(double eer_f, double eer_m) { return std::abs(eer_f - eer_m); }

struct MetricReport {
  double eer_f = 0.0;
  double eer_m = 0.0;
  double eer_all = 0.0;
  double ds = 0.0;
  double threshold_f = 0.0;
  double threshold_m = 0.0;
  double threshold_all = 0.0;
  std::size_t count_f = 0;
  std::size_t count_m = 0;
  std::size_t count_all = 0;
};

inline std::vector<ScoredTrial> Pool(std::span<const ScoredTrial> scored, MetricPool pool) {
  std::vector<ScoredTrial> out;
  for (const auto& s : scored)
    if (InPool(s.category, pool)) out.push_back(s);
  return out;
}

// Group-wise EERs over the F, M and All pools and DS = |EER[F] - EER[M]|.
inline MetricReport GroupMetrics(std::span<const ScoredTrial> scored) {
  std::array<std::size_t, 5> counts{};
  for (const auto& s : scored) ++counts[static_cast<std::size_t>(s.category)];
  for (auto c : kTrialCategories)
    Require(counts[static_cast<std::size_t>(c)] > 0, ErrorKind::kMetricUndefined,
            std::string("group_metrics: no scored trials in category ") + CategoryName(c));
  MetricReport r;
  const auto pf = Pool(scored, MetricPool::kFemale);
  const auto pm = Pool(scored, MetricPool::kMale);
  const auto ef = ComputeEer(pf);
  const auto em = ComputeEer(pm);
  const auto ea = ComputeEer(scored);
  r.eer_f = ef.eer;
  r.eer_m = em.eer;
  r.eer_all = ea.eer;
  r.ds = DisparityScore(r.eer_f, r.eer_m);
  r.threshold_f = ef.threshold;
  r.threshold_m = em.threshold;
  r.threshold_all = ea.threshold;
  r.count_f = pf.size();
  r.count_m = pm.size();
  r.count_all = scored.size();
  return r;
}

inline nlohmann::json ToJson(const MetricReport& r) {
  return {{"eer_f", r.eer_f},
          {"eer_m", r.eer_m},
          {"eer_all", r.eer_all},
          {"ds", r.ds},
          {"threshold_f", r.threshold_f},
          {"threshold_m", r.threshold_m},
          {"threshold_all", r.threshold_all},
          {"count_f", r.count_f},
          {"count_m", r.count_m},
          {"count_all", r.count_all}};
}

inline MetricReport MetricReportFromJson(const nlohmann::json& j) {
  MetricReport r;
  try {
    r.eer_f = j.at("eer_f");
    r.eer_m = j.at("eer_m");
    r.eer_all = j.at("eer_all");
    r.ds = j.at("ds");
    r.threshold_f = j.at("threshold_f");
    r.threshold_m = j.at("threshold_m");
    r.threshold_all = j.at("threshold_all");
    r.count_f = j.at("count_f");
    r.count_m = j.at("count_m");
    r.count_all = j.at("count_all");
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kIo, std::string("metric report: ") + e.what());
  }
  return r;
}

// EERs in percent with two decimals.
inline std::string FormatReportTable(const MetricReport& r) {
  std::string out = "metric    EER(%)  threshold     trials\n";
  auto row = [&](const char* name, double eer, double thr, std::size_t n) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-8s %7s %10.6f %10zu\n", name, FormatFixed(eer, 2).c_str(),
                  thr, n);
    out += buf;
  };
  row("EER[F]", r.eer_f, r.threshold_f, r.count_f);
  row("EER[M]", r.eer_m, r.threshold_m, r.count_m);
  row("EER[All]", r.eer_all, r.threshold_all, r.count_all);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-8s %7s\n", "DS", FormatFixed(r.ds, 2).c_str());
  out += buf;
  return out;
}

inline std::string FormatDetCsv(std::span<const DetPoint> det) {
  std::string out = "threshold,far,frr\n";
  char buf[128];
  for (const auto& p : det) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.far, p.frr);
    out += buf;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Silhouette coefficient with Euclidean distance.

struct LabeledPoint {
  Vector x;
  std::int64_t label = 0;
};

struct SilhouetteResult {
  double mean = 0.0;
  std::size_t singleton_points = 0;  // points scored 0 because their cluster has one member
};

// s(i) = (b(i) - a(i)) / max(a(i), b(i)); a(i) is the mean distance to the
// other members of i's cluster and b(i) the smallest mean distance to another
// cluster. Points in singleton clusters get s(i) = 0.
inline SilhouetteResult Silhouette(std::span<const LabeledPoint> points) {
  std::map<std::int64_t, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < points.size(); ++i) clusters[points[i].label].push_back(i);
  Require(clusters.size() >= 2, ErrorKind::kMetricUndefined,
          "silhouette: need at least two clusters");
  const std::size_t n = points.size();
  Matrix dist(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      Require(points[i].x.size() == points[j].x.size(), ErrorKind::kInputShape,
              "silhouette: points differ in dimension");
      double s = 0.0;
      for (std::size_t k = 0; k < points[i].x.size(); ++k) {
        const double d = points[i].x[k] - points[j].x[k];
        s += d * d;
      }
      dist(i, j) = dist(j, i) = std::sqrt(s);
    }
  SilhouetteResult r;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = clusters[points[i].label];
    if (own.size() == 1) {
      ++r.singleton_points;
      continue;
    }
    double a = 0.0;
    for (auto j : own) a += dist(i, j);
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, members] : clusters) {
      if (label == points[i].label) continue;
      double m = 0.0;
      for (auto j : members) m += dist(i, j);
      b = std::min(b, m / static_cast<double>(members.size()));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  r.mean = total / static_cast<double>(n);
  return r;
}

}  // namespace gfn
