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
#include <cstdio>
#include <string>
#include <vector>

namespace gfn {

struct SvgSeries {
  std::string name;
  std::vector<double> values;  // one per x category; NaN leaves a gap
};

struct SvgPanel {
  std::string title;
  std::vector<std::string> x_labels;
  std::vector<SvgSeries> series;
};

namespace detail {

inline const char* SeriesColor(std::size_t i) {
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                  "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  return kColors[i % 8];
}

inline std::string Num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

// Draws one panel with its top-left corner at (ox, oy).
inline std::string PanelBody(const SvgPanel& p, double ox, double oy, double w, double h) {
  const double left = 50, right = 10, top = 28, bottom = 36;
  const double pw = w - left - right, ph = h - top - bottom;
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& s : p.series)
    for (double v : s.values)
      if (std::isfinite(v)) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
  if (!std::isfinite(lo)) lo = 0, hi = 1;
  if (hi - lo < 1e-9) hi = lo + 1.0;
  const double pad = 0.08 * (hi - lo);
  lo = std::max(0.0, lo - pad);
  hi += pad;
  const std::size_t n = p.x_labels.size();
  auto xpos = [&](std::size_t i) {
    return ox + left + (n <= 1 ? pw / 2 : pw * static_cast<double>(i) / (n - 1));
  };
  auto ypos = [&](double v) { return oy + top + ph * (1.0 - (v - lo) / (hi - lo)); };

  std::string s;
  s += "<text x=\"" + Num(ox + w / 2) + "\" y=\"" + Num(oy + 18) +
       "\" text-anchor=\"middle\" font-size=\"14\">" + p.title + "</text>\n";
  s += "<rect x=\"" + Num(ox + left) + "\" y=\"" + Num(oy + top) + "\" width=\"" + Num(pw) +
       "\" height=\"" + Num(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = lo + (hi - lo) * k / 4.0;
    s += "<text x=\"" + Num(ox + left - 4) + "\" y=\"" + Num(ypos(v) + 4) +
         "\" text-anchor=\"end\" font-size=\"10\">" + Num(v) + "</text>\n";
  }
  for (std::size_t i = 0; i < n; ++i)
    s += "<text x=\"" + Num(xpos(i)) + "\" y=\"" + Num(oy + h - bottom + 16) +
         "\" text-anchor=\"middle\" font-size=\"10\">" + p.x_labels[i] + "</text>\n";
  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& ser = p.series[k];
    std::string pts;
    for (std::size_t i = 0; i < ser.values.size() && i < n; ++i) {
      if (!std::isfinite(ser.values[i])) continue;
      pts += Num(xpos(i)) + "," + Num(ypos(ser.values[i])) + " ";
      s += "<circle cx=\"" + Num(xpos(i)) + "\" cy=\"" + Num(ypos(ser.values[i])) +
           "\" r=\"3\" fill=\"" + SeriesColor(k) + "\"/>\n";
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(SeriesColor(k)) +
         "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    s += "<text x=\"" + Num(ox + left + 6) + "\" y=\"" + Num(oy + top + 14 + 12.0 * k) +
         "\" font-size=\"10\" fill=\"" + SeriesColor(k) + "\">" + ser.name + "</text>\n";
  }
  return s;
}

}  // namespace detail

inline std::string RenderLineChart(const SvgPanel& p, double width = 360, double height = 260) {
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::Num(width) +
         "\" height=\"" + detail::Num(height) + "\">\n" +
         detail::PanelBody(p, 0, 0, width, height) + "</svg>\n";
}

// Panels laid out left to right in one row.
inline std::string RenderPanelGrid(const std::vector<SvgPanel>& panels, double width = 300,
                                   double height = 260) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                  detail::Num(width * panels.size()) + "\" height=\"" + detail::Num(height) +
                  "\">\n";
  for (std::size_t i = 0; i < panels.size(); ++i)
    s += detail::PanelBody(panels[i], width * i, 0, width, height);
  return s + "</svg>\n";
}

}  // namespace gfn
