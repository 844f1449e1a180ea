#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "dvol/analysis.hpp"
#include "dvol/util.hpp"

namespace dvol {

// Plain-text SVG generation, no rendering dependency. Output is
// deterministic for identical inputs.

namespace svg_detail {

inline std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string num(double v) {
  // fixed precision keeps layout stable and files small
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace svg_detail

// Horizontal bar chart of per-measure correlations, positive bars blue,
// negative bars red, sorted as given (descending by construction).
inline std::string svg_correlation_bars(const CorrelationRanking& ranking,
                                        const std::string& title) {
  using svg_detail::esc;
  using svg_detail::num;
  const double row_h = 16.0, label_w = 220.0, plot_w = 560.0, top = 48.0;
  std::vector<const CorrelationEntry*> defined;
  for (const auto& e : ranking.entries)
    if (e.r) defined.push_back(&e);
  const double height = top + row_h * static_cast<double>(defined.size()) + 40.0;
  const double width = label_w + plot_w + 60.0;
  const double x0 = label_w + plot_w / 2.0;  // r = 0 axis
  const double scale = plot_w / 2.0;         // |r| = 1 spans half the plot

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) +
       "\" height=\"" + num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + num(width / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       esc(title) + "</text>\n";
  s += "<line x1=\"" + num(x0) + "\" y1=\"" + num(top - 8.0) + "\" x2=\"" + num(x0) +
       "\" y2=\"" + num(height - 32.0) + "\" stroke=\"#888\"/>\n";
  for (double tick : {-1.0, -0.5, 0.5, 1.0}) {
    const double x = x0 + tick * scale;
    s += "<text x=\"" + num(x) + "\" y=\"" + num(height - 16.0) +
         "\" text-anchor=\"middle\" fill=\"#555\">" + num(tick) + "</text>\n";
  }
  double y = top;
  for (const auto* e : defined) {
    const double r = *e->r;
    const double w = std::fabs(r) * scale;
    const double x = r >= 0.0 ? x0 : x0 - w;
    s += "<rect x=\"" + num(x) + "\" y=\"" + num(y + 2.0) + "\" width=\"" + num(w) +
         "\" height=\"" + num(row_h - 4.0) + "\" fill=\"" +
         (r >= 0.0 ? "#3465a4" : "#cc3333") + "\"/>\n";
    s += "<text x=\"" + num(label_w - 6.0) + "\" y=\"" + num(y + row_h - 4.0) +
         "\" text-anchor=\"end\">" + esc(e->name) + "</text>\n";
    y += row_h;
  }
  s += "</svg>\n";
  return s;
}

struct ScatterSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;  // (actual, expected)
};

// Actual-vs-expected scatter with a y = x reference line; the first series
// is drawn as filled circles, the second as open diamonds.
inline std::string svg_expected_actual(const std::vector<ScatterSeries>& series,
                                       const std::string& title) {
  using svg_detail::esc;
  using svg_detail::num;
  const double size = 460.0, margin = 56.0;
  double vmax = 1.0;
  for (const auto& sr : series)
    for (const auto& [a, e] : sr.points) vmax = std::max({vmax, a, e});
  vmax *= 1.08;

  auto px = [&](double v) { return margin + (v / vmax) * (size - 2.0 * margin); };
  auto py = [&](double v) { return size - margin - (v / vmax) * (size - 2.0 * margin); };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(size) + "\" height=\"" +
       num(size) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<text x=\"" + num(size / 2.0) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" +
       esc(title) + "</text>\n";
  s += "<rect x=\"" + num(margin) + "\" y=\"" + num(margin) + "\" width=\"" +
       num(size - 2 * margin) + "\" height=\"" + num(size - 2 * margin) +
       "\" fill=\"none\" stroke=\"#888\"/>\n";
  s += "<line x1=\"" + num(px(0)) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(px(vmax)) +
       "\" y2=\"" + num(py(vmax)) + "\" stroke=\"#aaa\" stroke-dasharray=\"4 3\"/>\n";
  s += "<text x=\"" + num(size / 2.0) + "\" y=\"" + num(size - 12.0) +
       "\" text-anchor=\"middle\">actual crashes</text>\n";
  s += "<text x=\"16\" y=\"" + num(size / 2.0) + "\" transform=\"rotate(-90 16 " +
       num(size / 2.0) + ")\" text-anchor=\"middle\">expected crashes</text>\n";

  const char* colors[] = {"#3465a4", "#cc6600"};
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % 2];
    for (const auto& [a, e] : series[k].points) {
      if (k % 2 == 0) {
        s += "<circle cx=\"" + num(px(a)) + "\" cy=\"" + num(py(e)) +
             "\" r=\"3\" fill=\"" + color + "\" fill-opacity=\"0.75\"/>\n";
      } else {
        const double x = px(a), y = py(e);
        s += "<path d=\"M" + num(x) + " " + num(y - 4.0) + " L" + num(x + 4.0) + " " +
             num(y) + " L" + num(x) + " " + num(y + 4.0) + " L" + num(x - 4.0) + " " +
             num(y) + " Z\" fill=\"none\" stroke=\"" + color + "\"/>\n";
      }
    }
    s += "<text x=\"" + num(margin + 8.0) + "\" y=\"" + num(margin + 16.0 + 14.0 * k) +
         "\" fill=\"" + color + "\">" + esc(series[k].label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

}  // namespace dvol
