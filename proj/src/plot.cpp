#include "asr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "asr/errors.hpp"

namespace asr {

namespace {

constexpr double kWidth = 960, kPanelHeight = 220, kLeft = 70, kRight = 20, kTop = 30, kGap = 40;
constexpr std::size_t kMaxPoints = 2000;
constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Point {
  double x, y;
};

std::vector<Point> windowed_accuracy_points(const std::vector<RunRow>& rows, std::size_t window) {
  std::vector<Point> pts;
  for (std::size_t b = 0; b < rows.size(); b += window) {
    const std::size_t e = std::min(rows.size(), b + window);
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += rows[i].accuracy;
    pts.push_back({static_cast<double>(rows[e - 1].step), s / static_cast<double>(e - b)});
  }
  return pts;
}

std::vector<Point> sampled_points(const std::vector<RunRow>& rows, const std::function<double(const RunRow&)>& f) {
  const std::size_t stride = std::max<std::size_t>(1, rows.size() / kMaxPoints);
  std::vector<Point> pts;
  for (std::size_t i = 0; i < rows.size(); i += stride) pts.push_back({static_cast<double>(rows[i].step), f(rows[i])});
  return pts;
}

std::string xml_escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

std::string render_svg(const std::vector<PlotSeries>& series, std::size_t accuracy_window) {
  if (series.empty()) throw FormatError("nothing to plot");
  for (const auto& s : series) {
    if (s.rows.empty()) throw FormatError("trace '" + s.label + "' has no rows");
  }
  if (accuracy_window == 0) accuracy_window = 1;

  struct Panel {
    const char* title;
    std::vector<std::vector<Point>> lines;
  };
  std::vector<Panel> panels = {{"accuracy (windowed)", {}}, {"label flip (smoothed)", {}}, {"weight L2 norm", {}}};
  double max_step = 1.0;
  for (const auto& s : series) {
    panels[0].lines.push_back(windowed_accuracy_points(s.rows, accuracy_window));
    panels[1].lines.push_back(sampled_points(s.rows, [](const RunRow& r) { return r.lf_smoothed; }));
    panels[2].lines.push_back(sampled_points(s.rows, [](const RunRow& r) { return r.weight_norm; }));
    max_step = std::max(max_step, static_cast<double>(s.rows.back().step));
  }

  const double plot_w = kWidth - kLeft - kRight;
  const double height = kTop + 3 * (kPanelHeight + kGap);
  std::ostringstream out;
  out.precision(6);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << kWidth << ' ' << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto sx = [&](double step) { return kLeft + plot_w * step / max_step; };

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const double top = kTop + static_cast<double>(p) * (kPanelHeight + kGap);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& line : panels[p].lines) {
      for (const auto& pt : line) {
        if (!std::isfinite(pt.y)) continue;
        lo = std::min(lo, pt.y);
        hi = std::max(hi, pt.y);
      }
    }
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (hi - lo < 1e-12) hi = lo + 1.0;
    auto sy = [&](double v) { return top + kPanelHeight * (1.0 - (v - lo) / (hi - lo)); };
    out << "<g class=\"panel\">\n";
    out << "<text x=\"" << kLeft << "\" y=\"" << top - 8 << "\" font-family=\"sans-serif\" font-size=\"13\">"
        << panels[p].title << "</text>\n";
    out << "<rect x=\"" << kLeft << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << kPanelHeight
        << "\" fill=\"none\" stroke=\"#999\"/>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
        << "font-size=\"10\">" << hi << "</text>\n";
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << top + kPanelHeight << "\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\" font-size=\"10\">" << lo << "</text>\n";
    for (std::size_t s = 0; s < panels[p].lines.size(); ++s) {
      out << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << kPalette[s % std::size(kPalette)]
          << "\" points=\"";
      for (const auto& pt : panels[p].lines[s]) {
        const double y = std::isfinite(pt.y) ? pt.y : lo;
        out << sx(pt.x) << ',' << sy(y) << ' ';
      }
      out << "\"/>\n";
    }
    out << "</g>\n";
  }

  const double bottom = kTop + 3 * kPanelHeight + 2 * kGap;
  for (std::size_t s = 0; s < series.size(); ++s) {
    for (const auto& r : series[s].rows) {
      if (!r.triggered) continue;
      out << "<line class=\"trigger\" x1=\"" << sx(static_cast<double>(r.step)) << "\" x2=\""
          << sx(static_cast<double>(r.step)) << "\" y1=\"" << kTop << "\" y2=\"" << bottom << "\" stroke=\""
          << kPalette[s % std::size(kPalette)] << "\" stroke-dasharray=\"3,3\" stroke-opacity=\"0.6\"/>\n";
    }
  }
  for (std::size_t s = 0; s < series.size(); ++s) {
    out << "<text x=\"" << kLeft + 10 + 200 * static_cast<double>(s) << "\" y=\"" << height - 10
        << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << kPalette[s % std::size(kPalette)] << "\">"
        << xml_escape(series[s].label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace asr
