#pragma once

// Minimal SVG renderings of the explanation and evaluation artifacts:
// LEAplot curves, the signed LEAgram heatmap and daily error traces.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "leaf/explainer.hpp"
#include "leaf/metrics.hpp"

namespace leaf::svg {

namespace detail {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Frame {
  double width = 720, height = 400;
  double left = 64, right = 16, top = 32, bottom = 48;
  double x0, x1, y0, y1;  // data ranges

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void open(std::ostringstream& o, const Frame& f, const std::string& title) {
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << f.left << "\" y=\"18\" font-size=\"13\">" << escape(title) << "</text>\n";
}

inline void axes(std::ostringstream& o, const Frame& f, const std::string& xlabel, const std::string& ylabel) {
  const double bx = f.left, by = f.height - f.bottom;
  o << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << f.width - f.right << "\" y2=\"" << by
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << bx << "\" y1=\"" << f.top << "\" x2=\"" << bx << "\" y2=\"" << by << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y0 + (f.y1 - f.y0) * i / 4.0;
    o << "<text x=\"" << bx - 6 << "\" y=\"" << num(f.py(v) + 4) << "\" text-anchor=\"end\">" << format_sig(v, 3)
      << "</text>\n";
  }
  o << "<text x=\"" << num((f.left + f.width - f.right) / 2) << "\" y=\"" << f.height - 10
    << "\" text-anchor=\"middle\">" << escape(xlabel) << "</text>\n"
    << "<text x=\"14\" y=\"" << num((f.top + by) / 2) << "\" transform=\"rotate(-90 14 " << num((f.top + by) / 2)
    << ")\" text-anchor=\"middle\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& o, const Frame& f, std::span<const std::string> names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = f.top + 12.0 * static_cast<double>(i);
    const double x = f.width - f.right - 120;
    o << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"10\" height=\"3\" fill=\"" << kPalette[i % 6]
      << "\"/>\n<text x=\"" << x + 14 << "\" y=\"" << y + 5 << "\">" << escape(names[i]) << "</text>\n";
  }
}

}  // namespace detail

/// One polyline per split. The x axis is the bin position so that the
/// quantile bins are evenly spaced, as in the CSV.
inline std::string leaplot(std::span<const std::string> names, std::span<const LeaProfile> profiles) {
  detail::Frame f;
  std::size_t bins = 1;
  double ymax = 0.0;
  for (const auto& p : profiles) {
    bins = std::max(bins, p.n_bins());
    for (const auto& e : p.bin_errors)
      if (e) ymax = std::max(ymax, *e);
  }
  f.x0 = 0;
  f.x1 = static_cast<double>(bins);
  f.y0 = 0;
  f.y1 = ymax > 0 ? ymax * 1.05 : 1.0;
  std::ostringstream o;
  detail::open(o, f, profiles.empty() ? "LEAplot" : "LEAplot of " + profiles.front().feature);
  detail::axes(o, f, "feature quantile bin", "NRMSE");
  for (std::size_t s = 0; s < profiles.size(); ++s) {
    o << "<polyline fill=\"none\" stroke-width=\"1.2\" stroke=\"" << detail::kPalette[s % 6] << "\" points=\"";
    for (std::size_t b = 0; b < profiles[s].n_bins(); ++b)
      if (const auto& e = profiles[s].bin_errors[b])
        o << detail::num(f.px(static_cast<double>(b) + 0.5)) << ',' << detail::num(f.py(*e)) << ' ';
    o << "\"/>\n";
  }
  detail::legend(o, f, names);
  o << "</svg>\n";
  return o.str();
}

/// Diverging heatmap: red cells overestimate, blue cells underestimate,
/// saturating at the largest absolute error in the grid.
inline std::string leagram(const LeagramGrid& g) {
  detail::Frame f;
  f.width = 900;
  f.height = 480;
  f.x0 = 0;
  f.x1 = static_cast<double>(std::max<std::size_t>(g.dates.size(), 1));
  f.y0 = 0;
  f.y1 = static_cast<double>(std::max<std::size_t>(g.n_bins(), 1));
  double scale = 0.0;
  for (const auto& c : g.cells) scale = std::max(scale, std::abs(c.ne));
  if (!(scale > 0.0)) scale = 1.0;
  const double cw = f.px(1) - f.px(0), ch = f.py(0) - f.py(1);

  std::ostringstream o;
  detail::open(o, f, "LEAgram of " + g.feature + " (red over, blue under; |NE| max " + format_sig(scale, 3) + ")");
  for (const auto& c : g.cells) {
    const double t = std::clamp(c.ne / scale, -1.0, 1.0);
    const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
    char colour[8];
    if (t >= 0)
      std::snprintf(colour, sizeof colour, "#ff%02x%02x", fade, fade);
    else
      std::snprintf(colour, sizeof colour, "#%02x%02xff", fade, fade);
    o << "<rect x=\"" << detail::num(f.px(static_cast<double>(c.date_index))) << "\" y=\""
      << detail::num(f.py(static_cast<double>(c.bin + 1))) << "\" width=\"" << detail::num(cw) << "\" height=\""
      << detail::num(ch) << "\" fill=\"" << colour << "\"/>\n";
  }
  const double by = f.height - f.bottom;
  o << "<line x1=\"" << f.left << "\" y1=\"" << by << "\" x2=\"" << f.width - f.right << "\" y2=\"" << by
    << "\" stroke=\"black\"/>\n";
  if (!g.dates.empty()) {
    o << "<text x=\"" << f.left << "\" y=\"" << by + 14 << "\">" << format_date(g.dates.front()) << "</text>\n"
      << "<text x=\"" << f.width - f.right << "\" y=\"" << by + 14 << "\" text-anchor=\"end\">"
      << format_date(g.dates.back()) << "</text>\n";
  }
  o << "<text x=\"14\" y=\"" << detail::num((f.top + by) / 2) << "\" transform=\"rotate(-90 14 "
    << detail::num((f.top + by) / 2) << ")\" text-anchor=\"middle\">" << detail::escape(g.feature)
    << " quantile bin</text>\n</svg>\n";
  return o.str();
}

/// Daily NRMSE per scheme on a shared date axis.
inline std::string traces(std::span<const std::pair<std::string, ErrorSeries>> series) {
  detail::Frame f;
  f.width = 900;
  double lo = 0, hi = 1, ymax = 0;
  bool first = true;
  for (const auto& [name, s] : series)
    for (const auto& e : s.entries) {
      const double d = e.date.value;
      if (first) {
        lo = hi = d;
        first = false;
      }
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      ymax = std::max(ymax, e.nrmse);
    }
  f.x0 = lo;
  f.x1 = hi > lo ? hi : lo + 1;
  f.y0 = 0;
  f.y1 = ymax > 0 ? ymax * 1.05 : 1.0;
  std::ostringstream o;
  detail::open(o, f, "Daily NRMSE");
  detail::axes(o, f, first ? "date" : format_date(Day(static_cast<std::int32_t>(lo))) + " .. " +
                                          format_date(Day(static_cast<std::int32_t>(hi))),
               "NRMSE");
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    names.push_back(series[i].first);
    o << "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" << detail::kPalette[i % 6] << "\" points=\"";
    for (const auto& e : series[i].second.entries)
      o << detail::num(f.px(e.date.value)) << ',' << detail::num(f.py(e.nrmse)) << ' ';
    o << "\"/>\n";
  }
  detail::legend(o, f, names);
  o << "</svg>\n";
  return o.str();
}

}  // namespace leaf::svg
