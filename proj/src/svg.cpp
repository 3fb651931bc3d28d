#include "csbm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace csbm {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 80, kRight = 170, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string escape(const std::string& s) {
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

struct Axis {
  bool log = false;
  double lo = 0.0, hi = 1.0;
  double pixel_lo = 0.0, pixel_hi = 1.0;

  double t(double v) const { return log ? std::log10(v) : v; }
  double map(double v) const { return pixel_lo + (t(v) - lo) / (hi - lo) * (pixel_hi - pixel_lo); }

  std::vector<double> ticks() const {
    std::vector<double> out;
    if (log) {
      for (double e = std::ceil(lo - 1e-9); e <= hi + 1e-9; e += 1.0) out.push_back(std::pow(10.0, e));
      if (out.size() < 2) {
        out = {std::pow(10.0, lo), std::pow(10.0, (lo + hi) / 2), std::pow(10.0, hi)};
      }
    } else {
      for (int q = 0; q <= 4; ++q) out.push_back(lo + (hi - lo) * q / 4.0);
    }
    return out;
  }
};

Axis make_axis(const std::vector<double>& values, bool log, double p0, double p1) {
  Axis a;
  a.log = log;
  a.pixel_lo = p0;
  a.pixel_hi = p1;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : values) {
    if (!std::isfinite(v) || (log && v <= 0.0)) continue;
    lo = std::min(lo, a.t(v));
    hi = std::max(hi, a.t(v));
  }
  if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    const double pad = std::max(std::abs(lo) * 0.1, 0.5);
    lo -= pad;
    hi += pad;
  } else {
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
  }
  a.lo = lo;
  a.hi = hi;
  return a;
}

}  // namespace

std::string render_svg(const SvgChart& chart) {
  std::vector<double> xs, ys;
  for (const auto& s : chart.series) {
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    ys.insert(ys.end(), s.y.begin(), s.y.end());
  }
  xs.insert(xs.end(), chart.x_markers.begin(), chart.x_markers.end());
  const Axis ax = make_axis(xs, chart.log_x, kLeft, kWidth - kRight);
  const Axis ay = make_axis(ys, chart.log_y, kHeight - kBottom, kTop);

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fmt(kWidth / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(chart.title)
    << "</text>\n";
  const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
  o << "<rect x=\"" << fmt(x0) << "\" y=\"" << fmt(y1) << "\" width=\"" << fmt(x1 - x0) << "\" height=\""
    << fmt(y0 - y1) << "\" fill=\"none\" stroke=\"#333\"/>\n";
  for (double v : ax.ticks()) {
    const double px = ax.map(v);
    if (px < x0 - 0.5 || px > x1 + 0.5) continue;
    o << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y1)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << fmt(px) << "\" y=\"" << fmt(y0 + 16) << "\" text-anchor=\"middle\">" << tick_label(v)
      << "</text>\n";
  }
  for (double v : ay.ticks()) {
    const double py = ay.map(v);
    if (py > y0 + 0.5 || py < y1 - 0.5) continue;
    o << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(py) << "\" x2=\"" << fmt(x1) << "\" y2=\"" << fmt(py)
      << "\" stroke=\"#ddd\"/>\n";
    o << "<text x=\"" << fmt(x0 - 6) << "\" y=\"" << fmt(py + 4) << "\" text-anchor=\"end\">" << tick_label(v)
      << "</text>\n";
  }
  o << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(kHeight - 18) << "\" text-anchor=\"middle\">"
    << escape(chart.x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << fmt((y0 + y1) / 2) << ") rotate(-90)\" text-anchor=\"middle\">"
    << escape(chart.y_label) << "</text>\n";
  for (double m : chart.x_markers) {
    if (chart.log_x && m <= 0.0) continue;
    const double px = ax.map(m);
    o << "<line x1=\"" << fmt(px) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(px) << "\" y2=\"" << fmt(y1)
      << "\" stroke=\"#555\" stroke-dasharray=\"4 3\"/>\n";
  }
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& ser = chart.series[s];
    const char* color = kPalette[s % (sizeof kPalette / sizeof kPalette[0])];
    std::string points;
    for (std::size_t q = 0; q < ser.x.size() && q < ser.y.size(); ++q) {
      if (!std::isfinite(ser.x[q]) || !std::isfinite(ser.y[q])) continue;
      if ((chart.log_x && ser.x[q] <= 0.0) || (chart.log_y && ser.y[q] <= 0.0)) continue;
      const std::string px = fmt(ax.map(ser.x[q])), py = fmt(ay.map(ser.y[q]));
      if (!points.empty()) points += ' ';
      points += px + "," + py;
      o << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    if (!points.empty())
      o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points << "\"/>\n";
    const double ly = y1 + 14 + 18.0 * s;
    o << "<line x1=\"" << fmt(x1 + 12) << "\" y1=\"" << fmt(ly - 4) << "\" x2=\"" << fmt(x1 + 32) << "\" y2=\""
      << fmt(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << fmt(x1 + 38) << "\" y=\"" << fmt(ly) << "\">" << escape(ser.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace csbm
