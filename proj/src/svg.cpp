#include "sls/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace sls::svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 480.0;
constexpr double kLeft = 70.0, kRight = 20.0, kTop = 40.0, kBottom = 55.0;

struct Axis {
  double lo = 0.0, hi = 1.0;
  bool log = false;

  double place(double v, double pix_lo, double pix_hi) const {
    double t = log ? (std::log10(v) - lo) / (hi - lo) : (v - lo) / (hi - lo);
    return pix_lo + t * (pix_hi - pix_lo);
  }
};

bool usable(double v, bool log) { return std::isfinite(v) && (!log || v > 0.0); }

Axis fit_axis(const Plot& plot, bool vertical) {
  bool log = vertical ? plot.log_y : plot.log_x;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto feed = [&](double v) {
    if (!usable(v, log)) return;
    double t = log ? std::log10(v) : v;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  };
  for (const auto& s : plot.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (vertical) {
        feed(s.y[i]);
        if (!s.y_lo.empty()) {
          feed(s.y_lo[i]);
          feed(s.y_hi[i]);
        }
      } else {
        feed(s.x[i]);
      }
    }
  }
  if (!(lo <= hi)) {  // no finite data; keep a unit window
    lo = log ? 0.0 : 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  double pad = 0.05 * (hi - lo);
  return Axis{lo - pad, hi + pad, log};
}

std::vector<double> tick_values(const Axis& ax) {
  std::vector<double> ticks;
  if (ax.log) {
    for (int e = static_cast<int>(std::ceil(ax.lo)); e <= static_cast<int>(std::floor(ax.hi)); ++e)
      ticks.push_back(std::pow(10.0, e));
    if (ticks.size() < 2)
      for (double t : {ax.lo, 0.5 * (ax.lo + ax.hi), ax.hi}) ticks.push_back(std::pow(10.0, t));
  } else {
    double span = ax.hi - ax.lo;
    double step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
    if (span / step > 8.0) step *= 2.0;
    if (span / step > 8.0) step *= 2.5;
    for (double v = std::ceil(ax.lo / step) * step; v <= ax.hi + 1e-9 * span; v += step)
      ticks.push_back(v);
  }
  return ticks;
}

std::string fmt(double v) {
  std::ostringstream os;
  double a = std::fabs(v);
  if (v != 0.0 && (a >= 1e4 || a < 1e-3))
    os.precision(1), os << std::scientific << v;
  else
    os.precision(4), os << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

}  // namespace

std::string palette_color(std::size_t index) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  return kPalette[index % (sizeof(kPalette) / sizeof(kPalette[0]))];
}

void write_plot(const Plot& plot, const std::string& path) {
  for (const auto& s : plot.series) {
    if (s.y.size() != s.x.size() || (!s.y_lo.empty() && (s.y_lo.size() != s.x.size() ||
                                                         s.y_hi.size() != s.x.size())))
      throw std::invalid_argument("write_plot: series '" + s.label + "' has ragged columns");
  }
  Axis ax = fit_axis(plot, false), ay = fit_axis(plot, true);
  auto px = [&](double v) { return ax.place(v, kLeft, kWidth - kRight); };
  auto py = [&](double v) { return ay.place(v, kHeight - kBottom, kTop); };

  std::ostringstream os;
  os.precision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
     << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\" "
     << "font-family=\"sans-serif\">" << escape(plot.title) << "</text>\n";

  // Grid and ticks.
  for (double t : tick_values(ax)) {
    double x = px(t);
    if (x < kLeft - 0.5 || x > kWidth - kRight + 0.5) continue;
    os << "<line x1=\"" << x << "\" y1=\"" << kTop << "\" x2=\"" << x << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << x << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
       << "</text>\n";
  }
  for (double t : tick_values(ay)) {
    double y = py(t);
    if (y < kTop - 0.5 || y > kHeight - kBottom + 0.5) continue;
    os << "<line x1=\"" << kLeft << "\" y1=\"" << y << "\" x2=\"" << kWidth - kRight
       << "\" y2=\"" << y << "\" stroke=\"#dddddd\"/>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + 4
       << "\" text-anchor=\"end\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(t)
       << "</text>\n";
  }
  os << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << kWidth - kLeft - kRight
     << "\" height=\"" << kHeight - kTop - kBottom
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 14
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\">"
     << escape(plot.x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
     << "\" text-anchor=\"middle\" font-size=\"13\" font-family=\"sans-serif\" "
     << "transform=\"rotate(-90 16 " << (kTop + kHeight - kBottom) / 2 << ")\">"
     << escape(plot.y_label) << "</text>\n";

  // Bands first so lines draw on top.
  for (const auto& s : plot.series) {
    if (s.y_lo.empty()) continue;
    std::vector<std::pair<double, double>> upper, lower;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], ax.log) || !usable(s.y_lo[i], ay.log) || !usable(s.y_hi[i], ay.log))
        continue;
      upper.emplace_back(px(s.x[i]), py(s.y_hi[i]));
      lower.emplace_back(px(s.x[i]), py(s.y_lo[i]));
    }
    if (upper.size() < 2) continue;
    os << "<polygon fill=\"" << s.color << "\" fill-opacity=\"0.18\" stroke=\"none\" points=\"";
    for (const auto& [x, y] : upper) os << x << "," << y << " ";
    for (auto it = lower.rbegin(); it != lower.rend(); ++it) os << it->first << "," << it->second << " ";
    os << "\"/>\n";
  }
  for (const auto& s : plot.series) {
    std::string pts;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!usable(s.x[i], ax.log) || !usable(s.y[i], ay.log)) continue;
      std::ostringstream p;
      p.precision(6);
      p << px(s.x[i]) << "," << py(s.y[i]) << " ";
      pts += p.str();
    }
    if (!pts.empty())
      os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\""
         << pts << "\"/>\n";
  }

  // Legend.
  double ly = kTop + 14;
  for (const auto& s : plot.series) {
    os << "<line x1=\"" << kLeft + 10 << "\" y1=\"" << ly << "\" x2=\"" << kLeft + 34
       << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << kLeft + 40 << "\" y=\"" << ly + 4
       << "\" font-size=\"12\" font-family=\"sans-serif\">" << escape(s.label) << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << os.str();
}

}  // namespace sls::svg
