#pragma once

#include <string>
#include <vector>

namespace sls::svg {

// One line with an optional shaded band between y_lo and y_hi (quartiles).
// Non-finite samples are skipped point-wise.
struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> y_lo;  // empty or same length as y
  std::vector<double> y_hi;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

// Self-contained static SVG, no timestamps or external references.
void write_plot(const Plot& plot, const std::string& path);

// Default qualitative palette, cycled by index.
std::string palette_color(std::size_t index);

}  // namespace sls::svg
