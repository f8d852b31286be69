#pragma once

#include <string>
#include <vector>

// Minimal static SVG charts for reports; no scripting, no external assets.

namespace rtnet::svg {

struct Series {
  std::string name;
  std::vector<double> x, y;
  std::vector<double> err;  // optional half-widths of error bars
};

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series);

struct BarGroup {
  std::string name;            // legend entry
  std::vector<double> values;  // one per category
  std::vector<double> err;     // optional
};

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<BarGroup>& groups);

std::string escape(const std::string& text);

}  // namespace rtnet::svg
