#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "rtnet/error.hpp"
#include "rtnet/svg.hpp"

namespace rtnet::svg {

namespace {

constexpr double kWidth = 640, kHeight = 400, kLeft = 70, kRight = 150, kTop = 40, kBottom = 50;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

void widen(double& lo, double& hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
}

void header(std::ostringstream& out, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
}

void axes(std::ostringstream& out, const Frame& f, const std::string& y_label) {
  const double bottom = kHeight - kBottom, right = kWidth - kRight;
  out << "<line x1=\"" << kLeft << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
      << bottom << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = f.y0 + (f.y1 - f.y0) * t / 4.0;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << f.py(v) + 4 << "\" text-anchor=\"end\">" << fmt(v)
        << "</text>\n";
  }
  out << "<text transform=\"translate(16," << (kTop + bottom) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& out, const std::vector<std::string>& names) {
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    out << "<rect x=\"" << kWidth - kRight + 14 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[i % 7] << "\"/>\n<text x=\"" << kWidth - kRight + 32 << "\" y=\"" << y + 1 << "\">"
        << escape(names[i]) << "</text>\n";
  }
}

}  // namespace

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                      const std::vector<Series>& series) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("line_plot: x and y lengths differ in " + s.name);
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double e = k < s.err.size() ? s.err[k] : 0.0;
      x0 = std::min(x0, s.x[k]);
      x1 = std::max(x1, s.x[k]);
      y0 = std::min(y0, s.y[k] - e);
      y1 = std::max(y1, s.y[k] + e);
    }
  }
  if (!std::isfinite(x0)) throw DataError("line_plot: no points");
  widen(x0, x1);
  widen(y0, y1);
  const double pad = 0.05 * (y1 - y0);
  Frame f{x0, x1, y0 - pad, y1 + pad};
  std::ostringstream out;
  header(out, title);
  axes(out, f, y_label);
  std::vector<double> ticks;
  for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
  std::sort(ticks.begin(), ticks.end());
  ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
  for (double t : ticks)
    out << "<text x=\"" << f.px(t) << "\" y=\"" << kHeight - kBottom + 16 << "\" text-anchor=\"middle\">" << fmt(t)
        << "</text>\n";
  out << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n";
  std::vector<std::string> names;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* color = kPalette[i % 7];
    names.push_back(s.name);
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) out << (k ? " " : "") << f.px(s.x[k]) << ',' << f.py(s.y[k]);
    out << "\"/>\n";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      out << "<circle cx=\"" << f.px(s.x[k]) << "\" cy=\"" << f.py(s.y[k]) << "\" r=\"3\" fill=\"" << color
          << "\"/>\n";
      if (k < s.err.size() && s.err[k] > 0)
        out << "<line x1=\"" << f.px(s.x[k]) << "\" y1=\"" << f.py(s.y[k] - s.err[k]) << "\" x2=\"" << f.px(s.x[k])
            << "\" y2=\"" << f.py(s.y[k] + s.err[k]) << "\" stroke=\"" << color << "\"/>\n";
    }
  }
  legend(out, names);
  out << "</svg>\n";
  return out.str();
}

std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& categories,
                      const std::vector<BarGroup>& groups) {
  if (categories.empty() || groups.empty()) throw DataError("bar_chart: nothing to draw");
  double y1 = 0.0;
  for (const auto& g : groups) {
    if (g.values.size() != categories.size()) throw DimensionError("bar_chart: group " + g.name + " size mismatch");
    for (std::size_t k = 0; k < g.values.size(); ++k)
      y1 = std::max(y1, g.values[k] + (k < g.err.size() ? g.err[k] : 0.0));
  }
  if (!(y1 > 0.0)) y1 = 1.0;
  Frame f{0.0, static_cast<double>(categories.size()), 0.0, y1 * 1.1};
  std::ostringstream out;
  header(out, title);
  axes(out, f, y_label);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(categories.size());
  const double bar = slot * 0.8 / static_cast<double>(groups.size());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < categories.size(); ++c)
    out << "<text x=\"" << kLeft + slot * (static_cast<double>(c) + 0.5) << "\" y=\"" << kHeight - kBottom + 16
        << "\" text-anchor=\"middle\">" << escape(categories[c]) << "</text>\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    names.push_back(groups[g].name);
    for (std::size_t c = 0; c < categories.size(); ++c) {
      const double v = groups[g].values[c];
      if (!std::isfinite(v)) continue;
      const double x = kLeft + slot * static_cast<double>(c) + slot * 0.1 + bar * static_cast<double>(g);
      out << "<rect x=\"" << x << "\" y=\"" << f.py(v) << "\" width=\"" << bar << "\" height=\""
          << f.py(0.0) - f.py(v) << "\" fill=\"" << kPalette[g % 7] << "\"><title>" << escape(groups[g].name) << ' '
          << escape(categories[c]) << ": " << fmt(v) << "</title></rect>\n";
      if (c < groups[g].err.size() && groups[g].err[c] > 0)
        out << "<line x1=\"" << x + bar / 2 << "\" y1=\"" << f.py(v - groups[g].err[c]) << "\" x2=\"" << x + bar / 2
            << "\" y2=\"" << f.py(v + groups[g].err[c]) << "\" stroke=\"black\"/>\n";
    }
  }
  legend(out, names);
  out << "</svg>\n";
  return out.str();
}

}  // namespace rtnet::svg
