#include "corrbalance/report.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "corrbalance/serialize.hpp"

namespace corrbalance {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 400.0;
constexpr double kMarginLeft = 70.0;
constexpr double kMarginRight = 30.0;
constexpr double kMarginTop = 40.0;
constexpr double kMarginBottom = 50.0;

struct Range {
  double lo = 0.0;
  double hi = 1.0;
  double map(double v, double pixel_lo, double pixel_hi) const {
    if (hi == lo) return (pixel_lo + pixel_hi) / 2.0;
    return pixel_lo + (v - lo) / (hi - lo) * (pixel_hi - pixel_lo);
  }
};

Range expand(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

void axes(std::ostringstream& svg, const std::string& title, const std::string& x_label,
          const std::string& y_label, const Range& xr, const Range& yr) {
  svg << "<rect width=\"" << kWidth << "\" height=\"" << kHeight << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << escape_xml(title) << "</text>\n";
  const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0 << "\" y2=\"" << y1
      << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double fx = xr.lo + (xr.hi - xr.lo) * t / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * t / 4.0;
    const double px = xr.map(fx, x0, x1);
    const double py = yr.map(fy, y0, y1);
    svg << "<text x=\"" << px << "\" y=\"" << y0 + 18 << "\" text-anchor=\"middle\" "
        << "font-size=\"11\">" << format_double(std::round(fx * 1000.0) / 1000.0) << "</text>\n";
    svg << "<text x=\"" << x0 - 8 << "\" y=\"" << py + 4 << "\" text-anchor=\"end\" "
        << "font-size=\"11\">" << format_double(std::round(fy * 1000.0) / 1000.0) << "</text>\n";
  }
  svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape_xml(x_label) << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (y0 + y1) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" "
      << "transform=\"rotate(-90 16 " << (y0 + y1) / 2 << ")\">" << escape_xml(y_label)
      << "</text>\n";
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<SvgSeries>& series,
                           const std::vector<std::pair<std::string, double>>& h_lines) {
  double x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  bool first = true;
  for (const SvgSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        x_lo = x_hi = x;
        y_lo = y_hi = y;
        first = false;
      }
      x_lo = std::min(x_lo, x);
      x_hi = std::max(x_hi, x);
      y_lo = std::min(y_lo, y);
      y_hi = std::max(y_hi, y);
    }
  }
  for (const auto& [name, y] : h_lines) {
    if (first) {
      y_lo = y_hi = y;
      first = false;
    }
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  }
  const Range xr = expand(x_lo, x_hi);
  const Range yr = expand(y_lo, y_hi);
  const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\">\n";
  axes(svg, title, x_label, y_label, xr, yr);
  double legend_y = kMarginTop + 8;
  for (const SvgSeries& s : series) {
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : s.points) {
      svg << xr.map(x, x0, x1) << "," << yr.map(y, y0, y1) << " ";
    }
    svg << "\"/>\n";
    for (const auto& [x, y] : s.points) {
      svg << "<circle cx=\"" << xr.map(x, x0, x1) << "\" cy=\"" << yr.map(y, y0, y1)
          << "\" r=\"3\" fill=\"" << s.color << "\" data-x=\"" << format_double(x)
          << "\" data-y=\"" << format_double(y) << "\"/>\n";
    }
    svg << "<text x=\"" << x1 - 6 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" "
        << "font-size=\"12\" fill=\"" << s.color << "\">" << escape_xml(s.name) << "</text>\n";
    legend_y += 16;
  }
  for (const auto& [name, y] : h_lines) {
    const double py = yr.map(y, y0, y1);
    svg << "<line x1=\"" << x0 << "\" y1=\"" << py << "\" x2=\"" << x1 << "\" y2=\"" << py
        << "\" stroke=\"darkorange\" stroke-dasharray=\"6 3\" data-y=\"" << format_double(y)
        << "\"/>\n";
    svg << "<text x=\"" << x0 + 6 << "\" y=\"" << py - 5 << "\" font-size=\"12\" "
        << "fill=\"darkorange\">" << escape_xml(name) << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<SvgBarGroup>& groups) {
  double y_lo = 0.0, y_hi = 0.0;
  for (const SvgBarGroup& g : groups) {
    for (double v : g.values) {
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  if (y_hi == y_lo) y_hi = y_lo + 1.0;
  const Range yr = expand(y_lo, y_hi);
  const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
  const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
  static const char* kColors[] = {"steelblue", "darkorange", "seagreen", "firebrick"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\">\n";
  axes(svg, title, "", "", {0.0, 1.0}, yr);
  const double base_y = yr.map(std::max(0.0, yr.lo), y0, y1);
  const std::size_t n_groups = groups.size();
  const std::size_t n_series = series_names.size();
  const double group_w = (x1 - x0) / std::max<std::size_t>(1, n_groups);
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(1, n_series);
  for (std::size_t g = 0; g < n_groups; ++g) {
    const double gx = x0 + group_w * static_cast<double>(g) + group_w * 0.1;
    for (std::size_t s = 0; s < n_series && s < groups[g].values.size(); ++s) {
      const double v = groups[g].values[s];
      const double py = yr.map(v, y0, y1);
      const double top = std::min(py, base_y);
      const double height = std::abs(py - base_y);
      svg << "<rect x=\"" << gx + bar_w * static_cast<double>(s) << "\" y=\"" << top
          << "\" width=\"" << bar_w << "\" height=\"" << height << "\" fill=\""
          << kColors[s % 4] << "\" data-label=\"" << escape_xml(groups[g].label)
          << "\" data-value=\"" << format_double(v) << "\"/>\n";
    }
    svg << "<text x=\"" << gx + group_w * 0.4 << "\" y=\"" << y0 + 16
        << "\" text-anchor=\"middle\" font-size=\"9\">" << escape_xml(groups[g].label)
        << "</text>\n";
  }
  double legend_y = kMarginTop + 8;
  for (std::size_t s = 0; s < n_series; ++s) {
    svg << "<text x=\"" << x1 - 6 << "\" y=\"" << legend_y << "\" text-anchor=\"end\" "
        << "font-size=\"12\" fill=\"" << kColors[s % 4] << "\">" << escape_xml(series_names[s])
        << "</text>\n";
    legend_y += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

std::string csv_table(const std::vector<std::pair<std::string, std::string>>& provenance,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  for (const auto& [key, value] : provenance) out << "# " << key << " " << value << "\n";
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
  return out.str();
}

}  // namespace corrbalance
