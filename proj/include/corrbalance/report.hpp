#pragma once

#include <string>
#include <vector>

#include "corrbalance/numeric.hpp"

namespace corrbalance {

struct SvgSeries {
  std::string name;
  std::string color;
  std::vector<std::pair<double, double>> points;
};

/// Minimal hand-emitted SVG line chart. Every point carries data-x/data-y
/// attributes with the exact formatted source values.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<SvgSeries>& series,
                           const std::vector<std::pair<std::string, double>>& h_lines = {});

struct SvgBarGroup {
  std::string label;
  Vector values;  // one per series
};

std::string svg_bar_chart(const std::string& title, const std::vector<std::string>& series_names,
                          const std::vector<SvgBarGroup>& groups);

/// CSV assembly with `# key value` provenance comment lines on top.
std::string csv_table(const std::vector<std::pair<std::string, std::string>>& provenance,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);

}  // namespace corrbalance
