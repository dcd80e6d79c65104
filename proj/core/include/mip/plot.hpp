#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mip/common.hpp"

namespace mip::plot {

struct Series {
  std::string name;
  std::vector<double> values;
};

/// Line chart over x = 0, 1, ...; non-finite points are skipped.
void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::vector<Series>& series, const std::string& x_label,
                const std::string& y_label);

/// Grouped bars: one group per category, one bar per series.
void grouped_bars(const std::filesystem::path& path, const std::string& title,
                  const std::vector<std::string>& categories, const std::vector<Series>& series,
                  const std::string& y_label);

/// Color-mapped matrix, row 0 at the top.
void heatmap(const std::filesystem::path& path, const std::string& title, const Matrix& values,
             const std::string& row_label, const std::string& col_label);

}  // namespace mip::plot
