#pragma once

#include <filesystem>
#include <string_view>
#include <vector>

#include "mip/common.hpp"

namespace mip {

/// Parses a headerless CSV of decimal reals. Throws DataError naming the
/// 1-based row and column of the first malformed cell. Blank lines are
/// rejected except for a single trailing newline.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path);

/// Parses one line; `line_no` is used for diagnostics only.
std::vector<double> parse_csv_line(std::string_view line, std::size_t line_no,
                                   const std::string& source);

/// Writes every row of `m` with round-trip precision.
void write_numeric_csv(const std::filesystem::path& path, const Matrix& m);

}  // namespace mip
