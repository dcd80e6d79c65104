#include "mip/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>

namespace mip {

std::vector<double> parse_csv_line(std::string_view line, std::size_t line_no,
                                   const std::string& source) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<double> values;
  std::size_t col = 1;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    std::string_view cell = line.substr(pos, comma == std::string_view::npos ? line.npos : comma - pos);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t')) cell.remove_suffix(1);
    double v = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (!cell.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (cell.empty() || ec != std::errc() || ptr != last) {
      throw DataError(source + ": row " + std::to_string(line_no) + ", column " +
                      std::to_string(col) + ": not a number: '" + std::string(cell) + "'");
    }
    values.push_back(v);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
    ++col;
  }
  return values;
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool saw_blank = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") {
      saw_blank = true;
      continue;
    }
    if (saw_blank) {
      throw DataError(path.string() + ": row " + std::to_string(line_no - 1) + " is blank");
    }
    rows.push_back(parse_csv_line(line, line_no, path.string()));
  }
  return rows;
}

void write_numeric_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  std::array<char, 32> buf{};
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ',';
      const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), m(r, c));
      out.write(buf.data(), res.ptr - buf.data());
    }
    out << '\n';
  }
}

}  // namespace mip
