#include "mip/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace mip::plot {

namespace {

constexpr double kWidth = 720;
constexpr double kHeight = 420;
constexpr double kLeft = 70;
constexpr double kRight = 150;
constexpr double kTop = 40;
constexpr double kBottom = 50;

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

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

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void open_svg(std::ostringstream& svg, double w, double h, const std::string& title) {
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
      << "</text>\n";
}

void save(const std::filesystem::path& path, std::ostringstream& svg) {
  svg << "</svg>\n";
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << svg.str();
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();

  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void finish(bool from_zero) {
    if (!std::isfinite(lo)) lo = 0.0, hi = 1.0;
    if (from_zero) lo = std::min(lo, 0.0);
    if (hi - lo < 1e-12) hi = lo + 1.0;
  }
};

void axes(std::ostringstream& svg, const Range& y, const std::string& x_label, const std::string& y_label) {
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  svg << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1 << "\" y2=\"" << y0
      << "\" stroke=\"black\"/>\n<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
      << "\" y2=\"" << y1 << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y.lo + (y.hi - y.lo) * i / 4.0;
    const double py = y0 - (y0 - y1) * i / 4.0;
    svg << "<line x1=\"" << x0 - 4 << "\" y1=\"" << py << "\" x2=\"" << x1 << "\" y2=\"" << py
        << "\" stroke=\"#ddd\"/>\n<text x=\"" << x0 - 6 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\">" << num(v) << "</text>\n";
  }
  svg << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
      << escape(x_label) << "</text>\n<text x=\"16\" y=\"" << (y0 + y1) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (y0 + y1) / 2 << ")\">"
      << escape(y_label) << "</text>\n";
}

void legend(std::ostringstream& svg, const std::vector<Series>& series) {
  const double x = kWidth - kRight + 12;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 10 + 18.0 * static_cast<double>(i);
    svg << "<rect x=\"" << x << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"10\" fill=\""
        << kPalette[i % 8] << "\"/>\n<text x=\"" << x + 16 << "\" y=\"" << y << "\">"
        << escape(series[i].name) << "</text>\n";
  }
}

}  // namespace

void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::vector<Series>& series, const std::string& x_label,
                const std::string& y_label) {
  Range y;
  std::size_t len = 0;
  for (const Series& s : series) {
    for (double v : s.values) y.add(v);
    len = std::max(len, s.values.size());
  }
  y.finish(false);
  const double span = std::max<double>(1.0, static_cast<double>(len) - 1.0);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;

  std::ostringstream svg;
  open_svg(svg, kWidth, kHeight, title);
  axes(svg, y, x_label, y_label);
  svg << "<text x=\"" << x0 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">0</text>\n"
      << "<text x=\"" << x1 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">" << num(span)
      << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    svg << "<polyline fill=\"none\" stroke-width=\"1.6\" stroke=\"" << kPalette[i % 8] << "\" points=\"";
    const auto& v = series[i].values;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!std::isfinite(v[j])) continue;
      const double px = x0 + (x1 - x0) * static_cast<double>(j) / span;
      const double py = y0 - (y0 - y1) * (v[j] - y.lo) / (y.hi - y.lo);
      svg << px << ',' << py << ' ';
    }
    svg << "\"/>\n";
  }
  legend(svg, series);
  save(path, svg);
}

void grouped_bars(const std::filesystem::path& path, const std::string& title,
                  const std::vector<std::string>& categories, const std::vector<Series>& series,
                  const std::string& y_label) {
  Range y;
  for (const Series& s : series) {
    if (s.values.size() != categories.size()) {
      throw ShapeError("grouped_bars: series '" + s.name + "' does not match the category count");
    }
    for (double v : s.values) y.add(v);
  }
  y.finish(true);
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  const double y0 = kHeight - kBottom;
  const double y1 = kTop;
  const double group = (x1 - x0) / std::max<double>(1.0, static_cast<double>(categories.size()));
  const double bar = group * 0.8 / std::max<double>(1.0, static_cast<double>(series.size()));

  std::ostringstream svg;
  open_svg(svg, kWidth, kHeight, title);
  axes(svg, y, "", y_label);
  for (std::size_t c = 0; c < categories.size(); ++c) {
    const double gx = x0 + group * static_cast<double>(c) + group * 0.1;
    for (std::size_t s = 0; s < series.size(); ++s) {
      const double v = series[s].values[c];
      if (!std::isfinite(v)) continue;
      const double top = y0 - (y0 - y1) * (v - y.lo) / (y.hi - y.lo);
      const double base = y0 - (y0 - y1) * (0.0 - y.lo) / (y.hi - y.lo);
      svg << "<rect x=\"" << gx + bar * static_cast<double>(s) << "\" y=\"" << std::min(top, base)
          << "\" width=\"" << bar * 0.95 << "\" height=\"" << std::abs(base - top) << "\" fill=\""
          << kPalette[s % 8] << "\"><title>" << escape(series[s].name) << ": " << num(v)
          << "</title></rect>\n";
    }
    svg << "<text x=\"" << gx + group * 0.4 << "\" y=\"" << y0 + 16 << "\" text-anchor=\"middle\">"
        << escape(categories[c]) << "</text>\n";
  }
  legend(svg, series);
  save(path, svg);
}

void heatmap(const std::filesystem::path& path, const std::string& title, const Matrix& values,
             const std::string& row_label, const std::string& col_label) {
  if (values.size() == 0) throw ShapeError("heatmap: empty matrix");
  Range r;
  for (Index i = 0; i < values.size(); ++i) r.add(values.data()[i]);
  r.finish(false);
  const double cell = std::clamp(560.0 / static_cast<double>(std::max(values.rows(), values.cols())), 3.0, 28.0);
  const double w = kLeft + cell * static_cast<double>(values.cols()) + 90;
  const double h = kTop + cell * static_cast<double>(values.rows()) + kBottom;

  std::ostringstream svg;
  open_svg(svg, std::max(w, 320.0), h, title);
  for (Index i = 0; i < values.rows(); ++i) {
    for (Index j = 0; j < values.cols(); ++j) {
      const double v = values(i, j);
      const double u = std::isfinite(v) ? (v - r.lo) / (r.hi - r.lo) : 0.0;
      // White to dark blue.
      const int red = static_cast<int>(255 - 230 * u);
      const int green = static_cast<int>(255 - 180 * u);
      const int blue = static_cast<int>(255 - 90 * u);
      svg << "<rect x=\"" << kLeft + cell * static_cast<double>(j) << "\" y=\""
          << kTop + cell * static_cast<double>(i) << "\" width=\"" << cell << "\" height=\"" << cell
          << "\" fill=\"rgb(" << red << ',' << green << ',' << blue << ")\"><title>(" << i << ", " << j
          << ") " << num(v) << "</title></rect>\n";
    }
  }
  const double gx = kLeft + cell * static_cast<double>(values.cols()) + 20;
  svg << "<text x=\"" << gx << "\" y=\"" << kTop + 10 << "\">max " << num(r.hi) << "</text>\n"
      << "<text x=\"" << gx << "\" y=\"" << kTop + 26 << "\">min " << num(r.lo) << "</text>\n"
      << "<text x=\"" << kLeft + cell * static_cast<double>(values.cols()) / 2 << "\" y=\"" << h - 16
      << "\" text-anchor=\"middle\">" << escape(col_label) << "</text>\n"
      << "<text x=\"16\" y=\"" << kTop + 40 << "\" transform=\"rotate(-90 16 " << kTop + 40
      << ")\" text-anchor=\"end\">" << escape(row_label) << "</text>\n";
  save(path, svg);
}

}  // namespace mip::plot
