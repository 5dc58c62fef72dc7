#include "diffce/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace diffce {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

void check_field(const std::string& f) {
  if (f.find_first_of(",\"\n\r") != std::string::npos)
    throw std::invalid_argument("csv: field '" + f +
                                "' contains a delimiter or quote");
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

int column_index(const CsvTable& t, const std::string& name) {
  for (std::size_t i = 0; i < t.header.size(); ++i)
    if (t.header[i] == name) return static_cast<int>(i);
  throw std::invalid_argument("svg: csv has no column '" + name + "'");
}

double parse_number(const std::string& s, const std::string& col) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("svg: column '" + col +
                                "' holds non-numeric value '" + s + "'");
  }
}

// Fixed-precision formatting for geometry so output bytes are stable.
std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string fmt_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                          "#66ccee", "#aa3377", "#bbbbbb"};
constexpr int kPaletteSize = 7;

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 24, kTop = 36, kBottom = 48;

struct AxisRange {
  double lo, hi;
  double scale(double v, double px_lo, double px_hi) const {
    return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo);
  }
};

AxisRange pad_range(double lo, double hi) {
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.06 * (hi - lo);
  return {lo - pad, hi + pad};
}

void svg_open(std::ostringstream& os, const std::string& title) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
     << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " "
     << kHeight << "\">\n";
  os << "<rect width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2
     << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"15\" fill=\"#222222\">"
     << title << "</text>\n";
}

void svg_axes(std::ostringstream& os, const AxisRange& xr, const AxisRange& yr,
              const std::string& x_label, const std::string& y_label) {
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom
     << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"#555555\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"#555555\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double px = xr.scale(fx, kLeft, kWidth - kRight);
    os << "<text x=\"" << fmt_coord(px) << "\" y=\"" << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\" fill=\"#333333\">"
       << fmt_label(fx) << "</text>\n";
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double py = yr.scale(fy, kHeight - kBottom, kTop);
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt_coord(py + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
          "fill=\"#333333\">"
       << fmt_label(fy) << "</text>\n";
  }
  os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\""
     << kHeight - 10
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"12\" fill=\"#333333\">"
     << x_label << "</text>\n";
  os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
        "fill=\"#333333\" transform=\"rotate(-90 16 "
     << (kTop + kHeight - kBottom) / 2 << ")\">" << y_label << "</text>\n";
}

}  // namespace

std::string csv_serialize(const CsvTable& table) {
  std::ostringstream os;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    check_field(table.header[i]);
    if (i) os << ',';
    os << table.header[i];
  }
  os << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw std::invalid_argument("csv: row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      check_field(row[i]);
      if (i) os << ',';
      os << row[i];
    }
    os << '\n';
  }
  return os.str();
}

CsvTable csv_parse(const std::string& text) {
  CsvTable t;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line))
    throw std::invalid_argument("csv: empty input");
  t.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split_line(line);
    if (row.size() != t.header.size())
      throw std::invalid_argument("csv: row width does not match header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::string render_scatter_svg(const CsvTable& table, const std::string& title,
                               const std::string& x_col,
                               const std::string& y_col,
                               const std::string& series_col) {
  const int xi = column_index(table, x_col);
  const int yi = column_index(table, y_col);
  const int si = series_col.empty() ? -1 : column_index(table, series_col);
  if (table.rows.empty())
    throw std::invalid_argument("svg: no rows to plot");
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool first = true;
  std::map<std::string, int> series;
  for (const auto& row : table.rows) {
    const double x = parse_number(row[static_cast<std::size_t>(xi)], x_col);
    const double y = parse_number(row[static_cast<std::size_t>(yi)], y_col);
    if (first) {
      xmin = xmax = x;
      ymin = ymax = y;
      first = false;
    } else {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
    if (si >= 0) {
      const auto& key = row[static_cast<std::size_t>(si)];
      if (!series.count(key))
        series.emplace(key, static_cast<int>(series.size()));
    }
  }
  const AxisRange xr = pad_range(xmin, xmax);
  const AxisRange yr = pad_range(ymin, ymax);
  std::ostringstream os;
  svg_open(os, title);
  svg_axes(os, xr, yr, x_col, y_col);
  for (const auto& row : table.rows) {
    const double x = parse_number(row[static_cast<std::size_t>(xi)], x_col);
    const double y = parse_number(row[static_cast<std::size_t>(yi)], y_col);
    int color = 0;
    if (si >= 0) color = series.at(row[static_cast<std::size_t>(si)]);
    os << "<circle cx=\"" << fmt_coord(xr.scale(x, kLeft, kWidth - kRight))
       << "\" cy=\""
       << fmt_coord(yr.scale(y, kHeight - kBottom, kTop)) << "\" r=\"3\" "
       << "fill=\"" << kPalette[color % kPaletteSize]
       << "\" fill-opacity=\"0.75\"/>\n";
  }
  int li = 0;
  for (const auto& [name, idx] : series) {
    const double ly = kTop + 8 + 16 * li++;
    os << "<rect x=\"" << kWidth - kRight - 130 << "\" y=\""
       << fmt_coord(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[idx % kPaletteSize] << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 116 << "\" y=\"" << fmt_coord(ly)
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">"
       << name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_bars_svg(const CsvTable& table, const std::string& title,
                            const std::string& category_col,
                            const std::vector<std::string>& value_cols) {
  const int ci = column_index(table, category_col);
  std::vector<int> vis;
  for (const auto& c : value_cols) vis.push_back(column_index(table, c));
  if (table.rows.empty())
    throw std::invalid_argument("svg: no rows to plot");
  double vmax = 0.0, vmin = 0.0;
  for (const auto& row : table.rows)
    for (std::size_t k = 0; k < vis.size(); ++k) {
      const double v = parse_number(
          row[static_cast<std::size_t>(vis[k])], value_cols[k]);
      vmax = std::max(vmax, v);
      vmin = std::min(vmin, v);
    }
  const AxisRange yr = pad_range(std::min(0.0, vmin), vmax);
  const double plot_w = kWidth - kLeft - kRight;
  const double group_w = plot_w / static_cast<double>(table.rows.size());
  const double bar_w =
      0.8 * group_w / static_cast<double>(vis.size());
  std::ostringstream os;
  svg_open(os, title);
  // y axis only; categories label the x axis directly
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft
     << "\" y2=\"" << kHeight - kBottom << "\" stroke=\"#555555\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom
     << "\" x2=\"" << kWidth - kRight << "\" y2=\"" << kHeight - kBottom
     << "\" stroke=\"#555555\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    const double py = yr.scale(fy, kHeight - kBottom, kTop);
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt_coord(py + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" "
          "fill=\"#333333\">"
       << fmt_label(fy) << "</text>\n";
  }
  const double base_y = yr.scale(0.0, kHeight - kBottom, kTop);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const double gx = kLeft + group_w * (static_cast<double>(r) + 0.1);
    for (std::size_t k = 0; k < vis.size(); ++k) {
      const double v = parse_number(
          row[static_cast<std::size_t>(vis[k])], value_cols[k]);
      const double py = yr.scale(v, kHeight - kBottom, kTop);
      const double top = std::min(py, base_y);
      const double h = std::abs(base_y - py);
      os << "<rect x=\"" << fmt_coord(gx + bar_w * static_cast<double>(k))
         << "\" y=\"" << fmt_coord(top) << "\" width=\"" << fmt_coord(bar_w)
         << "\" height=\"" << fmt_coord(h) << "\" fill=\""
         << kPalette[k % kPaletteSize] << "\"/>\n";
    }
    os << "<text x=\"" << fmt_coord(gx + 0.4 * group_w) << "\" y=\""
       << kHeight - kBottom + 16
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          "font-size=\"11\" fill=\"#333333\">"
       << row[static_cast<std::size_t>(ci)] << "</text>\n";
  }
  for (std::size_t k = 0; k < value_cols.size(); ++k) {
    const double ly = kTop + 8 + 16 * static_cast<double>(k);
    os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\""
       << fmt_coord(ly - 8) << "\" width=\"10\" height=\"10\" fill=\""
       << kPalette[k % kPaletteSize] << "\"/>\n";
    os << "<text x=\"" << kWidth - kRight - 136 << "\" y=\"" << fmt_coord(ly)
       << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">"
       << value_cols[k] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace diffce
