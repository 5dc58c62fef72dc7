#pragma once

#include <string>
#include <vector>

namespace diffce {

// Shortest-exact double formatting used in every CSV ("%.17g"); the same
// bytes come out for the same value on every run.
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Minimal CSV dialect: comma separator, "\n" line endings, no quoting.
// Fields containing a comma, quote or newline are rejected rather than
// escaped, so serialize/parse round-trips are trivially exact.
std::string csv_serialize(const CsvTable& table);
CsvTable csv_parse(const std::string& text);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// The SVG renderers are pure functions of parsed CSV content, so a report
// regenerated from the same CSV bytes is itself byte-identical.

// Scatter plot of two numeric columns, optionally colored by a series
// column.
std::string render_scatter_svg(const CsvTable& table, const std::string& title,
                               const std::string& x_col,
                               const std::string& y_col,
                               const std::string& series_col = "");

// Grouped bars: one group per row (labeled by category_col), one bar per
// value column.
std::string render_bars_svg(const CsvTable& table, const std::string& title,
                            const std::string& category_col,
                            const std::vector<std::string>& value_cols);

}  // namespace diffce
