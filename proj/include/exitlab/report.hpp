#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

namespace exitlab {

using Cell = std::variant<std::string, double, std::int64_t>;

/// Formats doubles with 12 significant digits ("nan"/"inf" for non-finite).
std::string format_cell(const Cell& cell);

/// Rows of cells under named columns, rendered as CSV.
class Table {
 public:
  Table() = default;
  explicit Table(std::vector<std::string> columns);

  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<Cell>>& rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }

  void add(std::vector<Cell> row);
  std::size_t column(const std::string& name) const;
  const Cell& at(std::size_t row, const std::string& name) const;
  double number(std::size_t row, const std::string& name) const;
  std::string text(std::size_t row, const std::string& name) const;
  /// Indices of rows whose text column `name` equals `value`.
  std::vector<std::size_t> where(const std::string& name, const std::string& value) const;

  std::string to_csv() const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<Cell>> rows_;
};

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  /// Optional error bars; empty when the series is a plain curve.
  std::vector<double> low;
  std::vector<double> high;
  bool markers = true;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Standalone SVG line chart with error bars and a legend.
std::string render_svg(const Plot& plot);

void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace exitlab
