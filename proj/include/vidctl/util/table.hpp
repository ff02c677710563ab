#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vidctl::util {

// Line-delimited metric/report tables: one header row, comma-separated
// columns, one record per line. Used for training logs, evaluation reports,
// and plot-ready curves.
class TableWriter {
 public:
  TableWriter(const std::string& path, std::vector<std::string> columns)
      : columns_(std::move(columns)), out_(path) {
    if (!out_) throw std::runtime_error("cannot open table for writing: " + path);
    for (size_t i = 0; i < columns_.size(); ++i) {
      out_ << columns_[i];
      if (i + 1 < columns_.size()) out_ << ",";
    }
    out_ << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_.size())
      throw std::invalid_argument("TableWriter: column count mismatch");
    for (size_t i = 0; i < cells.size(); ++i) {
      out_ << cells[i];
      if (i + 1 < cells.size()) out_ << ",";
    }
    out_ << "\n";
    out_.flush();
  }

  const std::vector<std::string>& columns() const { return columns_; }

 private:
  std::vector<std::string> columns_;
  std::ofstream out_;
};

struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::out_of_range("Table: no column " + name);
  }
  double num(size_t row, const std::string& col) const {
    return std::stod(rows.at(row).at(column_index(col)));
  }
};

Table read_table(const std::string& path);

std::string fmt_num(double v, int precision = 6);

}  // namespace vidctl::util
