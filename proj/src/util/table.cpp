#include "vidctl/util/table.hpp"

#include <sstream>

namespace vidctl::util {

namespace {
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}
}  // namespace

Table read_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open table: " + path);
  Table t;
  std::string line;
  if (std::getline(f, line)) t.columns = split_csv(line);
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    t.rows.push_back(split_csv(line));
  }
  return t;
}

std::string fmt_num(double v, int precision) {
  std::ostringstream ss;
  ss.precision(precision);
  ss << v;
  return ss.str();
}

}  // namespace vidctl::util
