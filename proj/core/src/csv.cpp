#include "seos/csv.hpp"

#include "seos/types.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace seos {

std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void Table::write(std::ostream& os) const {
  for (const auto& m : metadata) os << "# " << m << '\n';
  for (std::size_t i = 0; i < columns.size(); ++i) os << (i ? "," : "") << columns[i];
  os << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << row[i];
    os << '\n';
  }
}

void Table::write_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  write(out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing output file: " + path);
}

Table read_table(std::istream& is) {
  Table t;
  std::string line;
  bool header = false;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(is, line)) {
    if (line.rfind("# ", 0) == 0) {
      t.metadata.push_back(line.substr(2));
    } else if (!header) {
      t.columns = split(line);
      header = true;
    } else if (!line.empty()) {
      t.rows.push_back(split(line));
    }
  }
  return t;
}

}  // namespace seos
