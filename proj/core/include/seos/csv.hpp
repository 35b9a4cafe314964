#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace seos {

// 17 significant digits; infinities as "inf" / "-inf".
std::string format_double(double x);

struct Table {
  std::vector<std::string> metadata;  // written as "# " lines
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void write(std::ostream& os) const;
  void write_file(const std::string& path) const;
};

// Reads back a table written by Table::write; '#' lines go to metadata.
Table read_table(std::istream& is);

}  // namespace seos
