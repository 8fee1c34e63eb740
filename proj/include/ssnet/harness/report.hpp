#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "ssnet/error.hpp"

namespace ssnet::harness {

// Numbers in reports use 6 significant digits.
inline std::string fmt6(double v) {
  std::ostringstream out;
  out << std::setprecision(6) << v;
  return out.str();
}

// Rows of tab-separated cells.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  Table& row(std::vector<std::string> cells) {
    rows_.push_back(std::move(cells));
    return *this;
  }

  std::string str() const {
    std::ostringstream out;
    write_row(out, header_);
    for (const auto& r : rows_) write_row(out, r);
    return out.str();
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report: " + path.string());
    out << str();
  }

 private:
  static void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "\t" : "") << cells[i];
    out << '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

// Square matrix with class names as the column header and the first column.
template <typename Cell>
Table matrix_table(const std::vector<std::string>& names, std::size_t n, Cell cell, const std::string& corner = "") {
  std::vector<std::string> header{corner};
  header.insert(header.end(), names.begin(), names.end());
  Table t(std::move(header));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> r{names[i]};
    for (std::size_t j = 0; j < n; ++j) r.push_back(cell(i, j));
    t.row(std::move(r));
  }
  return t;
}

}  // namespace ssnet::harness
