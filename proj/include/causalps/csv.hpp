#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace causalps {

// Minimal RFC-4180 reader: quoted fields, doubled quotes, CRLF line ends,
// newlines inside quoted fields. Returns rows of string cells; the caller
// interprets the header.
inline std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  std::size_t i = 0;
  const std::size_t n = content.size();
  auto end_cell = [&] {
    row.push_back(cell);
    cell.clear();
  };
  auto end_row = [&] {
    end_cell();
    rows.push_back(row);
    row.clear();
  };
  while (i < n) {
    const char c = content[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < n && content[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_cell();
    } else if (c == '\r') {
      // consumed with the following \n, or alone as a line end
      if (i + 1 < n && content[i + 1] == '\n') ++i;
      end_row();
    } else if (c == '\n') {
      end_row();
    } else {
      cell.push_back(c);
    }
    ++i;
  }
  if (quoted) throw std::runtime_error("unterminated quote in CSV: " + path);
  if (!cell.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

inline void write_csv(std::ostream& out,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out << ',';
    out << csv_escape(header[j]);
  }
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << csv_escape(row[j]);
    }
    out << '\n';
  }
}

inline void write_csv_file(const std::string& path,
                           const std::vector<std::string>& header,
                           const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  write_csv(out, header, rows);
}

// Shortest round-trip formatting so numeric output is byte-stable.
inline std::string format_double(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  std::string s = ss.str();
  // prefer the shortest representation that round-trips
  for (int prec = 1; prec < 17; ++prec) {
    std::ostringstream t;
    t.precision(prec);
    t << v;
    if (std::stod(t.str()) == v) return t.str();
  }
  return s;
}

}  // namespace causalps
