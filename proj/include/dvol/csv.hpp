#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace dvol {

// Reads physical lines, strips trailing \r, counts 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_number_;
    return true;
  }

  std::size_t line_number() const { return line_number_; }

 private:
  std::istream& in_;
  std::size_t line_number_ = 0;
};

// RFC-4180-style field split: double quotes delimit fields that contain the
// delimiter, quotes are escaped by doubling. Reuses the output vector.
inline void split_csv(std::string_view line, std::vector<std::string>& out,
                      char delim = ',') {
  out.clear();
  std::size_t i = 0;
  const std::size_t n = line.size();
  while (true) {
    std::string field;
    if (i < n && line[i] == '"') {
      ++i;
      while (i < n) {
        if (line[i] == '"') {
          if (i + 1 < n && line[i + 1] == '"') {
            field.push_back('"');
            i += 2;
          } else {
            ++i;
            break;
          }
        } else {
          field.push_back(line[i++]);
        }
      }
    } else {
      const std::size_t start = i;
      while (i < n && line[i] != delim) ++i;
      field.assign(line, start, i - start);
    }
    out.push_back(std::move(field));
    if (i >= n) break;
    ++i;  // skip delimiter
    if (i == n) {  // trailing delimiter -> empty last field
      out.emplace_back();
      break;
    }
  }
}

inline std::string csv_escape(std::string_view field, char delim = ',') {
  const bool needs_quotes =
      field.find(delim) != std::string_view::npos ||
      field.find('"') != std::string_view::npos ||
      field.find('\n') != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void write_csv_row(std::ostream& os, const std::vector<std::string>& fields,
                          char delim = ',') {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) os << delim;
    os << csv_escape(fields[i], delim);
  }
  os << '\n';
}

}  // namespace dvol
