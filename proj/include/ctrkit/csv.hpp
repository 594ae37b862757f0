#pragma once

#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "ctrkit/common.hpp"

namespace ctrkit {

// Minimal CSV support: comma separated, no quoting (none of the consumed
// tables quote fields), first line is a header. Empty string = absent value.

struct CsvError {
  std::size_t line_no;  // 1-based, header is line 1
  std::string reason;
};

class CsvReader {
 public:
  explicit CsvReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw ValidationError("cannot open file: " + path);
    std::string header;
    if (!std::getline(in_, header)) {
      throw ValidationError("empty file: " + path);
    }
    header_ = split(strip(header), ',');
    line_no_ = 1;
  }

  const std::vector<std::string>& header() const { return header_; }
  const std::string& path() const { return path_; }
  std::size_t line_no() const { return line_no_; }

  // Reads the next row into `fields`. Returns false at EOF. Rows whose
  // column count disagrees with the header are reported through the error
  // callback and skipped; the stream continues.
  bool next(std::vector<std::string>& fields,
            const std::function<void(const CsvError&)>& on_error) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      std::string s = strip(line);
      if (s.empty()) continue;
      fields = split(s, ',');
      if (fields.size() != header_.size()) {
        on_error({line_no_, "expected " + std::to_string(header_.size()) +
                                " columns, got " + std::to_string(fields.size())});
        continue;
      }
      return true;
    }
    return false;
  }

 private:
  std::ifstream in_;
  std::string path_;
  std::vector<std::string> header_;
  std::size_t line_no_ = 0;
};

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path) {
    if (!out_) throw ValidationError("cannot open file for writing: " + path);
    write_row(header);
  }

  void write_row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

}  // namespace ctrkit
