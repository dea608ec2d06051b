#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace cehr::csv {

/// RFC-4180 reader: comma separated, double-quote quoting with "" escapes,
/// quoted fields may span lines. Accepts LF and CRLF line endings.
class Reader {
 public:
  explicit Reader(const std::filesystem::path& path);

  const std::vector<std::string>& header() const { return header_; }
  /// Column index of `name` in the header, or -1.
  int column(std::string_view name) const;
  /// Reads the next record. Returns false at end of file.
  bool next(std::vector<std::string>& fields);
  /// 1-based line number where the last record started.
  std::size_t line() const { return record_line_; }

 private:
  bool read_record(std::vector<std::string>& fields);

  std::ifstream in_;
  std::vector<std::string> header_;
  std::size_t line_ = 0;
  std::size_t record_line_ = 0;
};

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path);
  void row(const std::vector<std::string>& fields);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
};

std::string quote_if_needed(std::string_view field);

}  // namespace cehr::csv
