#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "cehr/codec.hpp"

namespace cehr::io {

/// One JSON Lines record: {"person_id": int|null, "tokens": [string]}.
std::string to_jsonl_line(const codec::TokenSequence& seq);
/// Parses one record. On failure returns nullopt and fills `error`.
std::optional<codec::TokenSequence> parse_jsonl_line(std::string_view line, std::string* error = nullptr);

/// Streams records from a JSONL file; malformed lines are skipped and counted.
class SequenceReader {
 public:
  explicit SequenceReader(const std::filesystem::path& path);
  bool next(codec::TokenSequence& seq);
  std::size_t line() const { return line_; }
  std::size_t malformed() const { return malformed_; }
  const std::string& last_error() const { return last_error_; }

 private:
  std::ifstream in_;
  std::size_t line_ = 0;
  std::size_t malformed_ = 0;
  std::string last_error_;
};

class SequenceWriter {
 public:
  explicit SequenceWriter(const std::filesystem::path& path);
  void write(const codec::TokenSequence& seq);
  std::size_t written() const { return written_; }
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t written_ = 0;
};

std::vector<codec::TokenSequence> read_corpus(const std::filesystem::path& path, std::size_t* malformed = nullptr);
void write_corpus(const std::filesystem::path& path, const std::vector<codec::TokenSequence>& corpus);

}  // namespace cehr::io
