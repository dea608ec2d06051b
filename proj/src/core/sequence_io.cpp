#include "cehr/sequence_io.hpp"

#include <json.hpp>

#include "cehr/error.hpp"

namespace cehr::io {

using nlohmann::json;

std::string to_jsonl_line(const codec::TokenSequence& seq) {
  json j;
  j["person_id"] = seq.person_id ? json(*seq.person_id) : json(nullptr);
  auto& arr = j["tokens"] = json::array();
  for (const auto& t : seq.tokens) arr.push_back(codec::to_string(t));
  return j.dump();
}

std::optional<codec::TokenSequence> parse_jsonl_line(std::string_view line, std::string* error) {
  auto set_error = [&](std::string msg) {
    if (error) *error = std::move(msg);
    return std::nullopt;
  };
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return set_error("not a JSON object");
  codec::TokenSequence seq;
  if (auto it = j.find("person_id"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) return set_error("person_id must be an integer or null");
    seq.person_id = it->get<std::int64_t>();
  }
  auto tokens = j.find("tokens");
  if (tokens == j.end() || !tokens->is_array()) return set_error("missing tokens array");
  seq.tokens.reserve(tokens->size());
  for (const auto& t : *tokens) {
    if (!t.is_string()) return set_error("token is not a string");
    auto tok = codec::parse_token(t.get_ref<const std::string&>());
    if (!tok) return set_error("unknown token " + t.get<std::string>());
    seq.tokens.push_back(*tok);
  }
  return seq;
}

SequenceReader::SequenceReader(const std::filesystem::path& path) : in_(path) {
  if (!in_) fail(ErrorCode::Io, "cannot open " + path.string());
}

bool SequenceReader::next(codec::TokenSequence& seq) {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (auto parsed = parse_jsonl_line(line, &last_error_)) {
      seq = std::move(*parsed);
      return true;
    }
    ++malformed_;
  }
  return false;
}

SequenceWriter::SequenceWriter(const std::filesystem::path& path) : out_(path, std::ios::trunc) {
  if (!out_) fail(ErrorCode::Io, "cannot write " + path.string());
}

void SequenceWriter::write(const codec::TokenSequence& seq) {
  out_ << to_jsonl_line(seq) << '\n';
  ++written_;
}

std::vector<codec::TokenSequence> read_corpus(const std::filesystem::path& path, std::size_t* malformed) {
  SequenceReader reader(path);
  std::vector<codec::TokenSequence> out;
  codec::TokenSequence seq;
  while (reader.next(seq)) out.push_back(std::move(seq));
  if (malformed) *malformed = reader.malformed();
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<codec::TokenSequence>& corpus) {
  SequenceWriter w(path);
  for (const auto& s : corpus) w.write(s);
  w.flush();
}

}  // namespace cehr::io
