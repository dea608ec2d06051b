#include <charconv>

#include "cehr/codec.hpp"

namespace cehr::codec {

namespace {

struct Spelling {
  std::string_view prefix;
  TokenKind kind;
  bool has_payload;
};

// Longer prefixes first so "iD:" is not read as "D:".
constexpr Spelling kSpellings[] = {
    {"iD:", TokenKind::InpatientDay, true}, {"DF:", TokenKind::Discharge, true}, {"VT:", TokenKind::VisitType, true},
    {"Y:", TokenKind::Year, true},          {"A:", TokenKind::Age, true},        {"G:", TokenKind::Gender, true},
    {"R:", TokenKind::Race, true},          {"C:", TokenKind::Concept, true},    {"D:", TokenKind::Day, true},
    {"W:", TokenKind::Week, true},          {"M:", TokenKind::Month, true},      {"VS", TokenKind::VisitStart, false},
    {"VE", TokenKind::VisitEnd, false},     {"LT", TokenKind::LongTerm, false},
};

}  // namespace

std::string to_string(const Token& t) {
  for (const auto& s : kSpellings) {
    if (s.kind != t.kind) continue;
    if (!s.has_payload) return std::string(s.prefix);
    return std::string(s.prefix) + std::to_string(t.payload);
  }
  return "?";
}

std::optional<Token> parse_token(std::string_view text) {
  for (const auto& s : kSpellings) {
    if (!text.starts_with(s.prefix)) continue;
    if (!s.has_payload) {
      if (text.size() != s.prefix.size()) return std::nullopt;
      return Token{s.kind, 0};
    }
    auto rest = text.substr(s.prefix.size());
    if (rest.empty()) return std::nullopt;
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), v);
    if (ec != std::errc() || ptr != rest.data() + rest.size()) return std::nullopt;
    return Token{s.kind, v};
  }
  return std::nullopt;
}

}  // namespace cehr::codec
