#include "cehr/codec.hpp"
#include "cehr/error.hpp"

namespace cehr::codec {

namespace {

constexpr std::int64_t kDayCap = 1080;

std::int64_t unit_of(TokenKind k) {
  switch (k) {
    case TokenKind::Day: return 1;
    case TokenKind::Week: return 7;
    case TokenKind::Month: return 30;
    default: return 0;
  }
}

}  // namespace

std::string_view scheme_label(SchemeName s) {
  switch (s) {
    case SchemeName::CehrGpt: return "cehr-gpt";
    case SchemeName::GptOutpat: return "gpt-outpat";
    case SchemeName::CehrBert: return "cehr-bert";
    case SchemeName::Vanilla: return "vanilla";
    case SchemeName::Custom: return "custom";
  }
  return "?";
}

std::optional<SchemeName> parse_scheme(std::string_view label) {
  for (auto s : {SchemeName::CehrGpt, SchemeName::GptOutpat, SchemeName::CehrBert, SchemeName::Vanilla})
    if (scheme_label(s) == label) return s;
  return std::nullopt;
}

AttScheme AttScheme::cehr_gpt() {
  AttScheme s = gpt_outpat();
  s.name_ = SchemeName::CehrGpt;
  s.inpatient_days_ = true;
  return s;
}

AttScheme AttScheme::gpt_outpat() {
  AttScheme s;
  s.name_ = SchemeName::GptOutpat;
  s.bands_ = {{TokenKind::Day, 0, kDayCap + 1}, {TokenKind::LongTerm, kDayCap + 1, Band::kOpen}};
  s.long_term_days_ = kDayCap;
  s.discharge_ = true;
  return s;
}

AttScheme AttScheme::cehr_bert() {
  AttScheme s;
  s.name_ = SchemeName::CehrBert;
  s.bands_ = {{TokenKind::Day, 0, 7},
              {TokenKind::Week, 7, 30},
              {TokenKind::Month, 30, 360},
              {TokenKind::LongTerm, 360, Band::kOpen}};
  s.long_term_days_ = 360;
  return s;
}

AttScheme AttScheme::vanilla() {
  AttScheme s;
  s.name_ = SchemeName::Vanilla;
  return s;
}

AttScheme AttScheme::named(SchemeName name) {
  switch (name) {
    case SchemeName::CehrGpt: return cehr_gpt();
    case SchemeName::GptOutpat: return gpt_outpat();
    case SchemeName::CehrBert: return cehr_bert();
    case SchemeName::Vanilla: return vanilla();
    case SchemeName::Custom: break;
  }
  fail(ErrorCode::InvalidArgument, "custom schemes are built with AttScheme::custom");
}

AttScheme AttScheme::custom(std::vector<Band> bands, std::int64_t long_term_days, bool discharge) {
  if (bands.empty()) fail(ErrorCode::InvalidArgument, "custom scheme needs at least one band");
  std::int64_t expect = 0;
  for (const auto& b : bands) {
    if (b.lo != expect || b.hi <= b.lo) fail(ErrorCode::InvalidArgument, "bands must tile [0, inf) in order");
    if (b.kind != TokenKind::LongTerm && unit_of(b.kind) == 0)
      fail(ErrorCode::InvalidArgument, "band kind must be Day, Week, Month or LongTerm");
    expect = b.hi;
  }
  if (expect != Band::kOpen) fail(ErrorCode::InvalidArgument, "last band must be open-ended");
  AttScheme s;
  s.name_ = SchemeName::Custom;
  s.bands_ = std::move(bands);
  s.long_term_days_ = long_term_days;
  s.discharge_ = discharge;
  return s;
}

std::optional<Token> AttScheme::encode(std::int64_t days, IntervalContext context) const {
  if (days < 0) fail(ErrorCode::InvalidArgument, "negative interval");
  if (context == IntervalContext::WithinInpatient) {
    if (!inpatient_days_) fail(ErrorCode::InvalidArgument, std::string(label()) + " has no inpatient interval tokens");
    return Token{TokenKind::InpatientDay, days};
  }
  if (bands_.empty()) return std::nullopt;
  for (const auto& b : bands_) {
    if (days < b.lo || days >= b.hi) continue;
    if (b.kind == TokenKind::LongTerm) return Token{TokenKind::LongTerm, 0};
    return Token{b.kind, days / unit_of(b.kind)};
  }
  fail(ErrorCode::InvalidArgument, "interval outside every band");
}

std::int64_t AttScheme::decode(const Token& token) const {
  switch (token.kind) {
    case TokenKind::Day:
    case TokenKind::Week:
    case TokenKind::Month: return token.payload * unit_of(token.kind);
    case TokenKind::InpatientDay: return token.payload;
    case TokenKind::LongTerm: return long_term_days_;
    default: fail(ErrorCode::InvalidArgument, "not an interval token: " + to_string(token));
  }
}

bool AttScheme::admits(const Token& token) const {
  if (token.kind == TokenKind::InpatientDay) return inpatient_days_ && token.payload >= 0;
  if (!is_interval(token.kind)) return false;
  for (const auto& b : bands_) {
    if (b.kind != token.kind) continue;
    if (b.kind == TokenKind::LongTerm) return true;
    if (token.payload < 0) return false;
    const std::int64_t unit = unit_of(b.kind);
    // The token covers [payload*unit, payload*unit + unit); it is admissible
    // when that range meets this band.
    const std::int64_t lo = token.payload * unit, hi = lo + unit;
    if (lo < b.hi && hi > b.lo) return true;
  }
  return false;
}

std::optional<Token> att_encode(const AttScheme& scheme, std::int64_t days, IntervalContext context) {
  return scheme.encode(days, context);
}

std::int64_t att_decode(const AttScheme& scheme, const Token& token) { return scheme.decode(token); }

}  // namespace cehr::codec
