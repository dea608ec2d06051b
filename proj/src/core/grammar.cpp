#include "cehr/codec.hpp"

namespace cehr::codec {

using Phase = GrammarState::Phase;

std::string_view reason_name(RejectReason r) {
  switch (r) {
    case RejectReason::None: return "None";
    case RejectReason::EmptySequence: return "EmptySequence";
    case RejectReason::ExpectedYear: return "ExpectedYear";
    case RejectReason::ExpectedAge: return "ExpectedAge";
    case RejectReason::ExpectedGender: return "ExpectedGender";
    case RejectReason::ExpectedRace: return "ExpectedRace";
    case RejectReason::ExpectedVisitStart: return "ExpectedVisitStart";
    case RejectReason::ExpectedVisitType: return "ExpectedVisitType";
    case RejectReason::ExpectedInterval: return "ExpectedInterval";
    case RejectReason::EmptyVisit: return "EmptyVisit";
    case RejectReason::UnexpectedToken: return "UnexpectedToken";
    case RejectReason::UnclosedVisit: return "UnclosedVisit";
    case RejectReason::DischargeOutsideInpatient: return "DischargeOutsideInpatient";
    case RejectReason::InpatientIntervalOutsideInpatient: return "InpatientIntervalOutsideInpatient";
    case RejectReason::MissingDischarge: return "MissingDischarge";
    case RejectReason::ExpectedVisitEnd: return "ExpectedVisitEnd";
    case RejectReason::IntervalNotInScheme: return "IntervalNotInScheme";
    case RejectReason::PayloadOutOfRange: return "PayloadOutOfRange";
    case RejectReason::UnexpectedEnd: return "UnexpectedEnd";
  }
  return "?";
}

namespace {

bool year_ok(std::int64_t y) { return y >= 1000 && y <= 9999; }
bool age_ok(std::int64_t a) { return a >= 0 && a <= 120; }

}  // namespace

RejectReason GrammarState::check(const Token& t) const {
  const auto& scheme = rep_->scheme;
  const bool vanilla = !scheme.has_visit_blocks();
  switch (phase_) {
    case Phase::ExpectYear:
      if (t.kind != TokenKind::Year) return RejectReason::ExpectedYear;
      return year_ok(t.payload) ? RejectReason::None : RejectReason::PayloadOutOfRange;
    case Phase::ExpectAge:
      if (t.kind != TokenKind::Age) return RejectReason::ExpectedAge;
      return age_ok(t.payload) ? RejectReason::None : RejectReason::PayloadOutOfRange;
    case Phase::ExpectGender:
      return t.kind == TokenKind::Gender ? RejectReason::None : RejectReason::ExpectedGender;
    case Phase::ExpectRace:
      return t.kind == TokenKind::Race ? RejectReason::None : RejectReason::ExpectedRace;
    case Phase::ExpectVisitStart:
      if (vanilla) return t.kind == TokenKind::VisitType ? RejectReason::None : RejectReason::ExpectedVisitType;
      return t.kind == TokenKind::VisitStart ? RejectReason::None : RejectReason::ExpectedVisitStart;
    case Phase::ExpectVisitType:
      return t.kind == TokenKind::VisitType ? RejectReason::None : RejectReason::ExpectedVisitType;
    case Phase::InOutpatientBlock:
    case Phase::InInpatientBlock: {
      const bool inpatient = phase_ == Phase::InInpatientBlock;
      if (t.kind == TokenKind::Concept) return RejectReason::None;
      if (needs_concept_) {
        if (t.kind == TokenKind::VisitEnd || t.kind == TokenKind::Discharge || t.kind == TokenKind::InpatientDay)
          return RejectReason::EmptyVisit;
        if (vanilla && t.kind == TokenKind::VisitType) return RejectReason::EmptyVisit;
        return RejectReason::UnexpectedToken;
      }
      if (vanilla) return t.kind == TokenKind::VisitType ? RejectReason::None : RejectReason::UnexpectedToken;
      switch (t.kind) {
        case TokenKind::VisitEnd:
          return inpatient && scheme.has_discharge() ? RejectReason::MissingDischarge : RejectReason::None;
        case TokenKind::Discharge:
          if (!inpatient || !scheme.has_discharge()) return RejectReason::DischargeOutsideInpatient;
          return RejectReason::None;
        case TokenKind::InpatientDay:
          if (!inpatient || !scheme.has_inpatient_map()) return RejectReason::InpatientIntervalOutsideInpatient;
          return t.payload >= 0 ? RejectReason::None : RejectReason::PayloadOutOfRange;
        case TokenKind::Day:
        case TokenKind::Week:
        case TokenKind::Month:
        case TokenKind::LongTerm:
        case TokenKind::VisitStart: return RejectReason::UnclosedVisit;
        default: return RejectReason::UnexpectedToken;
      }
    }
    case Phase::ExpectVisitEnd:
      return t.kind == TokenKind::VisitEnd ? RejectReason::None : RejectReason::ExpectedVisitEnd;
    case Phase::ExpectIntervalOrEnd:
      if (!is_interval(t.kind)) return RejectReason::ExpectedInterval;
      return scheme.admits(t) ? RejectReason::None : RejectReason::IntervalNotInScheme;
    case Phase::Done: return RejectReason::UnexpectedToken;
  }
  return RejectReason::UnexpectedToken;
}

RejectReason GrammarState::advance(const Token& t) {
  auto r = check(t);
  if (r != RejectReason::None) {
    phase_ = Phase::Done;
    return r;
  }
  ++consumed_;
  const bool vanilla = !rep_->scheme.has_visit_blocks();
  switch (phase_) {
    case Phase::ExpectYear: phase_ = Phase::ExpectAge; break;
    case Phase::ExpectAge: phase_ = Phase::ExpectGender; break;
    case Phase::ExpectGender: phase_ = Phase::ExpectRace; break;
    case Phase::ExpectRace: phase_ = Phase::ExpectVisitStart; break;
    case Phase::ExpectVisitStart:
      if (vanilla) {
        phase_ = Phase::InOutpatientBlock;
        needs_concept_ = true;
      } else {
        phase_ = Phase::ExpectVisitType;
      }
      break;
    case Phase::ExpectVisitType:
      phase_ = rep_->is_inpatient(t.payload) && rep_->scheme.has_discharge() ? Phase::InInpatientBlock
                                                                            : Phase::InOutpatientBlock;
      needs_concept_ = true;
      break;
    case Phase::InOutpatientBlock:
    case Phase::InInpatientBlock:
      switch (t.kind) {
        case TokenKind::Concept: needs_concept_ = false; break;
        case TokenKind::InpatientDay: needs_concept_ = true; break;
        case TokenKind::Discharge: phase_ = Phase::ExpectVisitEnd; break;
        case TokenKind::VisitEnd: phase_ = Phase::ExpectIntervalOrEnd; break;
        case TokenKind::VisitType: needs_concept_ = true; break;  // vanilla: next visit
        default: break;
      }
      break;
    case Phase::ExpectVisitEnd: phase_ = Phase::ExpectIntervalOrEnd; break;
    case Phase::ExpectIntervalOrEnd: phase_ = Phase::ExpectVisitStart; break;
    case Phase::Done: break;
  }
  return RejectReason::None;
}

bool GrammarState::accepting() const { return end_reason() == RejectReason::None; }

RejectReason GrammarState::end_reason() const {
  const bool vanilla = !rep_->scheme.has_visit_blocks();
  switch (phase_) {
    case Phase::ExpectYear: return consumed_ == 0 ? RejectReason::EmptySequence : RejectReason::ExpectedYear;
    case Phase::ExpectAge: return RejectReason::ExpectedAge;
    case Phase::ExpectGender: return RejectReason::ExpectedGender;
    case Phase::ExpectRace: return RejectReason::ExpectedRace;
    case Phase::ExpectVisitStart:
      return vanilla ? RejectReason::ExpectedVisitType
                     : (consumed_ == 4 ? RejectReason::ExpectedVisitStart : RejectReason::UnexpectedEnd);
    case Phase::ExpectVisitType: return RejectReason::UnclosedVisit;
    case Phase::InOutpatientBlock:
      if (vanilla) return needs_concept_ ? RejectReason::EmptyVisit : RejectReason::None;
      return RejectReason::UnclosedVisit;
    case Phase::InInpatientBlock:
    case Phase::ExpectVisitEnd: return RejectReason::UnclosedVisit;
    case Phase::ExpectIntervalOrEnd: return RejectReason::None;
    case Phase::Done: return RejectReason::UnexpectedToken;
  }
  return RejectReason::UnexpectedToken;
}

Validation validate_sequence(const TokenSequence& seq, const Representation& rep) {
  GrammarState state(rep);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    auto r = state.advance(seq.tokens[i]);
    if (r != RejectReason::None) return Validation{false, r, i};
  }
  auto r = state.end_reason();
  if (r != RejectReason::None) return Validation{false, r, seq.tokens.size()};
  return Validation{};
}

std::vector<bool> next_token_mask(const GrammarState& state, std::span<const std::optional<Token>> vocab) {
  std::vector<bool> mask(vocab.size(), false);
  for (std::size_t i = 0; i < vocab.size(); ++i)
    if (vocab[i] && state.admits(*vocab[i])) mask[i] = true;
  return mask;
}

}  // namespace cehr::codec
