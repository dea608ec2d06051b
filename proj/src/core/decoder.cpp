#include "cehr/codec.hpp"
#include "cehr/error.hpp"

namespace cehr::codec {

omop::PatientHistory decode_patient(const TokenSequence& seq, const Representation& rep, IdAllocator& ids,
                                    const ConceptDomains& domains, DecodeStats* stats) {
  if (auto v = validate_sequence(seq, rep); !v) {
    fail(ErrorCode::Grammar, "cannot decode sequence: " + std::string(reason_name(v.reason)) + " at token " +
                                 std::to_string(v.position));
  }
  const auto& t = seq.tokens;
  omop::PatientHistory h;
  h.person.person_id = seq.person_id ? *seq.person_id : ids.next_person++;
  const int year = static_cast<int>(t[0].payload);
  h.person.year_of_birth = year - static_cast<int>(t[1].payload);
  h.person.gender = t[2].payload;
  h.person.race = t[3].payload;

  omop::Date cursor = omop::january_first(year);
  omop::VisitRecord* open = nullptr;

  auto open_visit = [&]() {
    h.visits.push_back(omop::VisitRecord{ids.next_visit++, h.person.person_id, 0, cursor, cursor, std::nullopt});
    open = &h.visits.back();
  };

  for (std::size_t i = 4; i < t.size(); ++i) {
    const Token& tok = t[i];
    switch (tok.kind) {
      case TokenKind::Day:
      case TokenKind::Week:
      case TokenKind::Month:
      case TokenKind::LongTerm:
        cursor += std::chrono::days{rep.scheme.decode(tok)};
        break;
      case TokenKind::VisitStart: open_visit(); break;
      case TokenKind::VisitType:
        if (!rep.scheme.has_visit_blocks()) open_visit();
        open->visit_type = tok.payload;
        break;
      case TokenKind::Concept: {
        omop::Domain d = omop::Domain::Condition;
        auto it = domains.find(tok.payload);
        if (it != domains.end() && (it->second == omop::Domain::Condition || it->second == omop::Domain::Drug ||
                                    it->second == omop::Domain::Procedure)) {
          d = it->second;
        } else if (stats) {
          ++stats->unknown_domain_concepts;
        }
        h.events.push_back(omop::DomainRecord{h.person.person_id, open->visit_id, d, tok.payload, cursor});
        break;
      }
      case TokenKind::InpatientDay: cursor += std::chrono::days{tok.payload}; break;
      case TokenKind::Discharge:
        if (tok.payload != 0) open->discharge = tok.payload;
        open->end = cursor;
        break;
      case TokenKind::VisitEnd:
        open->end = cursor;
        open = nullptr;
        break;
      default: break;
    }
  }
  return h;
}

}  // namespace cehr::codec
