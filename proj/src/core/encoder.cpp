#include <algorithm>

#include "cehr/codec.hpp"
#include "cehr/error.hpp"

namespace cehr::codec {

namespace {

using omop::Date;
using omop::DomainRecord;
using omop::PatientHistory;

struct Block {
  const omop::VisitRecord* visit;
  std::vector<const DomainRecord*> events;  // (date, domain, concept) order
  Date first() const { return events.front()->date; }
  Date last() const { return events.back()->date; }
};

std::vector<Block> blocks_of(const PatientHistory& h) {
  std::unordered_map<std::int64_t, std::size_t> slot;
  std::vector<Block> blocks;
  std::vector<const omop::VisitRecord*> visits;
  for (const auto& v : h.visits) visits.push_back(&v);
  std::stable_sort(visits.begin(), visits.end(), [](auto* a, auto* b) {
    if (a->start != b->start) return a->start < b->start;
    return a->visit_id < b->visit_id;
  });
  for (auto* v : visits) {
    slot.emplace(v->visit_id, blocks.size());
    blocks.push_back(Block{v, {}});
  }
  for (const auto& e : h.events) {
    auto it = slot.find(e.visit_id);
    if (it != slot.end()) blocks[it->second].events.push_back(&e);
  }
  std::erase_if(blocks, [](const Block& b) { return b.events.empty(); });
  for (auto& b : blocks)
    std::stable_sort(b.events.begin(), b.events.end(), [](auto* a, auto* c) {
      if (a->date != c->date) return a->date < c->date;
      return omop::same_day_before(*a, *c);
    });
  return blocks;
}

// Where a block sits on the timeline as far as interval tokens are concerned.
// An outpatient block occupies its start date; an inpatient block spans its
// first to last event-group date.
struct Span {
  Date start;
  Date end;
};

Span span_of(const Block& b, const Representation& rep) {
  if (rep.is_inpatient(b.visit->visit_type)) return {b.first(), b.last()};
  return {b.visit->start, b.visit->start};
}

std::int64_t days_between(Date from, Date to) { return std::max<std::int64_t>(0, (to - from).count()); }

struct Encoded {
  TokenSequence seq;
  std::vector<std::size_t> boundaries;  // token count after each complete block
};

Encoded encode_full(const PatientHistory& h, const Representation& rep) {
  auto blocks = blocks_of(h);
  if (blocks.empty()) fail(ErrorCode::Data, "person " + std::to_string(h.person.person_id) + " has no visit with events");

  const auto& scheme = rep.scheme;
  Encoded out;
  auto& tok = out.seq.tokens;
  out.seq.person_id = h.person.person_id;

  const Span first = span_of(blocks.front(), rep);
  const int year = omop::year_of(first.start);
  tok.push_back({TokenKind::Year, year});
  tok.push_back({TokenKind::Age, year - h.person.year_of_birth});
  tok.push_back({TokenKind::Gender, h.person.gender});
  tok.push_back({TokenKind::Race, h.person.race});

  std::optional<Date> prev_end;
  for (const auto& b : blocks) {
    const Span span = span_of(b, rep);
    const bool inpatient = rep.is_inpatient(b.visit->visit_type);

    if (!scheme.has_visit_blocks()) {
      tok.push_back({TokenKind::VisitType, b.visit->visit_type});
      for (auto* e : b.events) tok.push_back({TokenKind::Concept, e->concept_id});
      out.boundaries.push_back(tok.size());
      continue;
    }

    if (prev_end) {
      auto att = scheme.encode(days_between(*prev_end, span.start), IntervalContext::BetweenVisit);
      tok.push_back(*att);
    }
    tok.push_back({TokenKind::VisitStart, 0});
    tok.push_back({TokenKind::VisitType, b.visit->visit_type});
    if (inpatient && scheme.has_inpatient_map()) {
      Date cursor = b.first();
      for (auto* e : b.events) {
        if (e->date != cursor) {
          tok.push_back(*scheme.encode(days_between(cursor, e->date), IntervalContext::WithinInpatient));
          cursor = e->date;
        }
        tok.push_back({TokenKind::Concept, e->concept_id});
      }
    } else {
      for (auto* e : b.events) tok.push_back({TokenKind::Concept, e->concept_id});
    }
    if (inpatient && scheme.has_discharge()) tok.push_back({TokenKind::Discharge, b.visit->discharge.value_or(0)});
    tok.push_back({TokenKind::VisitEnd, 0});
    out.boundaries.push_back(tok.size());
    prev_end = span.end;
  }
  return out;
}

}  // namespace

TokenSequence encode_patient(const PatientHistory& h, const Representation& rep, std::size_t max_len) {
  auto enc = encode_full(h, rep);
  auto& tokens = enc.seq.tokens;
  if (max_len > 0 && tokens.size() > max_len) {
    std::size_t keep = enc.boundaries.front();
    for (auto b : enc.boundaries)
      if (b <= max_len) keep = b;
    tokens.resize(keep);
  }
  return std::move(enc.seq);
}

std::size_t encoded_length(const PatientHistory& h, const Representation& rep) {
  try {
    return encode_full(h, rep).seq.tokens.size();
  } catch (const Error&) {
    return 0;
  }
}

void IntervalDistribution::add(std::int64_t days, IntervalContext context, std::uint64_t count) {
  (context == IntervalContext::BetweenVisit ? between : within)[days] += count;
}

std::uint64_t IntervalDistribution::total() const {
  std::uint64_t n = 0;
  for (auto& [t, c] : between) n += c;
  for (auto& [t, c] : within) n += c;
  return n;
}

double IntervalDistribution::mean() const {
  const auto n = total();
  if (n == 0) return 0.0;
  double s = 0.0;
  for (auto& [t, c] : between) s += double(t) * double(c);
  for (auto& [t, c] : within) s += double(t) * double(c);
  return s / double(n);
}

IntervalDistribution interval_distribution(std::span<const PatientHistory> histories, const Representation& rep) {
  IntervalDistribution dist;
  for (const auto& h : histories) {
    auto blocks = blocks_of(h);
    std::optional<Date> prev_end;
    for (const auto& b : blocks) {
      const Span span = span_of(b, rep);
      if (prev_end) dist.add(days_between(*prev_end, span.start), IntervalContext::BetweenVisit);
      if (rep.is_inpatient(b.visit->visit_type)) {
        Date cursor = b.first();
        for (auto* e : b.events) {
          if (e->date != cursor) {
            dist.add(days_between(cursor, e->date), IntervalContext::WithinInpatient);
            cursor = e->date;
          }
        }
      }
      prev_end = span.end;
    }
  }
  return dist;
}

}  // namespace cehr::codec
