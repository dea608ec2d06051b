#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "cehr/omop.hpp"

namespace cehr::codec {

using omop::ConceptId;

enum class TokenKind : std::uint8_t {
  Year,          // Y:<yyyy>
  Age,           // A:<n>
  Gender,        // G:<concept>
  Race,          // R:<concept>
  VisitStart,    // VS
  VisitEnd,      // VE
  VisitType,     // VT:<concept>
  Concept,       // C:<concept>
  Day,           // D:<n>   between-visit interval in days
  Week,          // W:<k>
  Month,         // M:<k>
  LongTerm,      // LT
  InpatientDay,  // iD:<n>  interval between same-day groups inside an inpatient visit
  Discharge,     // DF:<concept>
};

struct Token {
  TokenKind kind = TokenKind::VisitStart;
  std::int64_t payload = 0;

  friend bool operator==(const Token&, const Token&) = default;
  friend auto operator<=>(const Token&, const Token&) = default;
};

inline bool is_interval(TokenKind k) {
  return k == TokenKind::Day || k == TokenKind::Week || k == TokenKind::Month || k == TokenKind::LongTerm;
}

std::string to_string(const Token& t);
std::optional<Token> parse_token(std::string_view text);

struct TokenSequence {
  std::optional<std::int64_t> person_id;
  std::vector<Token> tokens;
  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

enum class IntervalContext { BetweenVisit, WithinInpatient };

enum class SchemeName { CehrGpt, GptOutpat, CehrBert, Vanilla, Custom };

std::string_view scheme_label(SchemeName s);
std::optional<SchemeName> parse_scheme(std::string_view label);

/// One half-open band [lo, hi) of the between-visit interval map. Day bands
/// encode t exactly; week and month bands encode floor(t/7) and floor(t/30);
/// a long-term band collapses everything to a single token.
struct Band {
  TokenKind kind = TokenKind::Day;
  std::int64_t lo = 0;
  std::int64_t hi = 0;  // exclusive; kOpen for the last band
  static constexpr std::int64_t kOpen = INT64_MAX;
};

/// Mapping between day intervals and interval tokens, plus the structural
/// features a representation carries (inpatient intervals, discharge tokens,
/// visit blocks).
class AttScheme {
 public:
  static AttScheme cehr_gpt();
  static AttScheme gpt_outpat();
  static AttScheme cehr_bert();
  static AttScheme vanilla();
  static AttScheme named(SchemeName name);

  /// A custom scheme with the visit-block layout of CEHR-GPT minus inpatient
  /// intervals. `bands` must tile [0, inf) in order.
  static AttScheme custom(std::vector<Band> bands, std::int64_t long_term_days, bool discharge);

  SchemeName name() const { return name_; }
  std::string_view label() const { return scheme_label(name_); }

  bool has_visit_blocks() const { return !bands_.empty(); }
  bool has_inpatient_map() const { return inpatient_days_; }
  bool has_discharge() const { return discharge_; }
  const std::vector<Band>& bands() const { return bands_; }
  std::int64_t long_term_days() const { return long_term_days_; }

  /// The interval token for `days`, or nullopt when the scheme has no interval
  /// tokens at all (Vanilla). Throws InvalidArgument for negative days or for
  /// WithinInpatient on a scheme without an inpatient map.
  std::optional<Token> encode(std::int64_t days, IntervalContext context) const;
  /// Lower bound of the interval a token stands for. Throws for non-interval tokens.
  std::int64_t decode(const Token& token) const;
  /// True when `token` is the image of some interval under this scheme.
  bool admits(const Token& token) const;

 private:
  SchemeName name_ = SchemeName::Custom;
  std::vector<Band> bands_;
  std::int64_t long_term_days_ = 0;
  bool inpatient_days_ = false;
  bool discharge_ = false;
};

std::optional<Token> att_encode(const AttScheme& scheme, std::int64_t days, IntervalContext context);
std::int64_t att_decode(const AttScheme& scheme, const Token& token);

/// A scheme plus the knowledge of which visit types open an inpatient block.
struct Representation {
  AttScheme scheme = AttScheme::cehr_gpt();
  std::unordered_set<ConceptId> inpatient_types{omop::kInpatientVisit};

  bool is_inpatient(ConceptId visit_type) const { return inpatient_types.count(visit_type) > 0; }
};

// ---------------------------------------------------------------------------
// Grammar

enum class RejectReason {
  None,
  EmptySequence,
  ExpectedYear,
  ExpectedAge,
  ExpectedGender,
  ExpectedRace,
  ExpectedVisitStart,
  ExpectedVisitType,
  ExpectedInterval,
  EmptyVisit,
  UnexpectedToken,
  UnclosedVisit,
  DischargeOutsideInpatient,
  InpatientIntervalOutsideInpatient,
  MissingDischarge,
  ExpectedVisitEnd,
  IntervalNotInScheme,
  PayloadOutOfRange,
  UnexpectedEnd,
};

std::string_view reason_name(RejectReason r);

/// Incremental automaton over the representation language:
///   prompt  = Year Age Gender Race
///   seq     = prompt block (interval block)*
///   out     = VS VT Concept+ VE
///   in      = VS VT Concept+ (iD Concept+)* Discharge VE
/// Inpatient intervals and discharge tokens appear only when the scheme has
/// them; a Vanilla sequence is prompt (VT Concept+)+.
class GrammarState {
 public:
  enum class Phase {
    ExpectYear,
    ExpectAge,
    ExpectGender,
    ExpectRace,
    ExpectVisitStart,     // first block, or right after an interval token
    ExpectVisitType,
    InOutpatientBlock,
    InInpatientBlock,
    ExpectVisitEnd,       // after Discharge
    ExpectIntervalOrEnd,  // after VE
    Done,                 // a rejected token was consumed
  };

  explicit GrammarState(const Representation& rep) : rep_(&rep) {}

  Phase phase() const { return phase_; }
  /// Inside a visit block, true until the block has seen its first concept
  /// (or the first concept after an inpatient interval).
  bool needs_concept() const { return needs_concept_; }
  std::size_t consumed() const { return consumed_; }

  /// Reason `token` would be rejected here, or None.
  RejectReason check(const Token& token) const;
  bool admits(const Token& token) const { return check(token) == RejectReason::None; }
  /// Consumes `token`. Returns the rejection reason (and enters Done) when inadmissible.
  RejectReason advance(const Token& token);
  /// True when the tokens consumed so far form a complete sentence.
  bool accepting() const;
  /// Why ending the sequence here is not allowed (None when accepting).
  RejectReason end_reason() const;

 private:
  const Representation* rep_;
  Phase phase_ = Phase::ExpectYear;
  bool needs_concept_ = false;
  bool vanilla_visit_open_ = false;
  std::size_t consumed_ = 0;
};

struct Validation {
  bool accepted = true;
  RejectReason reason = RejectReason::None;
  std::size_t position = 0;  // index of the first offending token; tokens.size() for premature end
  explicit operator bool() const { return accepted; }
};

Validation validate_sequence(const TokenSequence& seq, const Representation& rep);

/// Admissibility mask over a vocabulary. Entries with no token (special
/// markers) are never admitted; callers handle end-of-sequence separately via
/// GrammarState::accepting().
std::vector<bool> next_token_mask(const GrammarState& state, std::span<const std::optional<Token>> vocab);

// ---------------------------------------------------------------------------
// Encoder / decoder

/// Encodes one history. Visits without events are skipped (a block needs at
/// least one concept). When `max_len` > 0 the sequence is post-truncated at the
/// last visit-block boundary that fits, keeping at least one block.
/// Throws Data when no visit carries an event.
TokenSequence encode_patient(const omop::PatientHistory& h, const Representation& rep, std::size_t max_len = 0);

/// Length of the untruncated encoding, or 0 when the history cannot be encoded.
std::size_t encoded_length(const omop::PatientHistory& h, const Representation& rep);

struct IdAllocator {
  std::int64_t next_person = 1;
  std::int64_t next_visit = 1;
};

using ConceptDomains = std::unordered_map<ConceptId, omop::Domain>;

struct DecodeStats {
  std::size_t unknown_domain_concepts = 0;  // concepts absent from the domain map, written as conditions
};

/// Rebuilds OMOP rows from a sequence accepted by validate_sequence. The
/// history starts on January 1 of the Year token and a date cursor advances on
/// every interval token. Throws Grammar for sequences the validator rejects.
omop::PatientHistory decode_patient(const TokenSequence& seq, const Representation& rep, IdAllocator& ids,
                                    const ConceptDomains& domains, DecodeStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Loss of temporal information

struct IntervalDistribution {
  std::map<std::int64_t, std::uint64_t> between;  // gap in days -> frequency
  std::map<std::int64_t, std::uint64_t> within;   // inpatient same-day-group gaps

  void add(std::int64_t days, IntervalContext context, std::uint64_t count = 1);
  std::uint64_t total() const;
  /// Expected interval length over both contexts.
  double mean() const;
};

/// Between-visit and within-inpatient intervals exactly as the encoder measures them.
IntervalDistribution interval_distribution(std::span<const omop::PatientHistory> histories,
                                           const Representation& rep);

/// Expected shrinkage E[T - G(F(T))]. Intervals a scheme cannot represent
/// (any interval under Vanilla, inpatient intervals without an inpatient map)
/// are lost entirely. Throws InvalidArgument on an empty distribution.
double loti(const AttScheme& scheme, const IntervalDistribution& dist);

}  // namespace cehr::codec
