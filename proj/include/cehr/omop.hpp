#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cehr::omop {

using Date = std::chrono::sys_days;
using ConceptId = std::int64_t;

/// Parses an ISO-8601 calendar date (YYYY-MM-DD). Returns nullopt on any malformed input.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(Date d);
int year_of(Date d);
Date january_first(int year);

enum class Domain : std::uint8_t { Condition, Drug, Procedure, Visit, Discharge, Gender, Race };

std::string_view domain_name(Domain d);
std::optional<Domain> parse_domain(std::string_view name);

/// Standard OMOP visit concepts used as defaults.
inline constexpr ConceptId kInpatientVisit = 9201;
inline constexpr ConceptId kOutpatientVisit = 9202;
inline constexpr ConceptId kEmergencyVisit = 9203;

struct PersonRecord {
  std::int64_t person_id = 0;
  int year_of_birth = 0;
  ConceptId gender = 0;
  ConceptId race = 0;
  friend bool operator==(const PersonRecord&, const PersonRecord&) = default;
};

struct VisitRecord {
  std::int64_t visit_id = 0;
  std::int64_t person_id = 0;
  ConceptId visit_type = 0;
  Date start{};
  Date end{};
  std::optional<ConceptId> discharge;
  friend bool operator==(const VisitRecord&, const VisitRecord&) = default;
};

/// A condition, drug or procedure row.
struct DomainRecord {
  std::int64_t person_id = 0;
  std::int64_t visit_id = 0;
  Domain domain = Domain::Condition;
  ConceptId concept_id = 0;
  Date date{};
  friend bool operator==(const DomainRecord&, const DomainRecord&) = default;
};

/// Total order used everywhere events on the same date must be serialized:
/// condition < drug < procedure, then concept id.
bool same_day_before(const DomainRecord& a, const DomainRecord& b);

struct PatientHistory {
  PersonRecord person;
  std::vector<VisitRecord> visits;   // by (start, visit_id)
  std::vector<DomainRecord> events;  // grouped by visit in visit order; chronological within a visit
};

/// Sorts visits and events into canonical order. Idempotent.
void canonicalize(PatientHistory& h);

enum class Provenance { Real, Synthetic };

struct LoadReport {
  std::size_t persons_rejected = 0;
  std::size_t visits_rejected = 0;
  std::size_t unknown_concepts_dropped = 0;  // concept id 0 in a domain table
  std::size_t integrity_rejected = 0;        // reference to an absent person/visit, or date outside visit
  std::size_t malformed_rows = 0;            // unparsable dates or numbers, wrong column count
  std::vector<std::string> files_read;
};

struct OmopDataset {
  std::vector<PersonRecord> persons;  // by person_id
  std::vector<VisitRecord> visits;    // by (person_id, start, visit_id)
  std::vector<DomainRecord> events;   // by (person_id, date, domain, concept_id, visit_id)
  Provenance provenance = Provenance::Real;
  LoadReport report;

  friend bool operator==(const OmopDataset& a, const OmopDataset& b) {
    return a.persons == b.persons && a.visits == b.visits && a.events == b.events;
  }
};

/// Sorts the three tables into their canonical order.
void sort_tables(OmopDataset& ds);

/// Loads the OMOP CSV tables from `dir`. Throws Error(Io) when person.csv or
/// visit_occurrence.csv is missing, or no domain table is present.
OmopDataset load_dataset(const std::filesystem::path& dir, Provenance provenance = Provenance::Real);

/// Writes person, visit_occurrence and the three domain tables into `dir`.
void save_dataset(const OmopDataset& ds, const std::filesystem::path& dir);

/// Streaming writer for the five OMOP tables.
class DatasetWriter {
 public:
  explicit DatasetWriter(const std::filesystem::path& dir);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const PatientHistory& h);
  void write_person(const PersonRecord& p);
  void write_visit(const VisitRecord& v);
  void write_event(const DomainRecord& e);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Groups the tables into one history per person, sorted by person_id. Persons
/// without visits produce a history with an empty visit list.
std::vector<PatientHistory> histories(const OmopDataset& ds);

struct AssembledHistory {
  PatientHistory history;
  std::size_t token_count = 0;
  bool needs_truncation = false;
};

struct AssembleReport {
  std::size_t too_short = 0;
  std::size_t without_visits = 0;
  std::size_t flagged_for_truncation = 0;
};

using TokenCounter = std::function<std::size_t(const PatientHistory&)>;

/// Keeps histories whose dry-run encoded length is at least `min_tokens`;
/// longer than `max_tokens` are kept and flagged for post-truncation.
std::vector<AssembledHistory> assemble_histories(const OmopDataset& ds, const TokenCounter& count_tokens,
                                                 std::size_t min_tokens, std::size_t max_tokens,
                                                 AssembleReport* report = nullptr);

/// Every visit start/end date and every event date, with multiplicity, sorted.
std::vector<Date> timeline_dates(const PatientHistory& h);

/// concept_id -> domain, read from concept.csv (concept_id,concept_name,domain_id).
std::unordered_map<ConceptId, Domain> load_concept_domains(const std::filesystem::path& concept_csv);

/// concept_id -> domain as observed in the domain tables of `ds`.
std::unordered_map<ConceptId, Domain> observed_concept_domains(const OmopDataset& ds);

}  // namespace cehr::omop
