#include "cehr/omop.hpp"

#include <algorithm>
#include <charconv>
#include <future>
#include <map>
#include <unordered_set>

#include "cehr/error.hpp"
#include "csv.hpp"

namespace cehr::omop {

namespace {

template <typename Int>
bool parse_int(std::string_view text, Int& out) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  if (text.empty()) return false;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

int current_year() {
  using namespace std::chrono;
  return int(year_month_day{floor<days>(system_clock::now())}.year());
}

struct Columns {
  std::vector<int> index;
};

Columns require_columns(const csv::Reader& reader, const std::filesystem::path& path,
                        std::initializer_list<std::string_view> names) {
  Columns c;
  for (auto name : names) {
    int idx = reader.column(name);
    if (idx < 0) fail(ErrorCode::Data, path.string() + ": missing column " + std::string(name));
    c.index.push_back(idx);
  }
  return c;
}

struct PersonTable {
  std::vector<PersonRecord> rows;
  std::size_t rejected = 0;
  std::size_t malformed = 0;
};

PersonTable read_persons(const std::filesystem::path& path) {
  PersonTable t;
  csv::Reader reader(path);
  auto cols = require_columns(reader, path, {"person_id", "year_of_birth", "gender_concept_id", "race_concept_id"});
  const int max_year = current_year();
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) { ++t.malformed; continue; }
    PersonRecord p;
    if (!parse_int(f[cols.index[0]], p.person_id) || !parse_int(f[cols.index[1]], p.year_of_birth) ||
        !parse_int(f[cols.index[2]], p.gender) || !parse_int(f[cols.index[3]], p.race)) {
      ++t.malformed;
      continue;
    }
    if (p.year_of_birth < 1900 || p.year_of_birth > max_year) { ++t.rejected; continue; }
    t.rows.push_back(p);
  }
  return t;
}

struct VisitTable {
  std::vector<VisitRecord> rows;
  std::size_t rejected = 0;
  std::size_t malformed = 0;
};

VisitTable read_visits(const std::filesystem::path& path) {
  VisitTable t;
  csv::Reader reader(path);
  auto cols = require_columns(reader, path,
                              {"visit_occurrence_id", "person_id", "visit_concept_id", "visit_start_date",
                               "visit_end_date", "discharged_to_concept_id"});
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) { ++t.malformed; continue; }
    VisitRecord v;
    auto start = parse_date(f[cols.index[3]]);
    auto end = parse_date(f[cols.index[4]]);
    if (!parse_int(f[cols.index[0]], v.visit_id) || !parse_int(f[cols.index[1]], v.person_id) ||
        !parse_int(f[cols.index[2]], v.visit_type) || !start || !end) {
      ++t.malformed;
      continue;
    }
    v.start = *start;
    v.end = *end;
    const auto& dis = f[cols.index[5]];
    if (!dis.empty()) {
      ConceptId d = 0;
      if (!parse_int(dis, d)) { ++t.malformed; continue; }
      if (d != 0) v.discharge = d;
    }
    if (v.end < v.start) { ++t.rejected; continue; }
    t.rows.push_back(v);
  }
  return t;
}

struct EventTable {
  std::vector<DomainRecord> rows;
  std::size_t unknown = 0;
  std::size_t malformed = 0;
};

EventTable read_events(const std::filesystem::path& path, Domain domain, std::string_view concept_col,
                       std::string_view date_col) {
  EventTable t;
  csv::Reader reader(path);
  auto cols = require_columns(reader, path, {"person_id", "visit_occurrence_id", concept_col, date_col});
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) { ++t.malformed; continue; }
    DomainRecord e;
    e.domain = domain;
    auto date = parse_date(f[cols.index[3]]);
    if (!parse_int(f[cols.index[0]], e.person_id) || !parse_int(f[cols.index[1]], e.visit_id) ||
        !parse_int(f[cols.index[2]], e.concept_id) || !date) {
      ++t.malformed;
      continue;
    }
    if (e.concept_id == 0) { ++t.unknown; continue; }
    e.date = *date;
    t.rows.push_back(e);
  }
  return t;
}

struct DomainFile {
  const char* file;
  Domain domain;
  const char* concept_col;
  const char* date_col;
};

constexpr DomainFile kDomainFiles[] = {
    {"condition_occurrence.csv", Domain::Condition, "condition_concept_id", "condition_start_date"},
    {"drug_exposure.csv", Domain::Drug, "drug_concept_id", "drug_exposure_start_date"},
    {"procedure_occurrence.csv", Domain::Procedure, "procedure_concept_id", "procedure_date"},
};

const DomainFile& domain_file(Domain d) {
  for (const auto& f : kDomainFiles)
    if (f.domain == d) return f;
  fail(ErrorCode::InvalidArgument, "not a domain table: " + std::string(domain_name(d)));
}

bool visit_order(const VisitRecord& a, const VisitRecord& b) {
  if (a.start != b.start) return a.start < b.start;
  return a.visit_id < b.visit_id;
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  // Tolerate a trailing time component ("2020-01-05 00:00:00").
  if (text.size() > 10 && (text[10] == ' ' || text[10] == 'T')) text = text.substr(0, 10);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  int y = 0;
  unsigned m = 0, d = 0;
  if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), m) || !parse_int(text.substr(8, 2), d))
    return std::nullopt;
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()), unsigned(ymd.day()));
  return buf;
}

int year_of(Date d) { return int(std::chrono::year_month_day{d}.year()); }

Date january_first(int year) {
  return Date{std::chrono::year{year} / std::chrono::January / 1};
}

std::string_view domain_name(Domain d) {
  switch (d) {
    case Domain::Condition: return "Condition";
    case Domain::Drug: return "Drug";
    case Domain::Procedure: return "Procedure";
    case Domain::Visit: return "Visit";
    case Domain::Discharge: return "Discharge";
    case Domain::Gender: return "Gender";
    case Domain::Race: return "Race";
  }
  return "?";
}

std::optional<Domain> parse_domain(std::string_view name) {
  static const std::pair<std::string_view, Domain> kNames[] = {
      {"Condition", Domain::Condition}, {"Drug", Domain::Drug},           {"Procedure", Domain::Procedure},
      {"Visit", Domain::Visit},         {"Discharge", Domain::Discharge}, {"Gender", Domain::Gender},
      {"Race", Domain::Race},
  };
  for (auto [n, d] : kNames)
    if (n == name) return d;
  return std::nullopt;
}

bool same_day_before(const DomainRecord& a, const DomainRecord& b) {
  if (a.domain != b.domain) return a.domain < b.domain;
  return a.concept_id < b.concept_id;
}

void canonicalize(PatientHistory& h) {
  std::sort(h.visits.begin(), h.visits.end(), visit_order);
  std::unordered_map<std::int64_t, std::size_t> rank;
  for (std::size_t i = 0; i < h.visits.size(); ++i) rank[h.visits[i].visit_id] = i;
  std::stable_sort(h.events.begin(), h.events.end(), [&](const DomainRecord& a, const DomainRecord& b) {
    auto ra = rank.at(a.visit_id), rb = rank.at(b.visit_id);
    if (ra != rb) return ra < rb;
    if (a.date != b.date) return a.date < b.date;
    return same_day_before(a, b);
  });
}

void sort_tables(OmopDataset& ds) {
  std::sort(ds.persons.begin(), ds.persons.end(),
            [](const PersonRecord& a, const PersonRecord& b) { return a.person_id < b.person_id; });
  std::sort(ds.visits.begin(), ds.visits.end(), [](const VisitRecord& a, const VisitRecord& b) {
    if (a.person_id != b.person_id) return a.person_id < b.person_id;
    return visit_order(a, b);
  });
  std::sort(ds.events.begin(), ds.events.end(), [](const DomainRecord& a, const DomainRecord& b) {
    if (a.person_id != b.person_id) return a.person_id < b.person_id;
    if (a.date != b.date) return a.date < b.date;
    if (a.domain != b.domain) return a.domain < b.domain;
    if (a.concept_id != b.concept_id) return a.concept_id < b.concept_id;
    return a.visit_id < b.visit_id;
  });
}

OmopDataset load_dataset(const std::filesystem::path& dir, Provenance provenance) {
  namespace fs = std::filesystem;
  const auto person_path = dir / "person.csv";
  const auto visit_path = dir / "visit_occurrence.csv";
  if (!fs::exists(person_path)) fail(ErrorCode::Io, "missing mandatory file " + person_path.string());
  if (!fs::exists(visit_path)) fail(ErrorCode::Io, "missing mandatory file " + visit_path.string());

  std::vector<const DomainFile*> present;
  for (const auto& f : kDomainFiles)
    if (fs::exists(dir / f.file)) present.push_back(&f);
  if (present.empty()) fail(ErrorCode::Io, dir.string() + ": no condition, drug or procedure table found");

  auto persons_f = std::async(std::launch::async, read_persons, person_path);
  auto visits_f = std::async(std::launch::async, read_visits, visit_path);
  std::vector<std::future<EventTable>> event_f;
  for (const auto* f : present)
    event_f.push_back(std::async(std::launch::async, read_events, dir / f->file, f->domain,
                                 std::string_view(f->concept_col), std::string_view(f->date_col)));

  OmopDataset ds;
  ds.provenance = provenance;
  auto& rep = ds.report;
  rep.files_read = {"person.csv", "visit_occurrence.csv"};
  for (const auto* f : present) rep.files_read.emplace_back(f->file);

  auto persons = persons_f.get();
  rep.persons_rejected = persons.rejected;
  rep.malformed_rows += persons.malformed;
  std::unordered_set<std::int64_t> person_ids;
  for (auto& p : persons.rows) {
    if (!person_ids.insert(p.person_id).second) { ++rep.persons_rejected; continue; }
    ds.persons.push_back(p);
  }

  auto visits = visits_f.get();
  rep.visits_rejected = visits.rejected;
  rep.malformed_rows += visits.malformed;
  std::unordered_map<std::int64_t, std::size_t> visit_index;
  for (auto& v : visits.rows) {
    if (!person_ids.count(v.person_id)) { ++rep.integrity_rejected; continue; }
    if (visit_index.count(v.visit_id)) { ++rep.visits_rejected; continue; }
    visit_index.emplace(v.visit_id, ds.visits.size());
    ds.visits.push_back(v);
  }

  for (auto& fut : event_f) {
    auto t = fut.get();
    rep.unknown_concepts_dropped += t.unknown;
    rep.malformed_rows += t.malformed;
    for (auto& e : t.rows) {
      auto it = visit_index.find(e.visit_id);
      if (it == visit_index.end()) { ++rep.integrity_rejected; continue; }
      const auto& v = ds.visits[it->second];
      if (v.person_id != e.person_id || e.date < v.start || e.date > v.end) { ++rep.integrity_rejected; continue; }
      ds.events.push_back(e);
    }
  }
  sort_tables(ds);
  return ds;
}

struct DatasetWriter::Impl {
  csv::Writer person;
  csv::Writer visit;
  csv::Writer condition;
  csv::Writer drug;
  csv::Writer procedure;

  explicit Impl(const std::filesystem::path& dir)
      : person(dir / "person.csv"),
        visit(dir / "visit_occurrence.csv"),
        condition(dir / domain_file(Domain::Condition).file),
        drug(dir / domain_file(Domain::Drug).file),
        procedure(dir / domain_file(Domain::Procedure).file) {
    person.row({"person_id", "year_of_birth", "gender_concept_id", "race_concept_id"});
    visit.row({"visit_occurrence_id", "person_id", "visit_concept_id", "visit_start_date", "visit_end_date",
               "discharged_to_concept_id"});
    for (auto d : {Domain::Condition, Domain::Drug, Domain::Procedure}) {
      const auto& f = domain_file(d);
      table(d).row({"person_id", "visit_occurrence_id", f.concept_col, f.date_col});
    }
  }

  csv::Writer& table(Domain d) {
    switch (d) {
      case Domain::Condition: return condition;
      case Domain::Drug: return drug;
      case Domain::Procedure: return procedure;
      default: fail(ErrorCode::InvalidArgument, "not a domain table: " + std::string(domain_name(d)));
    }
  }
};

DatasetWriter::DatasetWriter(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  impl_ = std::make_unique<Impl>(dir);
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::write_person(const PersonRecord& p) {
  impl_->person.row({std::to_string(p.person_id), std::to_string(p.year_of_birth), std::to_string(p.gender),
                     std::to_string(p.race)});
}

void DatasetWriter::write_visit(const VisitRecord& v) {
  impl_->visit.row({std::to_string(v.visit_id), std::to_string(v.person_id), std::to_string(v.visit_type),
                    format_date(v.start), format_date(v.end), v.discharge ? std::to_string(*v.discharge) : ""});
}

void DatasetWriter::write_event(const DomainRecord& e) {
  impl_->table(e.domain).row(
      {std::to_string(e.person_id), std::to_string(e.visit_id), std::to_string(e.concept_id), format_date(e.date)});
}

void DatasetWriter::write(const PatientHistory& h) {
  write_person(h.person);
  for (const auto& v : h.visits) write_visit(v);
  for (const auto& e : h.events) write_event(e);
}

void DatasetWriter::close() {
  if (!impl_) return;
  impl_->person.flush();
  impl_->visit.flush();
  impl_->condition.flush();
  impl_->drug.flush();
  impl_->procedure.flush();
  impl_.reset();
}

void save_dataset(const OmopDataset& ds, const std::filesystem::path& dir) {
  DatasetWriter w(dir);
  for (const auto& p : ds.persons) w.write_person(p);
  for (const auto& v : ds.visits) w.write_visit(v);
  for (const auto& e : ds.events) w.write_event(e);
  w.close();
}

std::vector<PatientHistory> histories(const OmopDataset& ds) {
  std::vector<PatientHistory> out;
  out.reserve(ds.persons.size());
  std::unordered_map<std::int64_t, std::size_t> slot;
  std::vector<const PersonRecord*> persons;
  for (const auto& p : ds.persons) persons.push_back(&p);
  std::sort(persons.begin(), persons.end(), [](auto* a, auto* b) { return a->person_id < b->person_id; });
  for (const auto* p : persons) {
    slot.emplace(p->person_id, out.size());
    out.push_back(PatientHistory{*p, {}, {}});
  }
  for (const auto& v : ds.visits) {
    auto it = slot.find(v.person_id);
    if (it != slot.end()) out[it->second].visits.push_back(v);
  }
  for (const auto& e : ds.events) {
    auto it = slot.find(e.person_id);
    if (it != slot.end()) out[it->second].events.push_back(e);
  }
  for (auto& h : out) canonicalize(h);
  return out;
}

std::vector<AssembledHistory> assemble_histories(const OmopDataset& ds, const TokenCounter& count_tokens,
                                                 std::size_t min_tokens, std::size_t max_tokens,
                                                 AssembleReport* report) {
  AssembleReport local;
  std::vector<AssembledHistory> out;
  for (auto& h : histories(ds)) {
    if (h.visits.empty()) { ++local.without_visits; continue; }
    std::size_t n = count_tokens(h);
    if (n == 0) { ++local.without_visits; continue; }
    if (n < min_tokens) { ++local.too_short; continue; }
    bool trunc = n > max_tokens;
    if (trunc) ++local.flagged_for_truncation;
    out.push_back(AssembledHistory{std::move(h), n, trunc});
  }
  if (report) *report = local;
  return out;
}

std::vector<Date> timeline_dates(const PatientHistory& h) {
  std::vector<Date> out;
  out.reserve(2 * h.visits.size() + h.events.size());
  for (const auto& v : h.visits) {
    out.push_back(v.start);
    out.push_back(v.end);
  }
  for (const auto& e : h.events) out.push_back(e.date);
  std::sort(out.begin(), out.end());
  return out;
}

std::unordered_map<ConceptId, Domain> load_concept_domains(const std::filesystem::path& concept_csv) {
  csv::Reader reader(concept_csv);
  auto cols = require_columns(reader, concept_csv, {"concept_id", "domain_id"});
  std::unordered_map<ConceptId, Domain> out;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != reader.header().size()) continue;
    ConceptId id = 0;
    if (!parse_int(f[cols.index[0]], id)) continue;
    if (auto d = parse_domain(f[cols.index[1]])) out[id] = *d;
  }
  return out;
}

std::unordered_map<ConceptId, Domain> observed_concept_domains(const OmopDataset& ds) {
  std::unordered_map<ConceptId, Domain> out;
  for (const auto& e : ds.events) out.emplace(e.concept_id, e.domain);
  return out;
}

}  // namespace cehr::omop
