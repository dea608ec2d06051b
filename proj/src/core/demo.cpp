#include "cehr/demo.hpp"

#include <algorithm>
#include <cmath>

#include "cehr/generator.hpp"
#include "csv.hpp"

namespace cehr::demo {

using omop::ConceptId;
using omop::Date;
using omop::Domain;
using std::chrono::days;

namespace {

constexpr int kConditions = 40;  // 100001..100040; the first twelve are chronic
constexpr int kChronic = 12;
constexpr int kDrugs = 20;       // 200001..
constexpr int kProcedures = 10;  // 300001..
constexpr ConceptId kHypertension = 100005;
constexpr ConceptId kDiabetes = 100006;
constexpr ConceptId kKidney = 100007;
constexpr ConceptId kDischargeHome = 8536;
constexpr ConceptId kDischargeFacility = 8863;

const char* const kNamedConditions[] = {"Heart failure",       "Atrial fibrillation", "Coronary artery disease",
                                        "COPD",                "Hypertension",        "Type 2 diabetes",
                                        "Chronic kidney disease", "Asthma",           "Hyperlipidemia",
                                        "Depression",          "Osteoarthritis",      "Hypothyroidism",
                                        "Ischemic stroke",     "Abdominal pain",      "Chest pain"};

// Index in [0, n) with weight proportional to 1/(i+1).
int zipf(gen::Rng& rng, int n) {
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += 1.0 / (i + 1);
  double u = rng.uniform() * total;
  for (int i = 0; i < n; ++i) {
    u -= 1.0 / (i + 1);
    if (u < 0.0) return i;
  }
  return n - 1;
}

double normal(gen::Rng& rng) {
  const double u1 = 1.0 - rng.uniform(), u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

int pick(gen::Rng& rng, std::initializer_list<double> weights) {
  double u = rng.uniform(), acc = 0.0;
  int i = 0;
  for (double w : weights) {
    acc += w;
    if (u < acc) return i;
    ++i;
  }
  return i - 1;
}

ConceptId condition(int i) { return 100001 + i; }
ConceptId drug(int i) { return 200001 + i; }
ConceptId procedure(int i) { return 300001 + i; }

// Chronic conditions switch on at an onset visit and persist afterwards.
struct Patient {
  std::vector<int> chronic;
  std::vector<int> onset;
  std::vector<int> active;  // chronic conditions active at the current visit
  bool ever(ConceptId c) const {
    return std::find(chronic.begin(), chronic.end(), int(c - 100001)) != chronic.end();
  }
  bool has(ConceptId c) const { return std::find(active.begin(), active.end(), int(c - 100001)) != active.end(); }
  void advance(int visit) {
    active.clear();
    for (std::size_t i = 0; i < chronic.size(); ++i)
      if (onset[i] <= visit) active.push_back(chronic[i]);
  }
};

void add_event(omop::PatientHistory& h, const omop::VisitRecord& v, Domain d, ConceptId c, Date when) {
  h.events.push_back({h.person.person_id, v.visit_id, d, c, when});
}

void visit_events(omop::PatientHistory& h, const omop::VisitRecord& v, const Patient& p, gen::Rng& rng) {
  const int span = int((v.end - v.start).count());
  for (int day = 0; day <= span; ++day) {
    const Date when = v.start + days(day);
    const int n_cond = 1 + int(rng.below(2));
    for (int k = 0; k < n_cond; ++k) {
      const bool chronic = !p.active.empty() && (rng.uniform() < 0.6 || (v.visit_type == omop::kInpatientVisit && k == 0));
      const int c = chronic ? p.active[rng.below(p.active.size())] : kChronic + 1 + zipf(rng, kConditions - kChronic - 1);
      add_event(h, v, Domain::Condition, condition(c), when);
      if (chronic && rng.uniform() < 0.5) add_event(h, v, Domain::Drug, drug(c % kDrugs), when);
    }
    if (rng.uniform() < 0.3) add_event(h, v, Domain::Drug, drug(kChronic + zipf(rng, kDrugs - kChronic)), when);
    if (v.visit_type != omop::kOutpatientVisit && rng.uniform() < 0.5)
      add_event(h, v, Domain::Procedure, procedure(2 + zipf(rng, kProcedures - 2)), when);
  }
  // Outcome structure for the demo cohorts.
  if (p.has(kAfib) && rng.uniform() < (p.has(kHypertension) ? 0.15 : 0.03))
    add_event(h, v, Domain::Condition, kStroke, v.start);
  if (p.has(kCad)) {
    if (rng.uniform() < 0.04) add_event(h, v, Domain::Procedure, kStent, v.start);
    else if (rng.uniform() < (p.has(kDiabetes) ? 0.2 : 0.04)) add_event(h, v, Domain::Procedure, kCabg, v.end);
  }
}

omop::PatientHistory patient(std::int64_t person_id, gen::Rng& rng) {
  omop::PatientHistory h;
  h.person.person_id = person_id;
  h.person.gender = rng.uniform() < 0.5 ? 8507 : 8532;
  h.person.race = std::array<ConceptId, 4>{8527, 8516, 8515, 8552}[pick(rng, {0.6, 0.2, 0.1, 0.1})];
  h.person.year_of_birth = 1930 + int(rng.below(66));

  const int n_visits = 4 + std::min(36, int(std::floor(-std::log(1.0 - rng.uniform()) * 10.0)));
  Patient p;
  const int n_chronic = int(rng.below(5));
  for (int k = 0; k < n_chronic; ++k) {
    const int c = zipf(rng, kChronic);
    if (p.ever(condition(c))) continue;
    p.chronic.push_back(c);
    p.onset.push_back(rng.uniform() < 0.3 ? 0 : int(rng.below(std::uint64_t(n_visits))));
  }

  Date when = omop::january_first(2005) + days(rng.below(11 * 365));
  int state = 0;  // 0 outpatient, 1 inpatient, 2 emergency
  for (int k = 0; k < n_visits; ++k) {
    p.advance(k);
    const bool hf = p.has(kHeartFailure) || p.has(kCopd);
    omop::VisitRecord v;
    v.visit_id = person_id * 100 + k;
    v.person_id = person_id;
    v.visit_type = std::array<ConceptId, 3>{omop::kOutpatientVisit, omop::kInpatientVisit, omop::kEmergencyVisit}[state];
    v.start = when;
    v.end = when;
    if (v.visit_type == omop::kInpatientVisit) {
      v.end = when + days(1 + std::min(20, int(std::floor(-std::log(1.0 - rng.uniform()) * 3.0))));
      v.discharge = rng.uniform() < 0.85 ? kDischargeHome : kDischargeFacility;
    }
    h.visits.push_back(v);
    visit_events(h, v, p, rng);

    const double inpatient = hf ? 0.25 : 0.08;
    if (state == 1 && hf && rng.uniform() < (p.has(kKidney) ? 0.55 : 0.15)) {
      when = v.end + days(2 + rng.below(27));
      state = 1;
      continue;
    }
    state = pick(rng, {1.0 - inpatient - 0.08, inpatient, 0.08});
    const double gap = std::exp(std::log(60.0) + 0.9 * normal(rng));
    when = v.end + days(std::clamp(int(gap), 1, 1400));
  }
  omop::canonicalize(h);
  return h;
}

}  // namespace

std::vector<ConceptRow> concepts() {
  std::vector<ConceptRow> out;
  for (int i = 0; i < kConditions; ++i)
    out.push_back({condition(i), i < int(std::size(kNamedConditions)) ? kNamedConditions[i] : "Condition " + std::to_string(i + 1),
                   Domain::Condition});
  for (int i = 0; i < kConditions / 4; ++i) out.push_back({190001 + i, "Condition group " + std::to_string(i + 1), Domain::Condition});
  for (int i = 0; i < kDrugs; ++i) out.push_back({drug(i), "Drug " + std::to_string(i + 1), Domain::Drug});
  out.push_back({kCabg, "Coronary artery bypass graft", Domain::Procedure});
  out.push_back({kStent, "Coronary stent placement", Domain::Procedure});
  for (int i = 2; i < kProcedures; ++i) out.push_back({procedure(i), "Procedure " + std::to_string(i + 1), Domain::Procedure});
  out.push_back({omop::kInpatientVisit, "Inpatient Visit", Domain::Visit});
  out.push_back({omop::kOutpatientVisit, "Outpatient Visit", Domain::Visit});
  out.push_back({omop::kEmergencyVisit, "Emergency Room Visit", Domain::Visit});
  out.push_back({kDischargeHome, "Discharged to home", Domain::Discharge});
  out.push_back({kDischargeFacility, "Discharged to facility", Domain::Discharge});
  out.push_back({8507, "MALE", Domain::Gender});
  out.push_back({8532, "FEMALE", Domain::Gender});
  for (auto [id, name] : std::initializer_list<std::pair<ConceptId, const char*>>{
           {8527, "White"}, {8516, "Black or African American"}, {8515, "Asian"}, {8552, "Unknown"}})
    out.push_back({id, name, Domain::Race});
  return out;
}

std::vector<std::pair<ConceptId, ConceptId>> ancestors() {
  // Acute conditions roll up in groups of four; chronic ones stay distinct.
  std::vector<std::pair<ConceptId, ConceptId>> out;
  for (int i = kChronic + 1; i < kConditions; ++i) out.emplace_back(condition(i), 190001 + (i - kChronic - 1) / 4);
  return out;
}

omop::OmopDataset generate(std::size_t patients, std::uint64_t seed, std::int64_t first_person_id) {
  omop::OmopDataset ds;
  for (std::size_t k = 0; k < patients; ++k) {
    const std::int64_t id = first_person_id + std::int64_t(k);
    gen::Rng rng(seed, std::uint64_t(id));
    auto h = patient(id, rng);
    ds.persons.push_back(h.person);
    ds.visits.insert(ds.visits.end(), h.visits.begin(), h.visits.end());
    ds.events.insert(ds.events.end(), h.events.begin(), h.events.end());
  }
  omop::sort_tables(ds);
  return ds;
}

std::vector<predictive::CohortDefinition> cohorts() {
  using predictive::CohortDefinition;
  using Kind = predictive::IndexRule::Kind;
  std::vector<CohortDefinition> out;

  CohortDefinition hf;
  hf.name = "hf_readmission";
  hf.index = {Kind::Visit, {kHeartFailure}, {omop::kInpatientVisit}, true, true, 0};
  hf.observation_days = 360;
  hf.prediction_days = 30;
  hf.outcome.visit_types = {omop::kInpatientVisit};
  out.push_back(hf);

  CohortDefinition hosp;
  hosp.name = "hospitalization";
  hosp.index = {Kind::EntryOffset, {}, {}, false, true, 730};
  hosp.observation_days = 540;
  hosp.hold_off_days = 180;
  hosp.prediction_days = 720;
  hosp.outcome.visit_types = {omop::kInpatientVisit};
  out.push_back(hosp);

  CohortDefinition copd = hf;
  copd.name = "copd_readmission";
  copd.index.concepts = {kCopd};
  out.push_back(copd);

  CohortDefinition afib;
  afib.name = "afib_ischemic_stroke";
  afib.index = {Kind::Event, {kAfib}, {}, false, true, 0};
  afib.observation_days = 720;
  afib.prediction_days = 360;
  afib.outcome.concepts = {kStroke};
  out.push_back(afib);

  CohortDefinition cad;
  cad.name = "cad_cabg";
  cad.index = {Kind::Event, {kCad}, {}, false, true, 0};
  cad.observation_days = 720;
  cad.prediction_days = 360;
  cad.outcome.concepts = {kCabg};
  cad.exclude_prior_concepts = {kStent};
  out.push_back(cad);
  return out;
}

void write_concepts(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    csv::Writer w(dir / "concept.csv");
    w.row({"concept_id", "concept_name", "domain_id"});
    for (const auto& c : concepts()) w.row({std::to_string(c.id), c.name, std::string(omop::domain_name(c.domain))});
  }
  csv::Writer w(dir / "concept_ancestor.csv");
  w.row({"ancestor_concept_id", "descendant_concept_id", "min_levels_of_separation", "max_levels_of_separation"});
  for (auto [d, a] : ancestors()) w.row({std::to_string(a), std::to_string(d), "1", "1"});
}

WriteSummary write(const std::filesystem::path& dir, std::size_t patients, std::size_t holdout, std::uint64_t seed) {
  WriteSummary s;
  const auto train = generate(patients, seed, 1);
  omop::save_dataset(train, dir / "train");
  write_concepts(dir / "train");
  s.train_patients = train.persons.size();
  if (holdout > 0) {
    const auto held = generate(holdout, seed, std::int64_t(patients) + 1);
    omop::save_dataset(held, dir / "holdout");
    write_concepts(dir / "holdout");
    s.holdout_patients = held.persons.size();
  }
  return s;
}

}  // namespace cehr::demo
