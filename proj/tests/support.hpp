#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cehr/codec.hpp"
#include "cehr/generator.hpp"
#include "cehr/omop.hpp"

namespace support {

using namespace cehr;
using std::chrono::days;

inline omop::Date ymd(int y, unsigned m, unsigned d) {
  return omop::Date{std::chrono::year{y} / std::chrono::month{m} / std::chrono::day{d}};
}

inline omop::ConceptId concept_for(omop::Domain d, std::uint64_t k) { return (std::int64_t(d) + 1) * 100000 + std::int64_t(k); }

// Visits laid end to end with gaps in [0, max_gap]. Inpatient stays carry
// events on their first and last day so the encoded span equals the visit.
inline omop::PatientHistory random_history(gen::Rng& rng, std::int64_t person_id, int max_visits = 12,
                                           int max_gap = 1080, int concepts = 60) {
  omop::PatientHistory h;
  h.person.person_id = person_id;
  h.person.year_of_birth = 1930 + int(rng.below(70));
  h.person.gender = rng.below(2) ? 8507 : 8532;
  h.person.race = rng.below(3) == 0 ? 8516 : 8527;
  omop::Date when = omop::january_first(2000) + days(rng.below(3650));
  const int n = 1 + int(rng.below(std::uint64_t(max_visits)));
  for (int k = 0; k < n; ++k) {
    omop::VisitRecord v;
    v.visit_id = person_id * 1000 + k;
    v.person_id = person_id;
    const auto r = rng.below(10);
    v.visit_type = r < 2 ? omop::kInpatientVisit : r < 8 ? omop::kOutpatientVisit : omop::kEmergencyVisit;
    v.start = v.end = when;
    auto add = [&](omop::Date d) {
      const auto dom = omop::Domain(rng.below(3));
      h.events.push_back({person_id, v.visit_id, dom, concept_for(dom, 1 + rng.below(std::uint64_t(concepts))), d});
    };
    if (v.visit_type == omop::kInpatientVisit) {
      v.end = when + days(rng.below(15));
      v.discharge = rng.below(5) == 0 ? 8863 : 8536;
      add(v.start);
      add(v.end);
      for (auto extra = rng.below(4); extra > 0; --extra) add(v.start + days(rng.below(std::uint64_t((v.end - v.start).count()) + 1)));
    } else {
      for (auto m = 1 + rng.below(4); m > 0; --m) add(v.start);
    }
    h.visits.push_back(v);
    when = v.end + days(rng.below(std::uint64_t(max_gap) + 1));
  }
  omop::canonicalize(h);
  return h;
}

inline std::vector<omop::PatientHistory> random_corpus(std::size_t n, std::uint64_t seed, int max_visits = 12,
                                                       int max_gap = 1080, int concepts = 60) {
  std::vector<omop::PatientHistory> out;
  for (std::size_t i = 0; i < n; ++i) {
    gen::Rng rng(seed, i);
    out.push_back(random_history(rng, std::int64_t(i) + 1, max_visits, max_gap, concepts));
  }
  return out;
}

inline omop::OmopDataset to_dataset(const std::vector<omop::PatientHistory>& corpus) {
  omop::OmopDataset ds;
  for (const auto& h : corpus) {
    ds.persons.push_back(h.person);
    ds.visits.insert(ds.visits.end(), h.visits.begin(), h.visits.end());
    ds.events.insert(ds.events.end(), h.events.begin(), h.events.end());
  }
  omop::sort_tables(ds);
  return ds;
}

/// True when `b` is `a` shifted by one constant number of days.
inline bool shifted_equal(const std::vector<omop::Date>& a, const std::vector<omop::Date>& b) {
  if (a.size() != b.size() || a.empty()) return a.size() == b.size();
  const auto shift = b.front() - a.front();
  for (std::size_t i = 0; i < a.size(); ++i)
    if (b[i] - a[i] != shift) return false;
  return true;
}

inline std::string joined(const codec::TokenSequence& s) {
  std::string out;
  for (const auto& t : s.tokens) out += (out.empty() ? "" : " ") + codec::to_string(t);
  return out;
}

inline codec::TokenSequence tokens_of(const std::string& text) {
  codec::TokenSequence s;
  std::istringstream in(text);
  std::string w;
  while (in >> w) s.tokens.push_back(codec::parse_token(w).value());
  return s;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cehr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace support
