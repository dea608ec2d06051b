#include <algorithm>
#include <cmath>

#include "cehr/error.hpp"
#include "cehr/utility.hpp"

namespace cehr::utility {

std::string to_string(ConceptKey k) { return std::string(omop::domain_name(k.domain())) + ":" + std::to_string(k.id()); }

std::vector<ConceptKey> patient_concepts(const omop::PatientHistory& h) {
  std::vector<ConceptKey> out;
  out.reserve(h.events.size() + h.visits.size());
  for (const auto& e : h.events) out.push_back(ConceptKey::of(e.domain, e.concept_id));
  for (const auto& v : h.visits) out.push_back(ConceptKey::of(Domain::Visit, v.visit_type));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double ConceptStats::probability(ConceptKey k) const {
  auto it = presence.find(k);
  return it == presence.end() || total_presence == 0 ? 0.0 : double(it->second) / double(total_presence);
}

double ConceptStats::prevalence(ConceptKey k) const {
  auto it = presence.find(k);
  return it == presence.end() || patients == 0 ? 0.0 : double(it->second) / double(patients);
}

std::map<ConceptKey, double> ConceptStats::probabilities() const {
  std::map<ConceptKey, double> out;
  for (auto& [k, c] : presence) out.emplace(k, double(c) / double(total_presence));
  return out;
}

std::map<ConceptKey, double> ConceptStats::prevalences() const {
  std::map<ConceptKey, double> out;
  for (auto& [k, c] : presence) out.emplace(k, double(c) / double(patients));
  return out;
}

ConceptStats concept_probability(std::span<const omop::PatientHistory> corpus) {
  ConceptStats s;
  for (const auto& h : corpus) {
    auto concepts = patient_concepts(h);
    ++s.patients;
    s.total_presence += concepts.size();
    for (auto k : concepts) ++s.presence[k];
  }
  return s;
}

namespace {

std::string age_band(const omop::PatientHistory& h) {
  if (h.visits.empty()) return "unknown";
  auto first = std::min_element(h.visits.begin(), h.visits.end(),
                                [](const auto& a, const auto& b) { return a.start < b.start; });
  const int age = omop::year_of(first->start) - h.person.year_of_birth;
  const int lo = std::max(0, age / 10 * 10);
  return std::to_string(lo) + "-" + std::to_string(lo + 9);
}

}  // namespace

PrevalenceTable concept_prevalence(std::span<const omop::PatientHistory> corpus, std::string_view strata,
                                   const std::unordered_map<std::int64_t, std::string>* cohort_labels) {
  std::function<std::optional<std::string>(const omop::PatientHistory&)> label;
  if (strata == "all") {
    label = [](const auto&) { return std::string("all"); };
  } else if (strata == "gender") {
    label = [](const auto& h) { return "gender:" + std::to_string(h.person.gender); };
  } else if (strata == "race") {
    label = [](const auto& h) { return "race:" + std::to_string(h.person.race); };
  } else if (strata == "age_band") {
    label = [](const auto& h) { return "age:" + age_band(h); };
  } else if (strata == "cohort") {
    if (!cohort_labels) fail(ErrorCode::InvalidArgument, "cohort strata need cohort labels");
    label = [cohort_labels](const auto& h) -> std::optional<std::string> {
      auto it = cohort_labels->find(h.person.person_id);
      if (it == cohort_labels->end()) return std::nullopt;
      return "cohort:" + it->second;
    };
  } else {
    fail(ErrorCode::InvalidArgument, "unknown stratum key: " + std::string(strata));
  }

  std::map<std::string, std::pair<std::uint64_t, std::map<ConceptKey, std::uint64_t>>> acc;
  for (const auto& h : corpus) {
    auto l = label(h);
    if (!l) continue;
    auto& [n, counts] = acc[*l];
    ++n;
    for (auto k : patient_concepts(h)) ++counts[k];
  }
  PrevalenceTable out;
  for (auto& [l, entry] : acc) {
    auto& [n, counts] = entry;
    if (n == 0) continue;
    auto& row = out[l];
    for (auto& [k, c] : counts) row.emplace(k, double(c) / double(n));
  }
  return out;
}

KlReport kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon) {
  if (p.size() != q.size()) fail(ErrorCode::InvalidArgument, "KL divergence needs aligned supports");
  if (epsilon < 0.0) fail(ErrorCode::InvalidArgument, "smoothing must be non-negative");
  KlReport r;
  std::vector<double> qs(q.begin(), q.end());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0 && qs[i] <= 0.0) {
      if (epsilon == 0.0) fail(ErrorCode::NotAvailable, "KL divergence undefined: source mass on a cell the synthetic side lacks");
      qs[i] = epsilon;
      ++r.smoothed_cells;
    }
    if (p[i] <= 0.0 && q[i] > 0.0) ++r.synthetic_only_cells;
  }
  if (r.smoothed_cells > 0) {
    double total = 0.0;
    for (double x : qs) total += x;
    for (double& x : qs) x /= total;
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / qs[i]);
  // Rounding can leave an identical pair a hair below zero.
  r.value = kl < 0.0 && kl > -1e-12 ? 0.0 : kl;
  return r;
}

}  // namespace cehr::utility
