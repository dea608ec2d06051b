#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cehr/omop.hpp"

namespace cehr::utility {

using omop::ConceptId;
using omop::Domain;

/// A concept qualified by its domain, packed into one word for cheap hashing.
struct ConceptKey {
  std::uint64_t bits = 0;

  static ConceptKey of(Domain d, ConceptId id) {
    return ConceptKey{(std::uint64_t(d) << 56) | (std::uint64_t(id) & 0x00FFFFFFFFFFFFFFull)};
  }
  Domain domain() const { return Domain(bits >> 56); }
  ConceptId id() const { return ConceptId(bits & 0x00FFFFFFFFFFFFFFull); }
  friend auto operator<=>(const ConceptKey&, const ConceptKey&) = default;
};

std::string to_string(ConceptKey k);

/// Distinct concepts of one patient: condition, drug and procedure events plus visit types.
std::vector<ConceptKey> patient_concepts(const omop::PatientHistory& h);

struct ConceptStats {
  std::map<ConceptKey, std::uint64_t> presence;  // patients containing the concept
  std::uint64_t patients = 0;
  std::uint64_t total_presence = 0;  // sum over patients of distinct-concept counts

  double probability(ConceptKey k) const;
  double prevalence(ConceptKey k) const;
  std::map<ConceptKey, double> probabilities() const;
  std::map<ConceptKey, double> prevalences() const;
};

ConceptStats concept_probability(std::span<const omop::PatientHistory> corpus);

/// stratum label -> concept -> prevalence. Strata keys: "all", "gender",
/// "race", "age_band" (decade of age at first visit), "cohort" (requires
/// `cohort_labels`). Strata with no patients are omitted.
using PrevalenceTable = std::map<std::string, std::map<ConceptKey, double>>;
PrevalenceTable concept_prevalence(std::span<const omop::PatientHistory> corpus, std::string_view strata = "all",
                                   const std::unordered_map<std::int64_t, std::string>* cohort_labels = nullptr);

struct KlReport {
  double value = 0.0;  // nats
  std::size_t smoothed_cells = 0;      // source-supported cells missing from the synthetic side
  std::size_t synthetic_only_cells = 0;
};

/// sum p ln(p/q) over aligned vectors. Zero q cells under positive p receive
/// `epsilon` and q is renormalized; epsilon = 0 in that case throws NotAvailable.
KlReport kl_divergence(std::span<const double> p, std::span<const double> q, double epsilon = 1e-12);

template <typename Key>
KlReport kl_divergence(const std::map<Key, double>& p, const std::map<Key, double>& q, double epsilon = 1e-12) {
  std::vector<double> pv, qv;
  auto pi = p.begin();
  auto qi = q.begin();
  while (pi != p.end() || qi != q.end()) {
    if (qi == q.end() || (pi != p.end() && pi->first < qi->first)) {
      pv.push_back(pi->second);
      qv.push_back(0.0);
      ++pi;
    } else if (pi == p.end() || qi->first < pi->first) {
      pv.push_back(0.0);
      qv.push_back(qi->second);
      ++qi;
    } else {
      pv.push_back(pi->second);
      qv.push_back(qi->second);
      ++pi;
      ++qi;
    }
  }
  return kl_divergence(pv, qv, epsilon);
}

// ---------------------------------------------------------------------------
// Temporal co-occurrence

using ConceptPair = std::pair<ConceptKey, ConceptKey>;  // (earlier, strictly later)

struct CooccurrenceMatrix {
  std::map<ConceptPair, std::uint64_t> counts;  // patients contributing each ordered pair
  std::uint64_t total = 0;
  std::string strata = "all";

  double probability(ConceptKey a, ConceptKey b) const;
  std::map<ConceptPair, double> distribution() const;
  std::map<ConceptKey, double> row_marginals() const;     // P(earlier = c)
  std::map<ConceptKey, double> column_marginals() const;  // P(later = c)
};

/// Ordered pairs (a, b) with b dated strictly after a, counted at most once
/// per patient, over condition/drug/procedure events.
CooccurrenceMatrix build_cooccurrence(std::span<const omop::PatientHistory> corpus, unsigned threads = 1);

KlReport kl_divergence(const CooccurrenceMatrix& p, const CooccurrenceMatrix& q, double epsilon = 1e-12);

/// KL between the matrix and the product of its own row and column marginals.
KlReport kl_to_independence(const CooccurrenceMatrix& m);

struct CooccurrenceBounds {
  double lower = 0.0;  // KL between two disjoint random halves
  double upper = 0.0;  // KL to the independence matrix
  bool ordered = true;  // lower <= upper
};

CooccurrenceBounds cooccurrence_bounds(std::span<const omop::PatientHistory> corpus, std::uint64_t seed,
                                       double epsilon = 1e-12);

/// ln(p(a,b)^3 / (p(a) p(b))) with row/column marginals; nullopt when p(a,b) = 0.
std::optional<double> pmi3(const CooccurrenceMatrix& m, ConceptKey a, ConceptKey b);

struct TopPair {
  ConceptPair pair;
  double source = 0.0;
  double synthetic = 0.0;
};

/// The `n` most probable source pairs whose domains are (first, second).
std::vector<TopPair> top_pairs(const CooccurrenceMatrix& source, const CooccurrenceMatrix& synthetic, Domain first,
                               Domain second, std::size_t n = 100);

// ---------------------------------------------------------------------------
// Concept networks

enum class NetworkMetric { Prevalence, Pmi3 };

struct NetworkEdge {
  ConceptKey from;
  ConceptKey to;
  double weight = 0.0;
  bool shared = false;
};

struct ConceptNetwork {
  ConceptKey anchor;
  NetworkMetric metric = NetworkMetric::Prevalence;
  std::vector<ConceptKey> nodes;  // discovery order
  std::vector<NetworkEdge> edges;
};

/// Greedy expansion from `anchor`: its top `branching` successors by the
/// metric, then theirs, down to `depth` levels. Self pairs are skipped. When
/// `restrict_domain` is set only concepts of that domain are expanded.
/// Throws InvalidArgument when the anchor has no pair in the matrix.
ConceptNetwork concept_network(const CooccurrenceMatrix& m, ConceptKey anchor, NetworkMetric metric,
                               std::size_t branching = 5, std::size_t depth = 2,
                               std::optional<Domain> restrict_domain = std::nullopt);

struct NetworkComparison {
  std::size_t shared = 0;
  std::size_t edges_a = 0;
  std::size_t edges_b = 0;
  double shared_fraction = 0.0;  // shared / edges_a
};

/// Marks edges present in both networks (by endpoints) as shared.
NetworkComparison compare_networks(ConceptNetwork& a, ConceptNetwork& b);

void write_dot(const ConceptNetwork& net, const std::filesystem::path& path,
               const std::unordered_map<ConceptId, std::string>* names = nullptr);
void write_edge_csv(const ConceptNetwork& net, const std::filesystem::path& path);

}  // namespace cehr::utility
