#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cehr/omop.hpp"
#include "cehr/utility.hpp"

namespace cehr::privacy {

using utility::ConceptKey;

// ---------------------------------------------------------------------------
// Vector space

enum class Partition : std::uint8_t {
  Demographic,  // age, gender, race, first-visit year
  Common,       // top 1% most prevalent condition concepts
  Sensitive,    // remaining condition concepts
  Other,        // drug and procedure concepts
};

std::string_view partition_name(Partition p);

/// Row-major dense matrix of patient vectors.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
};

/// Column subset, in the order given.
Matrix project(const Matrix& m, std::span<const std::size_t> columns);
/// Row subset, in the order given.
Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);

/// Layout fixed from the real corpus: [age/100, gender one-hot, race one-hot,
/// (first year - 2000)/100, concept presence...].
class FeatureSpace {
 public:
  /// Throws InvalidArgument when the real corpus has no concepts.
  static FeatureSpace fit(std::span<const omop::PatientHistory> real);

  std::size_t dimension() const { return partition_.size(); }
  const std::vector<Partition>& partitions() const { return partition_; }
  const std::vector<ConceptKey>& concepts() const { return concepts_; }
  std::size_t concept_offset() const { return concept_offset_; }
  /// Condition concepts ranked by real-corpus prevalence, most prevalent first.
  const std::vector<ConceptKey>& condition_ranking() const { return ranked_conditions_; }
  std::size_t common_count() const { return common_count_; }
  /// Column of `k`, or npos when it is outside the real vocabulary.
  std::size_t column(ConceptKey k) const;
  std::vector<std::size_t> columns_of(std::initializer_list<Partition> parts) const;

  std::vector<double> vectorize(const omop::PatientHistory& h) const;
  Matrix vectorize(std::span<const omop::PatientHistory> corpus) const;
  nlohmann::json describe() const;

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<omop::ConceptId> genders_;
  std::vector<omop::ConceptId> races_;
  std::vector<ConceptKey> concepts_;  // sorted
  std::vector<ConceptKey> ranked_conditions_;
  std::size_t common_count_ = 0;
  std::size_t concept_offset_ = 0;
  std::vector<Partition> partition_;
};

/// Age in whole years at the first visit (0 when there is none).
int age_at_first_visit(const omop::PatientHistory& h);

// ---------------------------------------------------------------------------
// Exact nearest neighbour

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Euclidean 1-NN of every query row within `search`. Ties go to the lower
/// index. With `exclude_self`, query i never matches search row i (the two
/// sets are expected to be the same). Throws InvalidArgument when a query
/// has no candidate.
std::vector<Neighbor> nearest_neighbor(const Matrix& query, const Matrix& search, bool exclude_self = false,
                                       unsigned threads = 1);

/// Straightforward reference used to check the kernel.
std::vector<Neighbor> nearest_neighbor_brute_force(const Matrix& query, const Matrix& search, bool exclude_self);

// ---------------------------------------------------------------------------
// Attacks

struct AttackConfig {
  double theta = 5.0;
  std::size_t repetitions = 100;
  std::size_t membership_sample = 10000;
  std::size_t attribute_targets = 150000;
  std::size_t nnaa_sample = 10000;
  std::size_t nnaa_runs = 5;
  double lambda_s = 0.23;
  double l_percent = 0.1;
  std::size_t qid_diseases = 7;
  bool age_bands = true;        // evaluate the decade-band generalization as well as exact age
  bool disease_subsets = true;  // evaluate every subset of the QID diseases
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Throws InvalidArgument when theta <= 0 or L is outside (0, 100).
  void validate() const;
  static AttackConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation
};

struct MembershipResult {
  Summary accuracy, precision, recall, f1;
  std::size_t positives_per_run = 0;
  std::size_t negatives_per_run = 0;
  std::vector<double> f1_runs;
};

MembershipResult membership_inference(const Matrix& train, const Matrix& holdout, const Matrix& synthetic,
                                      const AttackConfig& cfg);

struct AttributeScore {
  double macro_f1 = 0.0;  // mean of per-pair F1
  double micro_f1 = 0.0;  // F1 over pooled counts
  double precision = 0.0;
  double recall = 0.0;
  std::size_t pairs = 0;
  std::size_t excluded = 0;  // targets without sensitive attributes
};

struct AttributeResult {
  AttributeScore synthetic;  // real targets matched into the synthetic set
  AttributeScore baseline;   // real targets matched into the other half of the real set
  bool pass = false;         // synthetic.macro_f1 <= baseline.macro_f1
};

/// Matching uses the demographic and common columns; F1 is computed over the
/// sensitive columns.
AttributeResult attribute_inference(const FeatureSpace& space, const Matrix& real, const Matrix& synthetic,
                                     const AttackConfig& cfg);

/// Quasi-identifiers and attributes of one record for identity disclosure.
struct IdentityRecord {
  int age = 0;
  omop::ConceptId gender = 0;
  omop::ConceptId race = 0;
  std::uint32_t diseases = 0;              // bit i: QID disease i present
  std::vector<std::uint32_t> attributes;  // sorted sensitive attribute ids
};

/// QID diseases are the `cfg.qid_diseases` most prevalent conditions of the
/// space; every other condition, drug and procedure concept is sensitive.
std::vector<IdentityRecord> identity_records(const FeatureSpace& space, std::span<const omop::PatientHistory> corpus,
                                             std::size_t qid_diseases);

struct IdentityRun {
  bool age_band = false;
  std::uint32_t disease_mask = 0;
  double population_term = 0.0;  // 1/N sum 1/f_s ...
  double sample_term = 0.0;      // 1/n sum 1/F_s ...
  double score = 0.0;
};

struct IdentityResult {
  double score = 0.0;  // maximum over runs
  std::vector<IdentityRun> runs;
};

/// Disclosure score for one QID generalization. `sample` indexes records of `population`.
IdentityRun identity_disclosure_run(std::span<const IdentityRecord> population, std::span<const std::size_t> sample,
                                    std::span<const IdentityRecord> synthetic, bool age_band,
                                    std::uint32_t disease_mask, const AttackConfig& cfg);

IdentityResult identity_disclosure(std::span<const IdentityRecord> population, std::span<const std::size_t> sample,
                                   std::span<const IdentityRecord> synthetic, const AttackConfig& cfg);

struct NnaaRun {
  double aa_es = 0.0;
  double aa_ts = 0.0;
  double risk = 0.0;
};

struct NnaaResult {
  double risk = 0.0;  // mean over runs
  std::vector<NnaaRun> runs;
  std::size_t sample = 0;
};

NnaaResult nnaa_risk(const Matrix& train, const Matrix& eval, const Matrix& synthetic, const AttackConfig& cfg);

/// Runs all four attacks. The identity population is train plus holdout, with
/// train as the real sample.
nlohmann::json privacy_report(std::span<const omop::PatientHistory> train,
                              std::span<const omop::PatientHistory> holdout,
                              std::span<const omop::PatientHistory> synthetic, const AttackConfig& cfg);

}  // namespace cehr::privacy
