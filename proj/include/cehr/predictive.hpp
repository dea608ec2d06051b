#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cehr/omop.hpp"

namespace cehr::predictive {

using omop::ConceptId;
using omop::Date;

// ---------------------------------------------------------------------------
// Cohorts

struct IndexRule {
  enum class Kind {
    Visit,        // a visit of one of `visit_types`, optionally containing one of `concepts`
    Event,        // an event whose concept is in `concepts`
    EntryOffset,  // the first timeline date plus `offset_days`
  };
  Kind kind = Kind::Event;
  std::vector<ConceptId> concepts;
  std::vector<ConceptId> visit_types;
  bool anchor_at_end = false;  // Visit only: index on the visit end (discharge) date
  bool first_occurrence = true;
  int offset_days = 0;
};

struct OutcomeRule {
  std::vector<ConceptId> concepts;     // any event of these concepts
  std::vector<ConceptId> visit_types;  // or any visit of these types starting in the window
  bool empty() const { return concepts.empty() && visit_types.empty(); }
};

struct CohortDefinition {
  std::string name;
  IndexRule index;
  int observation_days = 360;
  int hold_off_days = 0;
  int prediction_days = 30;
  OutcomeRule outcome;
  int min_prior_visits = 0;                     // visits starting on or before the index date
  std::vector<ConceptId> exclude_prior_concepts;  // none of these on or before the index date

  /// Throws InvalidArgument on negative windows, hold-off past the observation
  /// window, or an empty outcome/index rule.
  void validate() const;
};

CohortDefinition cohort_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CohortDefinition& def);
CohortDefinition load_cohort_definition(const std::filesystem::path& path);

struct CohortSample {
  std::int64_t person_id = 0;
  std::size_t patient = 0;  // index into the corpus the cohort was built from
  Date index{};
  Date window_start{};  // index - observation
  Date window_end{};    // index - hold-off
  int label = 0;
};

/// At most one sample per patient, ordered by corpus position. Patients whose
/// observed timeline does not reach back to the start of the feature window
/// are excluded.
std::vector<CohortSample> build_cohort(std::span<const omop::PatientHistory> corpus, const CohortDefinition& def,
                                       unsigned threads = 1);

// ---------------------------------------------------------------------------
// Roll-up

class AncestorMap {
 public:
  AncestorMap() = default;
  /// Reads concept_ancestor.csv (ancestor_concept_id, descendant_concept_id
  /// [, min_levels_of_separation]). Self rows are ignored; with a level
  /// column only rows at `level` are used. When several ancestors remain the
  /// lowest id is designated. Throws Data on a cycle.
  static AncestorMap load(const std::filesystem::path& path, int level = 1);
  static AncestorMap from_pairs(const std::vector<std::pair<ConceptId, ConceptId>>& descendant_ancestor);

  ConceptId roll_up(ConceptId c) const;
  std::size_t size() const { return parent_.size(); }

 private:
  void check_acyclic() const;
  std::unordered_map<ConceptId, ConceptId> parent_;
};

std::vector<ConceptId> roll_up(std::span<const ConceptId> concepts, const AncestorMap& map);

// ---------------------------------------------------------------------------
// Bag-of-words features

struct BowFeatures {
  std::vector<ConceptId> columns;   // sorted concept ids
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col;
  std::vector<double> value;
  std::vector<int> labels;

  std::size_t rows() const { return row_ptr.size() - 1; }
  std::size_t cols() const { return columns.size(); }
};

/// Counts event concepts and visit types dated inside each sample's feature window.
BowFeatures bow_features(std::span<const omop::PatientHistory> corpus, std::span<const CohortSample> samples,
                         const AncestorMap* ancestors = nullptr);

// ---------------------------------------------------------------------------
// Logistic regression

struct LogisticModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 1.0;
  std::size_t iterations = 0;
  bool converged = false;
  double gradient_norm = 0.0;
  std::vector<double> loss_history;  // one entry per iteration, starting at the initial point

  double score(const BowFeatures& x, std::size_t row) const;
};

/// Sum of log-losses over `rows` plus lambda/2 * |w|^2 (intercept unpenalized).
/// `params` holds the weights followed by the intercept; `grad` is resized to match.
double logistic_loss(const BowFeatures& x, std::span<const std::size_t> rows, std::span<const double> params,
                     double lambda, std::vector<double>* grad = nullptr);

struct SolverOptions {
  double lambda = 1.0;
  double tolerance = 1e-6;  // on the gradient infinity norm
  std::size_t max_iterations = 1000;
  std::size_t memory = 10;
};

LogisticModel fit_logistic(const BowFeatures& x, std::span<const std::size_t> rows, const SolverOptions& opt = {});

struct TrainResult {
  LogisticModel model;
  std::vector<std::size_t> train_rows;
  std::vector<std::size_t> test_rows;
  std::vector<int> test_labels;
  std::vector<double> test_scores;
};

/// Random split with `train_fraction` of rows for training. Throws
/// NotAvailable when the training split holds a single class.
TrainResult train_logistic(const BowFeatures& x, std::uint64_t split_seed, double train_fraction = 0.85,
                           const SolverOptions& opt = {});

// ---------------------------------------------------------------------------
// Metrics

/// Mann-Whitney normalization with ties counted one half; nullopt for a single class.
std::optional<double> roc_auc(std::span<const int> labels, std::span<const double> scores);
/// Average precision over distinct score thresholds; nullopt without positives.
std::optional<double> pr_auc(std::span<const int> labels, std::span<const double> scores);

struct CohortMetrics {
  std::optional<double> prevalence;  // fraction of positives; nullopt for an empty cohort
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  std::size_t size = 0;
  std::string reason;  // why a metric is missing
};

struct Distance {
  std::optional<double> value;
  std::string reason;
};

/// |dPre| * 0.5 / Pre + |dAUC| * 0.25 / AUC + |dPR| * 0.25 / PR against the real triple.
/// Throws InvalidArgument when a real metric is zero.
Distance consolidated_distance(const CohortMetrics& real, const CohortMetrics& synthetic);

struct CohortEvaluation {
  std::string cohort;
  CohortMetrics metrics;
  std::size_t positives = 0;
  std::size_t features = 0;
  bool converged = false;
};

CohortEvaluation evaluate_cohort(std::span<const omop::PatientHistory> corpus, const CohortDefinition& def,
                                 const AncestorMap* ancestors, std::uint64_t seed, const SolverOptions& opt = {},
                                 unsigned threads = 1);

nlohmann::json to_json(const CohortMetrics& m);

}  // namespace cehr::predictive
