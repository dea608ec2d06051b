#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cehr/omop.hpp"
#include "cehr/predictive.hpp"

/// Toy OMOP corpus drawn from a fixed ground-truth process: a Markov chain
/// over visit types, persistent chronic conditions with linked drugs, and a
/// short-gap readmission tendency for heart-failure patients.
namespace cehr::demo {

inline constexpr omop::ConceptId kHeartFailure = 100001;
inline constexpr omop::ConceptId kAfib = 100002;
inline constexpr omop::ConceptId kCad = 100003;
inline constexpr omop::ConceptId kCopd = 100004;
inline constexpr omop::ConceptId kStroke = 100013;
inline constexpr omop::ConceptId kCabg = 300001;
inline constexpr omop::ConceptId kStent = 300002;

struct ConceptRow {
  omop::ConceptId id = 0;
  std::string name;
  omop::Domain domain = omop::Domain::Condition;
};

/// Every concept the generator can emit.
std::vector<ConceptRow> concepts();
/// (descendant, parent) roll-up pairs over the condition concepts.
std::vector<std::pair<omop::ConceptId, omop::ConceptId>> ancestors();

/// Patients `first_person_id`, `first_person_id + 1`, ...; patient k draws
/// from the stream (seed, person id) so any slice is reproducible on its own.
omop::OmopDataset generate(std::size_t patients, std::uint64_t seed, std::int64_t first_person_id = 1);

/// Cohort definitions over the demo vocabulary mirroring the five reference cohorts.
std::vector<predictive::CohortDefinition> cohorts();

void write_concepts(const std::filesystem::path& dir);

struct WriteSummary {
  std::size_t train_patients = 0;
  std::size_t holdout_patients = 0;
};

/// Writes `dir`/train and, when `holdout` > 0, `dir`/holdout, each with
/// concept.csv and concept_ancestor.csv.
WriteSummary write(const std::filesystem::path& dir, std::size_t patients, std::size_t holdout, std::uint64_t seed);

}  // namespace cehr::demo
