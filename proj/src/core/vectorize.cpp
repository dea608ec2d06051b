#include <algorithm>
#include <map>

#include "cehr/error.hpp"
#include "cehr/privacy.hpp"

namespace cehr::privacy {

using omop::Date;
using omop::Domain;

std::string_view partition_name(Partition p) {
  switch (p) {
    case Partition::Demographic: return "demographic";
    case Partition::Common: return "common";
    case Partition::Sensitive: return "sensitive";
    case Partition::Other: return "other";
  }
  return "other";
}

Matrix project(const Matrix& m, std::span<const std::size_t> columns) {
  Matrix out{m.rows, columns.size(), std::vector<double>(m.rows * columns.size())};
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto src = m.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < columns.size(); ++j) dst[j] = src[columns[j]];
  }
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out{rows.size(), m.cols, {}};
  out.data.reserve(rows.size() * m.cols);
  for (auto r : rows) {
    auto src = m.row(r);
    out.data.insert(out.data.end(), src.begin(), src.end());
  }
  return out;
}

int age_at_first_visit(const omop::PatientHistory& h) {
  if (h.visits.empty()) return 0;
  Date first = h.visits.front().start;
  for (const auto& v : h.visits) first = std::min(first, v.start);
  return omop::year_of(first) - h.person.year_of_birth;
}

namespace {

bool is_event_domain(Domain d) { return d == Domain::Condition || d == Domain::Drug || d == Domain::Procedure; }

std::vector<ConceptKey> event_concepts(const omop::PatientHistory& h) {
  std::vector<ConceptKey> out;
  for (const auto& e : h.events)
    if (is_event_domain(e.domain)) out.push_back(ConceptKey::of(e.domain, e.concept_id));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t index_of(const std::vector<omop::ConceptId>& v, omop::ConceptId c) {
  auto it = std::lower_bound(v.begin(), v.end(), c);
  return it != v.end() && *it == c ? std::size_t(it - v.begin()) : FeatureSpace::npos;
}

}  // namespace

FeatureSpace FeatureSpace::fit(std::span<const omop::PatientHistory> real) {
  FeatureSpace fs;
  std::map<ConceptKey, std::size_t> presence;
  for (const auto& h : real) {
    fs.genders_.push_back(h.person.gender);
    fs.races_.push_back(h.person.race);
    for (auto k : event_concepts(h)) ++presence[k];
  }
  if (presence.empty()) fail(ErrorCode::InvalidArgument, "real corpus has no concepts to build a vocabulary from");
  for (auto* v : {&fs.genders_, &fs.races_}) {
    std::sort(v->begin(), v->end());
    v->erase(std::unique(v->begin(), v->end()), v->end());
  }
  for (auto& [k, n] : presence) {
    fs.concepts_.push_back(k);
    if (k.domain() == Domain::Condition) fs.ranked_conditions_.push_back(k);
  }
  std::stable_sort(fs.ranked_conditions_.begin(), fs.ranked_conditions_.end(),
                   [&](ConceptKey a, ConceptKey b) { return presence.at(a) > presence.at(b); });
  if (!fs.ranked_conditions_.empty())
    fs.common_count_ = std::max<std::size_t>(1, fs.ranked_conditions_.size() / 100);

  fs.partition_.assign(2 + fs.genders_.size() + fs.races_.size(), Partition::Demographic);
  fs.concept_offset_ = fs.partition_.size();
  std::vector<ConceptKey> common(fs.ranked_conditions_.begin(), fs.ranked_conditions_.begin() + fs.common_count_);
  std::sort(common.begin(), common.end());
  for (auto k : fs.concepts_) {
    if (k.domain() != Domain::Condition) fs.partition_.push_back(Partition::Other);
    else if (std::binary_search(common.begin(), common.end(), k)) fs.partition_.push_back(Partition::Common);
    else fs.partition_.push_back(Partition::Sensitive);
  }
  return fs;
}

std::size_t FeatureSpace::column(ConceptKey k) const {
  auto it = std::lower_bound(concepts_.begin(), concepts_.end(), k);
  return it != concepts_.end() && *it == k ? concept_offset_ + std::size_t(it - concepts_.begin()) : npos;
}

std::vector<std::size_t> FeatureSpace::columns_of(std::initializer_list<Partition> parts) const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < partition_.size(); ++j)
    if (std::find(parts.begin(), parts.end(), partition_[j]) != parts.end()) out.push_back(j);
  return out;
}

std::vector<double> FeatureSpace::vectorize(const omop::PatientHistory& h) const {
  std::vector<double> v(dimension(), 0.0);
  v[0] = age_at_first_visit(h) / 100.0;
  if (auto g = index_of(genders_, h.person.gender); g != npos) v[1 + g] = 1.0;
  if (auto r = index_of(races_, h.person.race); r != npos) v[1 + genders_.size() + r] = 1.0;
  if (!h.visits.empty()) {
    Date first = h.visits.front().start;
    for (const auto& vis : h.visits) first = std::min(first, vis.start);
    v[concept_offset_ - 1] = (omop::year_of(first) - 2000) / 100.0;
  }
  for (auto k : event_concepts(h))
    if (auto c = column(k); c != npos) v[c] = 1.0;
  return v;
}

Matrix FeatureSpace::vectorize(std::span<const omop::PatientHistory> corpus) const {
  Matrix m{corpus.size(), dimension(), {}};
  m.data.reserve(m.rows * m.cols);
  for (const auto& h : corpus) {
    auto v = vectorize(h);
    m.data.insert(m.data.end(), v.begin(), v.end());
  }
  return m;
}

nlohmann::json FeatureSpace::describe() const {
  std::map<std::string, std::size_t> counts;
  for (auto p : partition_) ++counts[std::string(partition_name(p))];
  return {{"dimension", dimension()},
          {"partitions", counts},
          {"condition_concepts", ranked_conditions_.size()},
          {"common_conditions", common_count_},
          {"scaling", "age/100, (first visit year - 2000)/100, binary one-hot and presence"}};
}

std::vector<IdentityRecord> identity_records(const FeatureSpace& space, std::span<const omop::PatientHistory> corpus,
                                             std::size_t qid_diseases) {
  const auto& ranked = space.condition_ranking();
  qid_diseases = std::min({qid_diseases, ranked.size(), std::size_t(32)});
  std::vector<ConceptKey> qids(ranked.begin(), ranked.begin() + qid_diseases);
  std::vector<IdentityRecord> out;
  out.reserve(corpus.size());
  for (const auto& h : corpus) {
    IdentityRecord r;
    r.age = age_at_first_visit(h);
    r.gender = h.person.gender;
    r.race = h.person.race;
    for (auto k : event_concepts(h)) {
      auto q = std::find(qids.begin(), qids.end(), k);
      if (q != qids.end()) {
        r.diseases |= 1u << (q - qids.begin());
        continue;
      }
      if (auto c = space.column(k); c != FeatureSpace::npos) r.attributes.push_back(std::uint32_t(c));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cehr::privacy
