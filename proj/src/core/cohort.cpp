#include <algorithm>
#include <fstream>
#include <thread>
#include <unordered_set>

#include "cehr/error.hpp"
#include "cehr/predictive.hpp"
#include "csv.hpp"

namespace cehr::predictive {

using nlohmann::json;

namespace {

std::string_view kind_name(IndexRule::Kind k) {
  switch (k) {
    case IndexRule::Kind::Visit: return "visit";
    case IndexRule::Kind::Event: return "event";
    case IndexRule::Kind::EntryOffset: return "entry_offset";
  }
  return "event";
}

std::vector<ConceptId> id_list(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  auto v = j.at(key).get<std::vector<ConceptId>>();
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool contains(const std::vector<ConceptId>& sorted, ConceptId c) {
  return std::binary_search(sorted.begin(), sorted.end(), c);
}

}  // namespace

void CohortDefinition::validate() const {
  auto bad = [&](const std::string& what) { fail(ErrorCode::InvalidArgument, "cohort '" + name + "': " + what); };
  if (observation_days < 0 || hold_off_days < 0 || prediction_days < 0) bad("windows must be non-negative");
  if (hold_off_days > observation_days) bad("hold-off window exceeds the observation window");
  if (prediction_days == 0) bad("prediction window is empty");
  if (outcome.empty()) bad("outcome rule has no concepts or visit types");
  if (index.kind == IndexRule::Kind::Event && index.concepts.empty()) bad("event index rule has no concepts");
  if (index.kind == IndexRule::Kind::EntryOffset && index.offset_days < 0) bad("negative entry offset");
}

CohortDefinition cohort_from_json(const json& j) {
  CohortDefinition d;
  try {
    d.name = j.value("name", std::string("cohort"));
    const json& ix = j.at("index");
    const std::string kind = ix.value("kind", std::string("event"));
    if (kind == "visit") d.index.kind = IndexRule::Kind::Visit;
    else if (kind == "event") d.index.kind = IndexRule::Kind::Event;
    else if (kind == "entry_offset") d.index.kind = IndexRule::Kind::EntryOffset;
    else fail(ErrorCode::InvalidArgument, "unknown index kind '" + kind + "'");
    d.index.concepts = id_list(ix, "concepts");
    d.index.visit_types = id_list(ix, "visit_types");
    const std::string anchor = ix.value("anchor", std::string("start"));
    if (anchor != "start" && anchor != "end") fail(ErrorCode::InvalidArgument, "index anchor must be start or end");
    d.index.anchor_at_end = anchor == "end";
    d.index.first_occurrence = ix.value("first_occurrence", true);
    d.index.offset_days = ix.value("offset_days", 0);
    d.observation_days = j.value("observation_days", 360);
    d.hold_off_days = j.value("hold_off_days", 0);
    d.prediction_days = j.value("prediction_days", 30);
    if (j.contains("outcome")) {
      d.outcome.concepts = id_list(j.at("outcome"), "concepts");
      d.outcome.visit_types = id_list(j.at("outcome"), "visit_types");
    }
    if (j.contains("filters")) {
      const json& f = j.at("filters");
      d.min_prior_visits = f.value("min_prior_visits", 0);
      d.exclude_prior_concepts = id_list(f, "exclude_prior_concepts");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed cohort definition: ") + e.what());
  }
  return d;
}

json to_json(const CohortDefinition& d) {
  return json{{"name", d.name},
              {"index",
               {{"kind", kind_name(d.index.kind)},
                {"concepts", d.index.concepts},
                {"visit_types", d.index.visit_types},
                {"anchor", d.index.anchor_at_end ? "end" : "start"},
                {"first_occurrence", d.index.first_occurrence},
                {"offset_days", d.index.offset_days}}},
              {"observation_days", d.observation_days},
              {"hold_off_days", d.hold_off_days},
              {"prediction_days", d.prediction_days},
              {"outcome", {{"concepts", d.outcome.concepts}, {"visit_types", d.outcome.visit_types}}},
              {"filters",
               {{"min_prior_visits", d.min_prior_visits}, {"exclude_prior_concepts", d.exclude_prior_concepts}}}};
}

CohortDefinition load_cohort_definition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open cohort definition " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, path.string() + ": " + e.what());
  }
  auto d = cohort_from_json(j);
  if (d.name.empty()) d.name = path.stem().string();
  return d;
}

namespace {

std::optional<CohortSample> cohort_sample(const omop::PatientHistory& h, const CohortDefinition& def) {
  const auto dates = omop::timeline_dates(h);
  if (dates.empty()) return std::nullopt;
  const Date first = dates.front(), last = dates.back();
  using std::chrono::days;

  std::vector<Date> candidates;
  switch (def.index.kind) {
    case IndexRule::Kind::Visit:
      for (const auto& v : h.visits) {
        if (!def.index.visit_types.empty() && !contains(def.index.visit_types, v.visit_type)) continue;
        if (!def.index.concepts.empty()) {
          bool hit = false;
          for (const auto& e : h.events) hit = hit || (e.visit_id == v.visit_id && contains(def.index.concepts, e.concept_id));
          if (!hit) continue;
        }
        candidates.push_back(def.index.anchor_at_end ? v.end : v.start);
      }
      break;
    case IndexRule::Kind::Event:
      for (const auto& e : h.events)
        if (contains(def.index.concepts, e.concept_id)) candidates.push_back(e.date);
      break;
    case IndexRule::Kind::EntryOffset:
      candidates.push_back(first + days(def.index.offset_days));
      break;
  }
  std::stable_sort(candidates.begin(), candidates.end());
  if (def.index.first_occurrence && candidates.size() > 1) candidates.resize(1);

  for (Date index : candidates) {
    const Date window_start = index - days(def.observation_days);
    if (first > window_start || last < index) continue;
    int prior_visits = 0;
    for (const auto& v : h.visits) prior_visits += v.start <= index;
    if (prior_visits < def.min_prior_visits) continue;
    bool excluded = false;
    for (const auto& e : h.events)
      excluded = excluded || (e.date <= index && contains(def.exclude_prior_concepts, e.concept_id));
    if (excluded) continue;

    const Date horizon = index + days(def.prediction_days);
    int label = 0;
    for (const auto& e : h.events)
      if (e.date > index && e.date <= horizon && contains(def.outcome.concepts, e.concept_id)) label = 1;
    for (const auto& v : h.visits)
      if (v.start > index && v.start <= horizon && contains(def.outcome.visit_types, v.visit_type)) label = 1;
    return CohortSample{h.person.person_id, 0, index, window_start, index - days(def.hold_off_days), label};
  }
  return std::nullopt;
}

}  // namespace

std::vector<CohortSample> build_cohort(std::span<const omop::PatientHistory> corpus, const CohortDefinition& def,
                                       unsigned threads) {
  def.validate();
  std::vector<std::optional<CohortSample>> slots(corpus.size());
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, corpus.size()))));
  auto run = [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      slots[i] = cohort_sample(corpus[i], def);
      if (slots[i]) slots[i]->patient = i;
    }
  };
  if (threads == 1) {
    run(0, corpus.size());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t)
      workers.emplace_back(run, std::min(corpus.size(), t * chunk), std::min(corpus.size(), (t + 1) * chunk));
  }
  std::vector<CohortSample> out;
  for (auto& s : slots)
    if (s) out.push_back(*s);
  return out;
}

AncestorMap AncestorMap::from_pairs(const std::vector<std::pair<ConceptId, ConceptId>>& descendant_ancestor) {
  AncestorMap m;
  for (auto [d, a] : descendant_ancestor) {
    if (d == a) continue;
    auto [it, fresh] = m.parent_.emplace(d, a);
    if (!fresh) it->second = std::min(it->second, a);
  }
  m.check_acyclic();
  return m;
}

AncestorMap AncestorMap::load(const std::filesystem::path& path, int level) {
  csv::Reader r(path);
  const int ai = r.column("ancestor_concept_id"), di = r.column("descendant_concept_id");
  const int li = r.column("min_levels_of_separation");
  if (ai < 0 || di < 0) fail(ErrorCode::Data, path.string() + ": missing ancestor/descendant columns");
  std::vector<std::pair<ConceptId, ConceptId>> pairs;
  std::vector<std::string> f;
  while (r.next(f)) {
    try {
      if (li >= 0 && std::stoi(f.at(li)) != level) continue;
      pairs.emplace_back(std::stoll(f.at(di)), std::stoll(f.at(ai)));
    } catch (const std::exception&) {
      fail(ErrorCode::Data, path.string() + ":" + std::to_string(r.line()) + ": malformed row");
    }
  }
  return from_pairs(pairs);
}

void AncestorMap::check_acyclic() const {
  // 0 unvisited, 1 on the current chain, 2 known to terminate
  std::unordered_map<ConceptId, int> state;
  for (auto& [start, _] : parent_) {
    std::vector<ConceptId> chain;
    ConceptId c = start;
    while (true) {
      int& s = state[c];
      if (s == 2) break;
      if (s == 1) fail(ErrorCode::Data, "concept ancestor map has a cycle through " + std::to_string(c));
      s = 1;
      chain.push_back(c);
      auto it = parent_.find(c);
      if (it == parent_.end()) break;
      c = it->second;
    }
    for (auto x : chain) state[x] = 2;
  }
}

ConceptId AncestorMap::roll_up(ConceptId c) const {
  auto it = parent_.find(c);
  return it == parent_.end() ? c : it->second;
}

std::vector<ConceptId> roll_up(std::span<const ConceptId> concepts, const AncestorMap& map) {
  std::vector<ConceptId> out;
  out.reserve(concepts.size());
  for (auto c : concepts) out.push_back(map.roll_up(c));
  return out;
}

BowFeatures bow_features(std::span<const omop::PatientHistory> corpus, std::span<const CohortSample> samples,
                         const AncestorMap* ancestors) {
  std::vector<std::vector<std::pair<ConceptId, double>>> rows(samples.size());
  std::vector<ConceptId> all;
  for (std::size_t r = 0; r < samples.size(); ++r) {
    const auto& s = samples[r];
    const auto& h = corpus[s.patient];
    std::vector<ConceptId> hits;
    for (const auto& e : h.events)
      if (e.date >= s.window_start && e.date <= s.window_end) hits.push_back(e.concept_id);
    for (const auto& v : h.visits)
      if (v.start >= s.window_start && v.start <= s.window_end) hits.push_back(v.visit_type);
    if (ancestors) hits = roll_up(hits, *ancestors);
    std::sort(hits.begin(), hits.end());
    for (std::size_t i = 0; i < hits.size();) {
      std::size_t j = i;
      while (j < hits.size() && hits[j] == hits[i]) ++j;
      rows[r].emplace_back(hits[i], double(j - i));
      all.push_back(hits[i]);
      i = j;
    }
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());

  BowFeatures x;
  x.columns = all;
  for (std::size_t r = 0; r < samples.size(); ++r) {
    for (auto [c, n] : rows[r]) {
      x.col.push_back(std::uint32_t(std::lower_bound(all.begin(), all.end(), c) - all.begin()));
      x.value.push_back(n);
    }
    x.row_ptr.push_back(x.col.size());
    x.labels.push_back(samples[r].label);
  }
  return x;
}

}  // namespace cehr::predictive
