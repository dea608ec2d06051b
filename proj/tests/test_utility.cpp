#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "cehr/error.hpp"
#include "cehr/utility.hpp"
#include "support.hpp"

using namespace cehr;
using namespace cehr::utility;
using support::ymd;

namespace {

ConceptKey cond(ConceptId id) { return ConceptKey::of(Domain::Condition, id); }
ConceptKey drug(ConceptId id) { return ConceptKey::of(Domain::Drug, id); }

omop::PatientHistory patient(std::int64_t id, ConceptId gender,
                             std::vector<std::tuple<Domain, ConceptId, omop::Date>> events) {
  omop::PatientHistory h;
  h.person = {id, 1970, gender, 8527};
  std::set<omop::Date> dates;
  for (auto& [d, c, when] : events) dates.insert(when);
  for (auto when : dates) h.visits.push_back({id * 100 + std::int64_t(h.visits.size()), id, 9202, when, when, std::nullopt});
  for (auto& [d, c, when] : events) {
    std::int64_t vid = 0;
    for (const auto& v : h.visits)
      if (v.start == when) vid = v.visit_id;
    h.events.push_back({id, vid, d, c, when});
  }
  omop::canonicalize(h);
  return h;
}

// Patients contributing each ordered (earlier, later) pair, by direct enumeration.
std::map<ConceptPair, std::uint64_t> brute_force_pairs(const std::vector<omop::PatientHistory>& corpus) {
  std::map<ConceptPair, std::uint64_t> out;
  for (const auto& h : corpus) {
    std::set<ConceptPair> seen;
    for (const auto& a : h.events)
      for (const auto& b : h.events)
        if (a.date < b.date) seen.insert({ConceptKey::of(a.domain, a.concept_id), ConceptKey::of(b.domain, b.concept_id)});
    for (const auto& p : seen) ++out[p];
  }
  return out;
}

CooccurrenceMatrix matrix(std::map<ConceptPair, std::uint64_t> counts) {
  CooccurrenceMatrix m;
  for (auto& [k, c] : counts) m.total += c;
  m.counts = std::move(counts);
  return m;
}

}  // namespace

TEST_CASE("concept probability and prevalence") {
  const std::vector<omop::PatientHistory> corpus{
      patient(1, 8507, {{Domain::Condition, 100, ymd(2010, 1, 1)}, {Domain::Drug, 200, ymd(2010, 1, 1)},
                        {Domain::Condition, 100, ymd(2011, 1, 1)}}),
      patient(2, 8532, {{Domain::Condition, 100, ymd(2012, 1, 1)}})};
  CHECK(patient_concepts(corpus[0]).size() == 3);
  const auto stats = concept_probability(corpus);
  CHECK(stats.patients == 2);
  CHECK(stats.total_presence == 5);
  CHECK(stats.probability(cond(100)) == doctest::Approx(0.4));
  CHECK(stats.prevalence(cond(100)) == 1.0);
  CHECK(stats.prevalence(drug(200)) == 0.5);
  CHECK(stats.prevalence(ConceptKey::of(Domain::Visit, 9202)) == 1.0);
  const auto probs = stats.probabilities();
  CHECK(std::accumulate(probs.begin(), probs.end(), 0.0, [](double s, auto& kv) { return s + kv.second; }) ==
        doctest::Approx(1.0));

  const auto by_gender = concept_prevalence(corpus, "gender");
  CHECK(by_gender.at("gender:8507").at(drug(200)) == 1.0);
  CHECK(by_gender.at("gender:8532").count(drug(200)) == 0);
  CHECK(concept_prevalence(corpus, "age_band").count("age:40-49") == 1);
  CHECK_THROWS_AS(concept_prevalence(corpus, "zodiac"), Error);
  CHECK_THROWS_AS(concept_prevalence(corpus, "cohort"), Error);
  const std::unordered_map<std::int64_t, std::string> labels{{2, "hf"}};
  CHECK(concept_prevalence(corpus, "cohort", &labels).at("cohort:hf").at(cond(100)) == 1.0);
  CHECK(to_string(cond(100)) == "Condition:100");
}

TEST_CASE("KL divergence oracles") {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  CHECK(kl_divergence(p, q).value == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)));
  CHECK(std::abs(kl_divergence(p, q).value - 0.1438) < 1e-4);
  CHECK(kl_divergence(p, p).value == 0.0);
  const auto smoothed = kl_divergence(std::vector<double>{0.5, 0.5, 0.0}, std::vector<double>{1.0, 0.0, 0.0});
  CHECK(smoothed.smoothed_cells == 1);
  CHECK(smoothed.value > 10.0);
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}).synthetic_only_cells == 1);
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}).value == doctest::Approx(std::log(2.0)));
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}, 0.0), Error);

  std::map<int, double> a{{1, 0.5}, {2, 0.5}}, b{{2, 0.75}, {3, 0.25}};
  const auto r = kl_divergence(a, b);
  CHECK(r.smoothed_cells == 1);
  CHECK(r.synthetic_only_cells == 1);
}

TEST_CASE("co-occurrence hand case") {
  const auto h = patient(1, 8507,
                         {{Domain::Condition, 1, ymd(2010, 1, 1)}, {Domain::Condition, 2, ymd(2010, 1, 1)},
                          {Domain::Drug, 3, ymd(2010, 1, 2)}, {Domain::Condition, 1, ymd(2010, 1, 3)}});
  const std::vector<omop::PatientHistory> corpus{h, h};
  const auto m = build_cooccurrence(corpus);
  // (1,3) (2,3) (1,1) (2,1) (3,1); same-day 1/2 forms no pair.
  CHECK(m.counts.size() == 5);
  CHECK(m.total == 10);
  CHECK(m.counts.at({cond(1), drug(3)}) == 2);
  CHECK(m.counts.at({cond(1), cond(1)}) == 2);
  CHECK(m.counts.count({cond(1), cond(2)}) == 0);
  CHECK(m.probability(drug(3), cond(1)) == 0.2);
}

TEST_CASE("property: co-occurrence equals brute-force enumeration") {
  const auto corpus = support::random_corpus(200, 31, 8, 60, 20);
  const auto m = build_cooccurrence(corpus, 1);
  const auto oracle = brute_force_pairs(corpus);
  CHECK(m.counts == oracle);
  CHECK(m.total == std::accumulate(oracle.begin(), oracle.end(), std::uint64_t{0},
                                   [](std::uint64_t s, auto& kv) { return s + kv.second; }));
  CHECK(build_cooccurrence(corpus, 3).counts == m.counts);

  const auto dist = m.distribution();
  double total = 0.0;
  for (auto& [k, v] : dist) total += v;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  const auto rows = m.row_marginals();
  for (auto& [k, v] : rows) {
    double s = 0.0;
    for (auto& [pair, p] : dist)
      if (pair.first == k) s += p;
    CHECK(v == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("independence and bounds") {
  // Rows (1/4, 3/4) times columns (1/2, 1/2).
  const auto indep = matrix({{{cond(1), cond(3)}, 2}, {{cond(1), cond(4)}, 2}, {{cond(2), cond(3)}, 6}, {{cond(2), cond(4)}, 6}});
  CHECK(kl_to_independence(indep).value == 0.0);
  const auto skewed = matrix({{{cond(1), cond(3)}, 5}, {{cond(2), cond(4)}, 5}});
  CHECK(kl_to_independence(skewed).value == doctest::Approx(std::log(2.0)));
  CHECK(kl_divergence(skewed, skewed).value == 0.0);

  const auto corpus = support::random_corpus(400, 5, 6, 100, 10);
  const auto b = cooccurrence_bounds(corpus, 3);
  CHECK(b.lower >= 0.0);
  CHECK(b.upper >= 0.0);
  CHECK(b.ordered == (b.lower <= b.upper));
  CHECK(cooccurrence_bounds(corpus, 3).lower == b.lower);
  CHECK_THROWS_AS(cooccurrence_bounds(std::span(corpus).first(1), 3), Error);
}

TEST_CASE("PMI3 oracle") {
  // p(x,y) = 0.1, p(x) = p(y) = 0.2
  const auto m = matrix({{{cond(1), cond(2)}, 1}, {{cond(1), cond(3)}, 1}, {{cond(4), cond(2)}, 1}, {{cond(4), cond(3)}, 7}});
  CHECK(*pmi3(m, cond(1), cond(2)) == doctest::Approx(std::log(0.025)));
  CHECK(*pmi3(m, cond(1), cond(2)) == doctest::Approx(-3.689).epsilon(1e-3));
  CHECK_FALSE(pmi3(m, cond(2), cond(1)).has_value());
  const auto stronger = matrix({{{cond(1), cond(2)}, 2}, {{cond(1), cond(3)}, 0}, {{cond(4), cond(2)}, 0}, {{cond(4), cond(3)}, 8}});
  CHECK(*pmi3(stronger, cond(1), cond(2)) > *pmi3(m, cond(1), cond(2)));
}

TEST_CASE("top pairs by domain") {
  const auto src = matrix({{{cond(1), drug(2)}, 5}, {{cond(1), drug(3)}, 3}, {{cond(1), cond(2)}, 9}, {{drug(2), cond(1)}, 4}});
  const auto syn = matrix({{{cond(1), drug(3)}, 1}});
  const auto rows = top_pairs(src, syn, Domain::Condition, Domain::Drug, 100);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].pair.second == drug(2));
  CHECK(rows[0].source == doctest::Approx(5.0 / 21));
  CHECK(rows[0].synthetic == 0.0);
  CHECK(rows[1].synthetic == 1.0);
  CHECK(top_pairs(src, syn, Domain::Condition, Domain::Drug, 1).size() == 1);
}

TEST_CASE("concept networks") {
  const auto m = matrix({{{cond(1), cond(2)}, 6},
                         {{cond(1), cond(3)}, 4},
                         {{cond(1), drug(9)}, 5},
                         {{cond(1), cond(1)}, 50},
                         {{cond(2), cond(4)}, 3},
                         {{cond(3), cond(5)}, 2}});
  auto net = concept_network(m, cond(1), NetworkMetric::Prevalence, 2, 2);
  CHECK(net.nodes == std::vector<ConceptKey>{cond(1), cond(2), drug(9), cond(4)});
  REQUIRE(net.edges.size() == 3);
  CHECK(net.edges[0].to == cond(2));
  CHECK(net.edges[0].weight == doctest::Approx(6.0 / 70));

  auto conditions_only = concept_network(m, cond(1), NetworkMetric::Prevalence, 2, 1, Domain::Condition);
  CHECK(conditions_only.nodes == std::vector<ConceptKey>{cond(1), cond(2), cond(3)});
  auto pmi = concept_network(m, cond(1), NetworkMetric::Pmi3, 1, 1);
  CHECK(pmi.edges[0].weight == doctest::Approx(*pmi3(m, pmi.edges[0].from, pmi.edges[0].to)));
  CHECK_THROWS_AS(concept_network(m, cond(77), NetworkMetric::Prevalence), Error);

  const auto cmp = compare_networks(net, conditions_only);
  CHECK(cmp.shared == 1);
  CHECK(cmp.edges_a == 3);
  CHECK(cmp.shared_fraction == doctest::Approx(1.0 / 3));
  CHECK(net.edges[0].shared);
  CHECK_FALSE(net.edges[1].shared);

  const auto dir = support::temp_dir("network");
  const std::unordered_map<ConceptId, std::string> names{{1, "Heart \"failure\""}};
  write_dot(net, dir / "n.dot", &names);
  write_edge_csv(net, dir / "n.csv");
  const auto dot = support::slurp(dir / "n.dot");
  CHECK(dot.find("shape=box") != std::string::npos);
  CHECK(dot.find("color=gold") != std::string::npos);
  CHECK(dot.find("Heart \\\"failure\\\"") != std::string::npos);
  const auto csv = support::slurp(dir / "n.csv");
  CHECK(csv.rfind("from,to,weight,shared\nCondition:1,Condition:2,", 0) == 0);
}
