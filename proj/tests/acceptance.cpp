// Prints one PASS/FAIL line per acceptance criterion; exits non-zero when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>

#include "cehr/codec.hpp"
#include "cehr/demo.hpp"
#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/predictive.hpp"
#include "cehr/privacy.hpp"
#include "cehr/sequence_io.hpp"
#include "cehr/utility.hpp"
#include "support.hpp"

using namespace cehr;
using codec::SchemeName;
using codec::TokenKind;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

codec::Representation rep_of(SchemeName s) {
  codec::Representation rep;
  rep.scheme = codec::AttScheme::named(s);
  return rep;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

Outcome round_trip() {
  const auto rep = rep_of(SchemeName::CehrGpt);
  const auto t0 = Clock::now();
  std::size_t bad = 0;
  codec::IdAllocator ids;
  for (std::size_t i = 0; i < 10000; ++i) {
    gen::Rng rng(1001, i);
    const auto h = support::random_history(rng, std::int64_t(i) + 1);
    const auto back = codec::decode_patient(codec::encode_patient(h, rep), rep, ids, {});
    bad += !support::shifted_equal(omop::timeline_dates(h), omop::timeline_dates(back));
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0, fmt("%.0f mismatches, %.2f s", double(bad), secs)};
}

bool structural(TokenKind k) {
  return k == TokenKind::VisitStart || k == TokenKind::VisitEnd || k == TokenKind::VisitType ||
         k == TokenKind::Discharge || (codec::is_interval(k) && k != TokenKind::InpatientDay);
}

Outcome grammar() {
  const auto rep = rep_of(SchemeName::CehrGpt);
  const auto corpus = omop::histories(demo::generate(1000, 2));
  std::vector<codec::TokenSequence> encoded;
  std::size_t rejected = 0;
  for (const auto& h : corpus) {
    if (h.events.empty()) continue;
    encoded.push_back(codec::encode_patient(h, rep, 512));
    rejected += !codec::validate_sequence(encoded.back(), rep).accepted;
  }

  const auto model = gen::MarkovModel::fit(encoded, 2, 0.1);
  gen::SamplerConfig cfg;
  cfg.grammar_constrained = true;
  cfg.seed = 12;
  cfg.max_len = 256;
  const auto g = gen::generate_corpus(model, gen::PromptPool::from_corpus(encoded), cfg, rep, 10000, 1);
  std::size_t gen_rejected = 0;
  for (const auto& s : g.sequences) gen_rejected += !codec::validate_sequence(s, rep).accepted;

  gen::Rng rng(77, 0);
  std::size_t mutants = 0, accepted_mutants = 0;
  while (mutants < 1000) {
    const auto& s = encoded[rng.below(encoded.size())];
    std::vector<std::size_t> cand;
    for (std::size_t i = 4; i < s.tokens.size(); ++i)
      if (structural(s.tokens[i].kind)) cand.push_back(i);
    if (cand.empty()) continue;
    auto m = s;
    m.tokens.erase(m.tokens.begin() + std::ptrdiff_t(cand[rng.below(cand.size())]));
    ++mutants;
    accepted_mutants += codec::validate_sequence(m, rep).accepted;
  }
  const bool pass = rejected == 0 && g.report.invalid == 0 && gen_rejected == 0 && accepted_mutants == 0;
  return {pass, "encoder rejected " + std::to_string(rejected) + "/" + std::to_string(encoded.size()) +
                    ", generated " + std::to_string(g.sequences.size()) + " valid of " +
                    std::to_string(g.report.attempts) + " (invalid " + std::to_string(g.report.invalid + gen_rejected) +
                    "), mutants accepted " + std::to_string(accepted_mutants) + "/1000"};
}

Outcome cooccurrence() {
  std::vector<omop::PatientHistory> corpus;
  for (const auto& h : support::random_corpus(400, 303, 6, 300, 25))
    if (h.events.size() <= 30 && corpus.size() < 200) corpus.push_back(h);
  std::map<utility::ConceptPair, std::uint64_t> oracle;
  for (const auto& h : corpus) {
    std::set<utility::ConceptPair> seen;
    for (const auto& a : h.events)
      for (const auto& b : h.events)
        if (a.date < b.date)
          seen.insert({utility::ConceptKey::of(a.domain, a.concept_id), utility::ConceptKey::of(b.domain, b.concept_id)});
    for (const auto& p : seen) ++oracle[p];
  }
  const auto m = utility::build_cooccurrence(corpus, 1);
  const auto m4 = utility::build_cooccurrence(corpus, 4);
  const bool pass = corpus.size() == 200 && m.counts == oracle && m4.counts == oracle;
  return {pass, std::to_string(corpus.size()) + " patients, " + std::to_string(oracle.size()) + " pairs"};
}

Outcome kl() {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  const double self = utility::kl_divergence(p, p).value;
  const double pq = utility::kl_divergence(p, q).value;

  // Two events per patient on consecutive days, drawn independently.
  std::vector<omop::PatientHistory> corpus;
  corpus.reserve(50000);
  gen::Rng rng(404, 0);
  for (std::int64_t i = 1; i <= 50000; ++i) {
    omop::PatientHistory h;
    h.person = {i, 1960, 8507, 8527};
    const auto d = support::ymd(2015, 1, 1);
    for (int k = 0; k < 2; ++k) {
      const auto when = d + support::days(k);
      h.visits.push_back({i * 10 + k, i, omop::kOutpatientVisit, when, when, std::nullopt});
      h.events.push_back({i, i * 10 + k, omop::Domain::Condition, omop::ConceptId(1 + 10 * k + rng.below(10)), when});
    }
    omop::canonicalize(h);
    corpus.push_back(std::move(h));
  }
  const double upper = utility::kl_to_independence(utility::build_cooccurrence(corpus)).value;
  const bool pass = self == 0.0 && std::abs(pq - 0.1438) < 1e-4 && upper <= 0.05;
  return {pass, fmt("KL(p,p)=%.3g, KL(p,q)=%.4f, independence bound %.5f", self, pq, upper)};
}

Outcome loti() {
  const auto corpus = omop::histories(demo::generate(2000, 5));
  const auto dist = codec::interval_distribution(corpus, rep_of(SchemeName::CehrGpt));
  std::vector<double> v;
  for (auto s : {SchemeName::CehrGpt, SchemeName::GptOutpat, SchemeName::CehrBert, SchemeName::Vanilla})
    v.push_back(codec::loti(codec::AttScheme::named(s), dist));
  const bool ordered = std::is_sorted(v.begin(), v.end());

  codec::IntervalDistribution small;
  for (std::int64_t d = 0; d <= 1080; d += 7) small.add(d, codec::IntervalContext::BetweenVisit);
  small.add(3, codec::IntervalContext::WithinInpatient, 4);
  const double gpt_small = codec::loti(codec::AttScheme::cehr_gpt(), small);
  const bool vanilla_mean = std::abs(v[3] - dist.mean()) <= 1e-9;
  return {ordered && gpt_small == 0.0 && vanilla_mean,
          fmt("LOTI %.2f <= %.2f <= %.2f", v[0], v[1], v[2]) + fmt(" <= %.2f; short-gap CEHR-GPT %.3g", v[3], gpt_small)};
}

Outcome markov() {
  const double t[3][3] = {{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.3, 0.3, 0.4}};
  gen::Rng rng(6, 0);
  std::vector<codec::TokenSequence> corpus(10);
  for (auto& s : corpus) {
    std::uint32_t state = 0;
    for (int i = 0; i < 10000; ++i) {
      s.tokens.push_back({TokenKind::Concept, std::int64_t(state)});
      state = gen::sample_index(t[state], rng);
    }
  }
  const auto m = gen::MarkovModel::fit(corpus, 1, 0.0);
  double worst = 0.0;
  for (std::uint32_t a = 0; a < 3; ++a) {
    const auto p = m.next_distribution(std::vector<std::uint32_t>{m.vocabulary().index({TokenKind::Concept, a})});
    for (std::uint32_t b = 0; b < 3; ++b)
      worst = std::max(worst, std::abs(p[m.vocabulary().index({TokenKind::Concept, b})] - t[a][b]));
  }
  return {worst <= 0.02, fmt("max transition error %.4f over 100000 tokens", worst)};
}

Outcome sampling() {
  gen::Rng rng(7, 0);
  bool identity = true, argmax = true, normalized = true;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> p(2 + rng.below(60));
    double total = 0.0;
    for (auto& x : p) total += (x = rng.uniform() < 0.2 ? 0.0 : rng.uniform());
    if (total == 0.0) continue;
    gen::SamplerConfig cfg;
    cfg.strategy = gen::TopP{1.0};
    const auto q = gen::truncate_distribution(p, cfg);
    for (std::size_t i = 0; i < p.size(); ++i) identity = identity && std::abs(q[i] - p[i] / total) <= 1e-12;

    cfg.strategy = gen::TopK{1};
    const auto k1 = gen::truncate_distribution(p, cfg);
    const auto best = std::size_t(std::max_element(p.begin(), p.end()) - p.begin());
    argmax = argmax && k1[best] == 1.0;

    cfg.strategy = gen::TopK{1 + rng.below(p.size())};
    cfg.temperature = 0.3 + 2.0 * rng.uniform();
    for (auto strategy : {cfg.strategy, std::variant<gen::TopK, gen::TopP>{gen::TopP{0.05 + 0.95 * rng.uniform()}}}) {
      cfg.strategy = strategy;
      double s = 0.0;
      for (double x : gen::truncate_distribution(p, cfg)) s += x;
      normalized = normalized && std::abs(s - 1.0) <= 1e-9;
    }
  }

  const auto rep = rep_of(SchemeName::CehrGpt);
  std::vector<codec::TokenSequence> corpus;
  for (const auto& h : omop::histories(demo::generate(300, 8))) corpus.push_back(codec::encode_patient(h, rep, 256));
  const auto model = gen::MarkovModel::fit(corpus, 2, 0.1);
  const auto pool = gen::PromptPool::from_corpus(corpus);
  gen::SamplerConfig cfg;
  cfg.strategy = gen::TopP{0.9};
  cfg.seed = 99;
  cfg.grammar_constrained = true;
  cfg.max_len = 256;
  std::string a, b;
  for (const auto& s : gen::generate_corpus(model, pool, cfg, rep, 500, 1).sequences) a += io::to_jsonl_line(s) + "\n";
  for (const auto& s : gen::generate_corpus(model, pool, cfg, rep, 500, 4).sequences) b += io::to_jsonl_line(s) + "\n";
  const bool same = !a.empty() && a == b;
  return {identity && argmax && normalized && same,
          std::string("top-p(1) identity ") + (identity ? "yes" : "no") + ", top-k(1) argmax " + (argmax ? "yes" : "no") +
              ", renormalized " + (normalized ? "yes" : "no") + ", serial == parallel " + (same ? "yes" : "no")};
}

double pairwise_auc(const std::vector<int>& y, const std::vector<double>& s) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        num += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return num / pairs;
}

Outcome predictive_checks() {
  gen::Rng rng(8, 0);
  predictive::BowFeatures x;
  for (int c = 0; c < 12; ++c) x.columns.push_back(c);
  for (int r = 0; r < 80; ++r) {
    for (std::uint32_t c = 0; c < 12; ++c)
      if (rng.uniform() < 0.4) {
        x.col.push_back(c);
        x.value.push_back(double(1 + rng.below(4)));
      }
    x.row_ptr.push_back(x.col.size());
    x.labels.push_back(int(rng.below(2)));
  }
  std::vector<std::size_t> rows(80);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  double worst_grad = 0.0;
  for (int point = 0; point < 5; ++point) {
    std::vector<double> w(13);
    for (auto& v : w) v = rng.uniform() - 0.5;
    std::vector<double> g;
    predictive::logistic_loss(x, rows, w, 1.0, &g);
    for (std::size_t k = 0; k < w.size(); ++k) {
      auto hi = w, lo = w;
      const double h = 1e-5;
      hi[k] += h;
      lo[k] -= h;
      const double fd =
          (predictive::logistic_loss(x, rows, hi, 1.0) - predictive::logistic_loss(x, rows, lo, 1.0)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(fd - g[k]) / std::max(1.0, std::abs(g[k])));
    }
  }

  bool auc_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    std::vector<int> y(n);
    std::vector<double> s(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = int(rng.below(2));
      s[i] = double(rng.below(30));
    }
    y[0] = 1;
    y[1] = 0;
    auc_ok = auc_ok && std::abs(*predictive::roc_auc(y, s) - pairwise_auc(y, s)) <= 1e-12;
  }

  const predictive::CohortMetrics real{0.257, 0.657, 0.393, 100, ""};
  const predictive::CohortMetrics syn{0.276, 0.692, 0.457, 100, ""};
  const double dist = *predictive::consolidated_distance(real, syn).value;
  const bool pass = worst_grad < 1e-5 && auc_ok && std::abs(dist - 0.0910) <= 5e-4;
  return {pass, fmt("gradient error %.2g, AUC oracle %s", worst_grad) + (auc_ok ? "match" : "mismatch") +
                    fmt(", dist %.4f", dist)};
}

Outcome vanilla_cohort() {
  const auto rep = rep_of(SchemeName::Vanilla);
  const auto corpus = omop::histories(demo::generate(2000, 9));
  std::vector<omop::PatientHistory> decoded;
  codec::IdAllocator ids;
  for (const auto& h : corpus)
    if (!h.events.empty()) decoded.push_back(codec::decode_patient(codec::encode_patient(h, rep), rep, ids, {}));
  const auto defs = demo::cohorts();
  const auto def = std::find_if(defs.begin(), defs.end(), [](auto& d) { return d.name == "hf_readmission"; });
  const auto real = predictive::build_cohort(corpus, *def);
  const auto cohort = predictive::build_cohort(decoded, *def);
  std::size_t pos = 0;
  for (const auto& s : cohort) pos += s.label;
  const bool degenerate = cohort.empty() || pos == cohort.size();
  return {degenerate && !real.empty(), "real cohort " + std::to_string(real.size()) + ", after vanilla round trip " +
                                           std::to_string(cohort.size()) + " samples with " + std::to_string(pos) +
                                           " positives"};
}

Outcome privacy_checks() {
  const auto t0 = Clock::now();
  const auto train = omop::histories(demo::generate(2000, 10));
  const auto other = omop::histories(demo::generate(2000, 11, 100001));
  const auto space = privacy::FeatureSpace::fit(train);
  const auto a = space.vectorize(train), b = space.vectorize(other);
  const auto nn = privacy::nearest_neighbor(a, b, false, 1);
  const auto ref = privacy::nearest_neighbor_brute_force(a, b, false);
  bool nn_ok = true;
  for (std::size_t i = 0; i < nn.size(); ++i)
    nn_ok = nn_ok && nn[i].index == ref[i].index && std::abs(nn[i].distance - ref[i].distance) <= 1e-9;

  privacy::AttackConfig cfg;
  cfg.repetitions = 10;
  const auto nnaa = privacy::nnaa_risk(a, a, b, cfg);
  cfg.theta = 1e-9;
  const auto mem = privacy::membership_inference(a, b, a, cfg);

  privacy::IdentityRecord rec{60, 8507, 8527, 1, {1, 2}};
  std::vector<privacy::IdentityRecord> one{rec};
  std::vector<std::size_t> sample{0};
  const auto id = privacy::identity_disclosure_run(one, sample, one, false, 1, privacy::AttackConfig{});

  const auto t1 = Clock::now();
  std::vector<omop::PatientHistory> tr(train.begin(), train.begin() + 1000), ho(other.begin(), other.begin() + 1000);
  const auto syn = omop::histories(demo::generate(1000, 12, 200001));
  const auto report = privacy::privacy_report(tr, ho, syn, privacy::AttackConfig{});
  const double report_secs = seconds_since(t1);

  const bool pass = nn_ok && nnaa.risk == 0.0 && mem.recall.mean == 1.0 &&
                    std::abs(id.population_term - 0.615) < 1e-12 && std::abs(id.sample_term - 0.615) < 1e-12 &&
                    report.contains("nnaa") && report_secs < 300.0;
  return {pass, std::string("NN ") + (nn_ok ? "matches" : "differs") + fmt(", NNAA %.3g, recall %.3f", nnaa.risk, mem.recall.mean) +
                    fmt(", identity %.3f, report %.1f s (total %.1f s)", id.score, report_secs, seconds_since(t0))};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"encode/decode round trip preserves timelines", round_trip},
      {"grammar accepts valid and rejects structural mutants", grammar},
      {"co-occurrence counts match brute force", cooccurrence},
      {"KL divergence oracles and independence bound", kl},
      {"LOTI ordering and exactness", loti},
      {"Markov model recovers a known chain", markov},
      {"sampler truncation and determinism", sampling},
      {"logistic gradient, AUC and consolidated distance", predictive_checks},
      {"vanilla round trip collapses the readmission cohort", vanilla_cohort},
      {"privacy attacks", privacy_checks},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - std::size_t(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
