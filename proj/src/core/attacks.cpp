#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <thread>
#include <tuple>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/privacy.hpp"

namespace cehr::privacy {

using nlohmann::json;

void AttackConfig::validate() const {
  if (!(theta > 0.0)) fail(ErrorCode::InvalidArgument, "membership threshold must be positive");
  if (!(l_percent > 0.0 && l_percent < 100.0)) fail(ErrorCode::InvalidArgument, "L must lie in (0, 100)");
  if (!(lambda_s >= 0.0 && lambda_s <= 1.0)) fail(ErrorCode::InvalidArgument, "lambda_s must lie in [0, 1]");
  if (repetitions == 0 || nnaa_runs == 0) fail(ErrorCode::InvalidArgument, "repetition counts must be positive");
  if (qid_diseases > 16) fail(ErrorCode::InvalidArgument, "at most 16 QID diseases are supported");
}

AttackConfig AttackConfig::from_json(const json& j) {
  AttackConfig c;
  try {
    c.theta = j.value("theta", c.theta);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.membership_sample = j.value("membership_sample", c.membership_sample);
    c.attribute_targets = j.value("attribute_targets", c.attribute_targets);
    c.nnaa_sample = j.value("nnaa_sample", c.nnaa_sample);
    c.nnaa_runs = j.value("nnaa_runs", c.nnaa_runs);
    c.lambda_s = j.value("lambda_s", c.lambda_s);
    c.l_percent = j.value("l_percent", c.l_percent);
    c.qid_diseases = j.value("qid_diseases", c.qid_diseases);
    c.age_bands = j.value("age_bands", c.age_bands);
    c.disease_subsets = j.value("disease_subsets", c.disease_subsets);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("malformed attack config: ") + e.what());
  }
  c.validate();
  return c;
}

json AttackConfig::to_json() const {
  return {{"theta", theta},
          {"repetitions", repetitions},
          {"membership_sample", membership_sample},
          {"attribute_targets", attribute_targets},
          {"nnaa_sample", nnaa_sample},
          {"nnaa_runs", nnaa_runs},
          {"lambda_s", lambda_s},
          {"l_percent", l_percent},
          {"qid_diseases", qid_diseases},
          {"age_bands", age_bands},
          {"disease_subsets", disease_subsets},
          {"seed", seed}};
}

namespace {

std::vector<std::size_t> sample_rows(std::size_t total, std::size_t n, gen::Rng& rng) {
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  gen::shuffle(std::span(idx), rng);
  idx.resize(std::min(n, total));
  return idx;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / double(v.size() - 1));
  }
  return s;
}

json to_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

double ratio(double a, double b) { return b > 0.0 ? a / b : 0.0; }

}  // namespace

MembershipResult membership_inference(const Matrix& train, const Matrix& holdout, const Matrix& synthetic,
                                      const AttackConfig& cfg) {
  cfg.validate();
  const auto d_train = nearest_neighbor(train, synthetic, false, cfg.threads);
  const auto d_hold = nearest_neighbor(holdout, synthetic, false, cfg.threads);

  MembershipResult r;
  r.positives_per_run = std::min(cfg.membership_sample, train.rows);
  r.negatives_per_run = std::min(cfg.membership_sample, holdout.rows);
  std::vector<double> acc, prec, rec;
  for (std::size_t rep = 0; rep < cfg.repetitions; ++rep) {
    gen::Rng rng(cfg.seed, rep);
    const auto pos = sample_rows(train.rows, r.positives_per_run, rng);
    const auto neg = sample_rows(holdout.rows, r.negatives_per_run, rng);
    double tp = 0, fp = 0;
    for (auto i : pos) tp += d_train[i].distance < cfg.theta;
    for (auto i : neg) fp += d_hold[i].distance < cfg.theta;
    const double fn = double(pos.size()) - tp, tn = double(neg.size()) - fp;
    acc.push_back(ratio(tp + tn, double(pos.size() + neg.size())));
    prec.push_back(ratio(tp, tp + fp));
    rec.push_back(ratio(tp, tp + fn));
    r.f1_runs.push_back(ratio(2 * tp, 2 * tp + fp + fn));
  }
  r.accuracy = summarize(acc);
  r.precision = summarize(prec);
  r.recall = summarize(rec);
  r.f1 = summarize(r.f1_runs);
  return r;
}

namespace {

AttributeScore attribute_score(const Matrix& targets, const Matrix& search, std::span<const std::size_t> match_cols,
                               std::span<const std::size_t> sensitive_cols, unsigned threads) {
  const auto nn = nearest_neighbor(project(targets, match_cols), project(search, match_cols), false, threads);
  AttributeScore s;
  double f1_sum = 0, tp_sum = 0, t_sum = 0, m_sum = 0;
  for (std::size_t i = 0; i < targets.rows; ++i) {
    auto t = targets.row(i);
    auto m = search.row(nn[i].index);
    double tp = 0, nt = 0, nm = 0;
    for (auto c : sensitive_cols) {
      nt += t[c] > 0.5;
      nm += m[c] > 0.5;
      tp += t[c] > 0.5 && m[c] > 0.5;
    }
    if (nt == 0) {
      ++s.excluded;
      continue;
    }
    ++s.pairs;
    f1_sum += 2 * tp / (nt + nm);
    tp_sum += tp;
    t_sum += nt;
    m_sum += nm;
  }
  s.macro_f1 = ratio(f1_sum, double(s.pairs));
  s.micro_f1 = ratio(2 * tp_sum, t_sum + m_sum);
  s.precision = ratio(tp_sum, m_sum);
  s.recall = ratio(tp_sum, t_sum);
  return s;
}

}  // namespace

AttributeResult attribute_inference(const FeatureSpace& space, const Matrix& real, const Matrix& synthetic,
                                    const AttackConfig& cfg) {
  cfg.validate();
  const auto match = space.columns_of({Partition::Demographic, Partition::Common});
  const auto sensitive = space.columns_of({Partition::Sensitive});
  AttributeResult r;

  gen::Rng rng(cfg.seed, 0);
  const auto targets = sample_rows(real.rows, cfg.attribute_targets, rng);
  r.synthetic = attribute_score(select_rows(real, targets), synthetic, match, sensitive, cfg.threads);

  if (real.rows >= 2) {
    gen::Rng split(cfg.seed, 1);
    auto order = sample_rows(real.rows, real.rows, split);
    const std::size_t half = real.rows / 2;
    std::vector<std::size_t> base_targets(order.begin(), order.begin() + std::min(half, cfg.attribute_targets));
    std::vector<std::size_t> base_search(order.begin() + half, order.end());
    r.baseline = attribute_score(select_rows(real, base_targets), select_rows(real, base_search), match, sensitive,
                                 cfg.threads);
  }
  r.pass = r.synthetic.macro_f1 <= r.baseline.macro_f1;
  return r;
}

namespace {

using QidKey = std::tuple<int, omop::ConceptId, omop::ConceptId, std::uint32_t>;

QidKey qid_key(const IdentityRecord& r, bool age_band, std::uint32_t mask) {
  return {age_band ? (r.age >= 0 ? r.age / 10 : -1) : r.age, r.gender, r.race, r.diseases & mask};
}

std::size_t shared_count(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::size_t n = 0;
  auto i = a.begin(), j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) ++i;
    else if (*j < *i) ++j;
    else ++n, ++i, ++j;
  }
  return n;
}

bool learns_enough(const IdentityRecord& real, const IdentityRecord& syn, double l_percent) {
  if (real.attributes.empty()) return false;
  const double needed = std::max(1.0, l_percent / 100.0 * double(real.attributes.size()));
  return double(shared_count(real.attributes, syn.attributes)) >= needed;
}

IdentityRun disclosure_run(std::span<const IdentityRecord> population, std::span<const std::size_t> sample,
                           std::span<const IdentityRecord> synthetic,
                           const std::vector<std::vector<std::uint32_t>>& qualifying, bool age_band,
                           std::uint32_t mask, double lambda_s) {
  std::map<QidKey, std::size_t> big_f, small_f;
  std::map<QidKey, std::vector<std::uint32_t>> syn_groups;
  for (const auto& r : population) ++big_f[qid_key(r, age_band, mask)];
  for (auto s : sample) ++small_f[qid_key(population[s], age_band, mask)];
  for (std::size_t j = 0; j < synthetic.size(); ++j)
    syn_groups[qid_key(synthetic[j], age_band, mask)].push_back(std::uint32_t(j));

  const double adjust = (1.0 + lambda_s) / 2.0;
  double pop_sum = 0.0, sample_sum = 0.0;
  for (std::size_t k = 0; k < sample.size(); ++k) {
    const auto key = qid_key(population[sample[k]], age_band, mask);
    auto g = syn_groups.find(key);
    if (g == syn_groups.end()) continue;  // I_s = 0
    const auto& group = g->second;
    const auto& q = qualifying[k];
    bool r_s = false;
    if (group.size() < q.size()) {
      for (auto j : group) r_s = r_s || std::binary_search(q.begin(), q.end(), j);
    } else {
      for (auto j : q) r_s = r_s || std::binary_search(group.begin(), group.end(), j);
    }
    if (!r_s) continue;
    pop_sum += adjust / double(small_f.at(key));
    sample_sum += adjust / double(big_f.at(key));
  }
  IdentityRun run;
  run.age_band = age_band;
  run.disease_mask = mask;
  run.population_term = pop_sum / double(population.size());
  run.sample_term = sample_sum / double(sample.size());
  run.score = std::max(run.population_term, run.sample_term);
  return run;
}

// For each sampled record, the synthetic records from which at least L% of its
// sensitive attributes would be learned. Independent of the QID generalization.
std::vector<std::vector<std::uint32_t>> qualifying_matches(std::span<const IdentityRecord> population,
                                                           std::span<const std::size_t> sample,
                                                           std::span<const IdentityRecord> synthetic,
                                                           double l_percent, unsigned threads) {
  std::vector<std::vector<std::uint32_t>> q(sample.size());
  auto run = [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k)
      for (std::size_t j = 0; j < synthetic.size(); ++j)
        if (learns_enough(population[sample[k]], synthetic[j], l_percent)) q[k].push_back(std::uint32_t(j));
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, sample.size()))));
  if (threads == 1) {
    run(0, sample.size());
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (sample.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t)
      workers.emplace_back(run, std::min(sample.size(), t * chunk), std::min(sample.size(), (t + 1) * chunk));
  }
  return q;
}

void check_identity_inputs(std::span<const IdentityRecord> population, std::span<const std::size_t> sample) {
  if (population.empty() || sample.empty()) fail(ErrorCode::InvalidArgument, "identity disclosure needs records");
  for (auto s : sample)
    if (s >= population.size()) fail(ErrorCode::InvalidArgument, "sample index outside the population");
}

}  // namespace

IdentityRun identity_disclosure_run(std::span<const IdentityRecord> population, std::span<const std::size_t> sample,
                                    std::span<const IdentityRecord> synthetic, bool age_band,
                                    std::uint32_t disease_mask, const AttackConfig& cfg) {
  cfg.validate();
  check_identity_inputs(population, sample);
  const auto q = qualifying_matches(population, sample, synthetic, cfg.l_percent, cfg.threads);
  return disclosure_run(population, sample, synthetic, q, age_band, disease_mask, cfg.lambda_s);
}

IdentityResult identity_disclosure(std::span<const IdentityRecord> population, std::span<const std::size_t> sample,
                                   std::span<const IdentityRecord> synthetic, const AttackConfig& cfg) {
  cfg.validate();
  check_identity_inputs(population, sample);
  const auto q = qualifying_matches(population, sample, synthetic, cfg.l_percent, cfg.threads);
  const std::uint32_t full = (1u << cfg.qid_diseases) - 1;
  IdentityResult r;
  for (bool band : {false, true}) {
    if (band && !cfg.age_bands) continue;
    if (cfg.disease_subsets) {
      for (std::uint32_t mask = 0; mask <= full; ++mask)
        r.runs.push_back(disclosure_run(population, sample, synthetic, q, band, mask, cfg.lambda_s));
    } else {
      r.runs.push_back(disclosure_run(population, sample, synthetic, q, band, full, cfg.lambda_s));
    }
  }
  for (auto& run : r.runs) r.score = std::max(r.score, run.score);
  return r;
}

NnaaResult nnaa_risk(const Matrix& train, const Matrix& eval, const Matrix& synthetic, const AttackConfig& cfg) {
  cfg.validate();
  NnaaResult r;
  r.sample = std::min({cfg.nnaa_sample, train.rows, eval.rows, synthetic.rows});
  if (r.sample < 2) fail(ErrorCode::InvalidArgument, "NNAA needs at least two records in every set");

  auto rate = [](const std::vector<Neighbor>& a, const std::vector<Neighbor>& b) {
    double hits = 0;
    for (std::size_t i = 0; i < a.size(); ++i) hits += a[i].distance > b[i].distance;
    return hits / double(a.size());
  };
  const unsigned th = cfg.threads;
  for (std::size_t run = 0; run < cfg.nnaa_runs; ++run) {
    // T and E draw from identical streams so equal inputs give equal samples.
    gen::Rng rng_t(cfg.seed, 2 * run), rng_e(cfg.seed, 2 * run), rng_s(cfg.seed, 2 * run + 1);
    const Matrix t = select_rows(train, sample_rows(train.rows, r.sample, rng_t));
    const Matrix e = select_rows(eval, sample_rows(eval.rows, r.sample, rng_e));
    const Matrix s = select_rows(synthetic, sample_rows(synthetic.rows, r.sample, rng_s));
    const auto d_ss = nearest_neighbor(s, s, true, th);
    NnaaRun out;
    out.aa_es = 0.5 * (rate(nearest_neighbor(e, s, false, th), nearest_neighbor(e, e, true, th)) +
                       rate(nearest_neighbor(s, e, false, th), d_ss));
    out.aa_ts = 0.5 * (rate(nearest_neighbor(t, s, false, th), nearest_neighbor(t, t, true, th)) +
                       rate(nearest_neighbor(s, t, false, th), d_ss));
    out.risk = out.aa_es - out.aa_ts;
    r.runs.push_back(out);
    r.risk += out.risk;
  }
  r.risk /= double(r.runs.size());
  return r;
}

json privacy_report(std::span<const omop::PatientHistory> train, std::span<const omop::PatientHistory> holdout,
                    std::span<const omop::PatientHistory> synthetic, const AttackConfig& cfg) {
  cfg.validate();
  if (train.empty() || holdout.empty() || synthetic.empty())
    fail(ErrorCode::InvalidArgument, "privacy evaluation needs train, holdout and synthetic patients");
  const auto space = FeatureSpace::fit(train);
  const Matrix t = space.vectorize(train), h = space.vectorize(holdout), s = space.vectorize(synthetic);

  json report;
  report["config"] = cfg.to_json();
  report["feature_space"] = space.describe();

  const auto mem = membership_inference(t, h, s, cfg);
  report["membership_inference"] = {{"accuracy", to_json(mem.accuracy)}, {"precision", to_json(mem.precision)},
                                    {"recall", to_json(mem.recall)},     {"f1", to_json(mem.f1)},
                                    {"positives_per_run", mem.positives_per_run},
                                    {"negatives_per_run", mem.negatives_per_run}};

  const auto attr = attribute_inference(space, t, s, cfg);
  auto score_json = [](const AttributeScore& a) {
    return json{{"f1_macro", a.macro_f1}, {"f1_micro", a.micro_f1}, {"precision", a.precision},
                {"recall", a.recall},     {"pairs", a.pairs},       {"excluded_targets", a.excluded}};
  };
  report["attribute_inference"] = {{"synthetic_vs_real", score_json(attr.synthetic)},
                                   {"real_vs_real", score_json(attr.baseline)},
                                   {"f1", attr.synthetic.macro_f1},
                                   {"pass", attr.pass}};

  std::vector<omop::PatientHistory> population(train.begin(), train.end());
  population.insert(population.end(), holdout.begin(), holdout.end());
  const auto pop = identity_records(space, population, cfg.qid_diseases);
  const auto syn = identity_records(space, synthetic, cfg.qid_diseases);
  std::vector<std::size_t> sample(train.size());
  std::iota(sample.begin(), sample.end(), 0);
  const auto id = identity_disclosure(pop, sample, syn, cfg);
  json runs = json::array();
  for (auto& r : id.runs)
    runs.push_back({{"age_band", r.age_band}, {"disease_mask", r.disease_mask},
                    {"population_term", r.population_term}, {"sample_term", r.sample_term}, {"score", r.score}});
  report["identity_disclosure"] = {{"score", id.score}, {"N", pop.size()}, {"n", sample.size()},
                                   {"runs", runs.size()}, {"per_run", runs}};

  const auto nn = nnaa_risk(t, h, s, cfg);
  json nr = json::array();
  for (auto& r : nn.runs) nr.push_back({{"AA_ES", r.aa_es}, {"AA_TS", r.aa_ts}, {"risk", r.risk}});
  report["nnaa"] = {{"risk", nn.risk}, {"sample", nn.sample}, {"per_run", nr}};
  return report;
}

}  // namespace cehr::privacy
