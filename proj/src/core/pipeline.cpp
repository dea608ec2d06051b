#include "cehr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "cehr/codec.hpp"
#include "cehr/demo.hpp"
#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/omop.hpp"
#include "cehr/predictive.hpp"
#include "cehr/privacy.hpp"
#include "cehr/sequence_io.hpp"
#include "cehr/utility.hpp"
#include "csv.hpp"

namespace cehr::pipeline {

namespace fs = std::filesystem;
using codec::Representation;
using utility::ConceptKey;

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_file(const fs::path& p, std::uint64_t h) {
  std::ifstream in(p, std::ios::binary);
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h = fnv1a(std::string_view(buf, std::size_t(in.gcount())), h);
  return h;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string percent(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * *v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

class Run {
 public:
  explicit Run(const json& cfg) : cfg_(cfg) {
    if (!cfg_.is_object()) fail(ErrorCode::InvalidArgument, "configuration must be a JSON object");
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    threads_ = cfg_.contains("threads") ? std::max(1u, cfg_.at("threads").get<unsigned>()) : hw;
  }

  const json& cfg() const { return cfg_; }
  unsigned threads() const { return threads_; }
  json& inputs() { return inputs_; }
  std::vector<std::string>& warnings() { return warnings_; }

  bool has(const char* key) const { return cfg_.contains(key) && !cfg_.at(key).is_null(); }

  template <typename T>
  T get(const char* key, T fallback) const {
    if (!has(key)) return fallback;
    try {
      return cfg_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::InvalidArgument, std::string("config key '") + key + "' has the wrong type");
    }
  }

  std::string need(const char* key) const {
    if (!has(key)) fail(ErrorCode::InvalidArgument, std::string("missing required option '") + key + "'");
    return get<std::string>(key, "");
  }

  /// An existing input; recorded in the manifest with its fingerprint.
  fs::path input(const char* key) {
    fs::path p = need(key);
    if (!fs::exists(p)) fail(ErrorCode::InvalidArgument, std::string(key) + " path does not exist: " + p.string());
    inputs_.push_back({{"role", key}, {"path", p.string()}, {"fnv1a64", fingerprint(p)}});
    return p;
  }

  std::optional<fs::path> optional_input(const char* key) {
    if (!has(key)) return std::nullopt;
    return input(key);
  }

  Representation representation(std::string_view fallback_scheme = "cehr-gpt") const {
    Representation rep;
    const std::string label = get<std::string>("scheme", std::string(fallback_scheme));
    auto s = codec::parse_scheme(label);
    if (!s || *s == codec::SchemeName::Custom) fail(ErrorCode::InvalidArgument, "unknown scheme '" + label + "'");
    rep.scheme = codec::AttScheme::named(*s);
    if (has("inpatient_types")) {
      rep.inpatient_types.clear();
      for (auto c : get<std::vector<std::int64_t>>("inpatient_types", {})) rep.inpatient_types.insert(c);
    }
    return rep;
  }

  gen::SamplerConfig sampler() const {
    gen::SamplerConfig s;
    if (has("top_k") && has("top_p")) fail(ErrorCode::InvalidArgument, "--top-k and --top-p are mutually exclusive");
    if (has("top_k")) s.strategy = gen::TopK{get<std::size_t>("top_k", 1)};
    if (has("top_p")) s.strategy = gen::TopP{get<double>("top_p", 1.0)};
    s.temperature = get<double>("temperature", 1.0);
    s.seed = get<std::uint64_t>("seed", 0);
    s.grammar_constrained = get<bool>("grammar_constrained", false);
    s.max_len = get<std::size_t>("max_len", 512);
    s.validate();
    return s;
  }

 private:
  const json& cfg_;
  unsigned threads_ = 1;
  json inputs_ = json::array();
  std::vector<std::string> warnings_;
};

std::string inpatient_list(const Representation& rep) {
  std::vector<std::int64_t> v(rep.inpatient_types.begin(), rep.inpatient_types.end());
  std::sort(v.begin(), v.end());
  std::string s;
  for (auto c : v) s += (s.empty() ? "" : ",") + std::to_string(c);
  return s;
}

json load_report_json(const omop::LoadReport& r) {
  return {{"persons_rejected", r.persons_rejected},
          {"visits_rejected", r.visits_rejected},
          {"unknown_concepts_dropped", r.unknown_concepts_dropped},
          {"integrity_rejected", r.integrity_rejected},
          {"malformed_rows", r.malformed_rows},
          {"files_read", r.files_read}};
}

// --- encode / decode / validate -------------------------------------------

json cmd_encode(Run& run) {
  const auto in = run.input("input");
  const fs::path out = run.need("output");
  const auto rep = run.representation();
  const auto max_len = run.get<std::size_t>("max_len", 512);
  const auto min_tokens = run.get<std::size_t>("min_tokens", 20);

  const auto ds = omop::load_dataset(in);
  omop::AssembleReport ar;
  const auto assembled = omop::assemble_histories(
      ds, [&](const omop::PatientHistory& h) { return codec::encoded_length(h, rep); }, min_tokens, max_len, &ar);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::SequenceWriter w(out);
  std::size_t tokens = 0;
  for (const auto& a : assembled) {
    auto seq = codec::encode_patient(a.history, rep, max_len);
    tokens += seq.tokens.size();
    w.write(seq);
  }
  return {{"scheme", rep.scheme.label()},
          {"persons_loaded", ds.persons.size()},
          {"sequences_written", w.written()},
          {"tokens_written", tokens},
          {"too_short", ar.too_short},
          {"without_visits", ar.without_visits},
          {"truncated", ar.flagged_for_truncation},
          {"load", load_report_json(ds.report)}};
}

json cmd_decode(Run& run) {
  const auto in = run.input("input");
  const fs::path out = run.need("output");
  const auto rep = run.representation();
  codec::ConceptDomains domains;
  if (auto c = run.optional_input("concepts")) domains = omop::load_concept_domains(*c);

  io::SequenceReader reader(in);
  omop::DatasetWriter writer(out);
  codec::IdAllocator ids;
  codec::DecodeStats stats;
  std::size_t decoded = 0, invalid = 0;
  std::map<std::string, std::size_t> reasons;
  codec::TokenSequence seq;
  while (reader.next(seq)) {
    auto v = codec::validate_sequence(seq, rep);
    if (!v) {
      ++invalid;
      ++reasons[std::string(codec::reason_name(v.reason))];
      continue;
    }
    writer.write(codec::decode_patient(seq, rep, ids, domains, &stats));
    ++decoded;
  }
  writer.close();
  if (reader.malformed() > 0)
    run.warnings().push_back(std::to_string(reader.malformed()) + " malformed line(s) skipped; last: " +
                             reader.last_error());
  if (invalid > 0) run.warnings().push_back(std::to_string(invalid) + " sequence(s) rejected by the grammar");
  return {{"scheme", rep.scheme.label()},       {"decoded", decoded},
          {"malformed_lines", reader.malformed()}, {"invalid_sequences", invalid},
          {"reject_reasons", reasons},           {"unknown_domain_concepts", stats.unknown_domain_concepts}};
}

json cmd_validate(Run& run) {
  const auto in = run.input("input");
  const auto rep = run.representation();
  io::SequenceReader reader(in);
  std::size_t total = 0, accepted = 0;
  std::map<std::string, std::size_t> reasons;
  codec::TokenSequence seq;
  while (reader.next(seq)) {
    ++total;
    auto v = codec::validate_sequence(seq, rep);
    if (v) ++accepted;
    else ++reasons[std::string(codec::reason_name(v.reason))];
  }
  if (reader.malformed() > 0)
    run.warnings().push_back(std::to_string(reader.malformed()) + " malformed line(s) skipped");
  return {{"scheme", rep.scheme.label()},
          {"sequences", total},
          {"accepted", accepted},
          {"rejected", total - accepted},
          {"acceptance_rate", total ? double(accepted) / double(total) : 0.0},
          {"malformed_lines", reader.malformed()},
          {"reject_reasons", reasons}};
}

// --- train / generate / forecast -------------------------------------------

json cmd_train(Run& run) {
  const auto in = run.input("input");
  const fs::path out = run.need("output");
  const auto rep = run.representation();
  std::size_t malformed = 0;
  const auto corpus = io::read_corpus(in, &malformed);
  if (corpus.empty()) fail(ErrorCode::Data, "training corpus is empty");
  auto model = gen::MarkovModel::fit(corpus, run.get<std::size_t>("order", 2), run.get<double>("alpha", 0.1));
  model.metadata()["scheme"] = std::string(rep.scheme.label());
  model.metadata()["inpatient_types"] = inpatient_list(rep);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  model.save(out);
  std::size_t tokens = 0;
  for (const auto& s : corpus) tokens += s.tokens.size();
  return {{"sequences", corpus.size()},       {"tokens", tokens},          {"malformed_lines", malformed},
          {"vocabulary", model.vocabulary().size()}, {"order", model.order()}, {"alpha", model.alpha()},
          {"scheme", rep.scheme.label()}};
}

Representation model_representation(Run& run, const gen::MarkovModel& model) {
  auto& meta = model.metadata();
  auto it = meta.find("scheme");
  Representation rep = run.representation(it != meta.end() ? it->second : "cehr-gpt");
  if (!run.has("inpatient_types")) {
    if (auto t = meta.find("inpatient_types"); t != meta.end() && !t->second.empty()) {
      rep.inpatient_types.clear();
      std::size_t pos = 0;
      while (pos <= t->second.size()) {
        auto comma = t->second.find(',', pos);
        if (comma == std::string::npos) comma = t->second.size();
        rep.inpatient_types.insert(std::stoll(t->second.substr(pos, comma - pos)));
        pos = comma + 1;
      }
    }
  }
  return rep;
}

json cmd_generate(Run& run) {
  const auto model_path = run.input("model");
  const auto prompts = run.input("prompts");
  const fs::path out = run.need("output");
  const auto n = run.get<std::size_t>("n", 0);
  if (n == 0) fail(ErrorCode::InvalidArgument, "--n must be at least 1");
  const auto cfg = run.sampler();
  const auto model = gen::MarkovModel::load(model_path);
  const auto rep = model_representation(run, model);
  std::size_t malformed = 0;
  const auto pool = gen::PromptPool::from_corpus(io::read_corpus(prompts, &malformed));
  if (pool.empty()) fail(ErrorCode::Data, "prompt corpus holds no usable prompts");

  const auto result = gen::generate_corpus(model, pool, cfg, rep, n, run.threads());
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_corpus(out, result.sequences);
  const auto& r = result.report;
  return {{"sampler", cfg.describe()},          {"scheme", rep.scheme.label()},
          {"attempts", r.attempts},             {"valid", r.valid},
          {"invalid", r.invalid},               {"aborted", r.aborted},
          {"validity_rate", r.validity_rate},   {"reject_reasons", r.reject_reasons},
          {"prompt_pool", pool.size()}};
}

json cmd_forecast(Run& run) {
  const auto model = gen::MarkovModel::load(run.input("model"));
  const auto history_path = run.input("history");
  const auto rep = model_representation(run, model);
  const auto cfg = run.sampler();
  const auto corpus = io::read_corpus(history_path);
  if (corpus.empty()) fail(ErrorCode::Data, "history file holds no sequences");
  const codec::TokenSequence* h = &corpus.front();
  if (run.has("person_id")) {
    const auto pid = run.get<std::int64_t>("person_id", 0);
    auto it = std::find_if(corpus.begin(), corpus.end(), [&](const auto& s) { return s.person_id == pid; });
    if (it == corpus.end()) fail(ErrorCode::InvalidArgument, "person " + std::to_string(pid) + " not in history file");
    h = &*it;
  }
  const auto f = gen::monte_carlo_forecast(model, *h, run.get<std::size_t>("samples", 1000), cfg, rep);
  json vt, ev;
  for (auto& [k, c] : f.visit_type_counts) vt[std::to_string(k)] = c;
  for (auto& [k, c] : f.event_counts) ev[std::to_string(k)] = c;
  json report{{"person_id", h->person_id ? json(*h->person_id) : json(nullptr)},
              {"interval_counts", f.interval_counts},
              {"expected_days", f.expected_days},
              {"sd_days", f.sd_days},
              {"interval_token", codec::to_string(f.interval_token)},
              {"visit_type", f.visit_type},
              {"visit_type_counts", vt},
              {"event", f.event},
              {"event_counts", ev}};
  if (run.has("output")) {
    std::ofstream(run.need("output")) << report.dump(2) << '\n';
  }
  return report;
}

// --- evaluate --------------------------------------------------------------

std::unordered_map<omop::ConceptId, std::string> concept_names(const fs::path& dir) {
  std::unordered_map<omop::ConceptId, std::string> out;
  const auto p = dir / "concept.csv";
  if (!fs::exists(p)) return out;
  csv::Reader r(p);
  const int id = r.column("concept_id"), name = r.column("concept_name");
  if (id < 0 || name < 0) return out;
  std::vector<std::string> f;
  while (r.next(f)) {
    try {
      out[std::stoll(f.at(id))] = f.at(name);
    } catch (const std::exception&) {
    }
  }
  return out;
}

json kl_json(const utility::KlReport& k) {
  return {{"value", k.value}, {"smoothed_cells", k.smoothed_cells}, {"synthetic_only_cells", k.synthetic_only_cells}};
}

json eval_utility(Run& run, const std::vector<omop::PatientHistory>& real,
                  const std::vector<omop::PatientHistory>& synth, const fs::path& out) {
  const double eps = run.get<double>("epsilon", 1e-12);
  const auto rs = utility::concept_probability(real), ss = utility::concept_probability(synth);
  const auto kl = utility::kl_divergence(rs.probabilities(), ss.probabilities(), eps);

  std::map<ConceptKey, int> keys;
  for (auto& [k, _] : rs.presence) keys[k];
  for (auto& [k, _] : ss.presence) keys[k];
  {
    csv::Writer w(out / "concept_prevalence.csv");
    w.row({"concept", "real_probability", "synthetic_probability", "real_prevalence", "synthetic_prevalence"});
    for (auto& [k, _] : keys)
      w.row({utility::to_string(k), num(rs.probability(k)), num(ss.probability(k)), num(rs.prevalence(k)),
             num(ss.prevalence(k))});
  }
  const auto strata = run.get<std::vector<std::string>>("strata", {"gender", "race", "age_band"});
  json strata_report = json::object();
  {
    csv::Writer w(out / "stratified_prevalence.csv");
    w.row({"strata", "stratum", "concept", "real_prevalence", "synthetic_prevalence"});
    for (const auto& s : strata) {
      const auto pr = utility::concept_prevalence(real, s), ps = utility::concept_prevalence(synth, s);
      std::map<std::string, int> labels;
      for (auto& [l, _] : pr) labels[l];
      for (auto& [l, _] : ps) labels[l];
      for (auto& [label, _] : labels) {
        static const std::map<ConceptKey, double> kEmpty;
        const auto& a = pr.count(label) ? pr.at(label) : kEmpty;
        const auto& b = ps.count(label) ? ps.at(label) : kEmpty;
        std::map<ConceptKey, int> ks;
        for (auto& [k, v] : a) ks[k];
        for (auto& [k, v] : b) ks[k];
        for (auto& [k, __] : ks)
          w.row({s, label, utility::to_string(k), num(a.count(k) ? a.at(k) : 0.0), num(b.count(k) ? b.at(k) : 0.0)});
      }
      strata_report[s] = labels.size();
    }
  }
  return {{"patients_real", rs.patients},
          {"patients_synthetic", ss.patients},
          {"concepts_real", rs.presence.size()},
          {"concepts_synthetic", ss.presence.size()},
          {"kl_concept_probability", kl_json(kl)},
          {"strata", strata_report},
          {"files", {"concept_prevalence.csv", "stratified_prevalence.csv"}}};
}

json eval_cooccurrence(Run& run, const std::vector<omop::PatientHistory>& real,
                       const std::vector<omop::PatientHistory>& synth, const fs::path& real_dir,
                       const fs::path& out) {
  using omop::Domain;
  const double eps = run.get<double>("epsilon", 1e-12);
  const auto mr = utility::build_cooccurrence(real, run.threads());
  const auto ms = utility::build_cooccurrence(synth, run.threads());
  json report{{"pairs_real", mr.counts.size()}, {"pairs_synthetic", ms.counts.size()}};
  if (mr.total == 0) fail(ErrorCode::Data, "real corpus produces no co-occurrence pairs");
  if (ms.total == 0) {
    report["kl"] = nullptr;
    report["kl_reason"] = "synthetic corpus produces no co-occurrence pairs";
  } else {
    report["kl"] = kl_json(utility::kl_divergence(mr, ms, eps));
  }
  if (real.size() >= 2) {
    const auto b = utility::cooccurrence_bounds(real, run.get<std::uint64_t>("seed", 0), eps);
    report["bounds"] = {{"lower", b.lower}, {"upper", b.upper}, {"ordered", b.ordered}};
    if (!b.ordered) run.warnings().push_back("co-occurrence lower bound exceeds upper bound");
  }

  {
    csv::Writer w(out / "top_pairs.csv");
    w.row({"category", "earlier", "later", "real_probability", "synthetic_probability"});
    const Domain ds[] = {Domain::Condition, Domain::Drug, Domain::Procedure};
    for (auto a : ds)
      for (auto b : ds) {
        const std::string cat = std::string(omop::domain_name(a)) + "-" + std::string(omop::domain_name(b));
        for (const auto& p : utility::top_pairs(mr, ms, a, b, 100))
          w.row({cat, utility::to_string(p.pair.first), utility::to_string(p.pair.second), num(p.source),
                 num(p.synthetic)});
      }
  }

  // Concept networks around an anchor condition.
  ConceptKey anchor;
  if (run.has("anchor")) {
    anchor = ConceptKey::of(Domain::Condition, run.get<std::int64_t>("anchor", 0));
  } else {
    double best = -1.0;
    for (auto& [k, p] : mr.row_marginals())
      if (k.domain() == Domain::Condition && p > best) best = p, anchor = k;
    if (best < 0) return report;
  }
  const std::string metric_name = run.get<std::string>("network_metric", "pmi3");
  if (metric_name != "pmi3" && metric_name != "prevalence")
    fail(ErrorCode::InvalidArgument, "network metric must be pmi3 or prevalence");
  const auto metric = metric_name == "pmi3" ? utility::NetworkMetric::Pmi3 : utility::NetworkMetric::Prevalence;
  const auto branching = run.get<std::size_t>("branching", 5), depth = run.get<std::size_t>("depth", 2);
  const auto names = concept_names(real_dir);
  auto net_r = utility::concept_network(mr, anchor, metric, branching, depth, Domain::Condition);
  json net{{"anchor", utility::to_string(anchor)}, {"metric", metric_name}, {"edges_real", net_r.edges.size()}};
  try {
    auto net_s = utility::concept_network(ms, anchor, metric, branching, depth, Domain::Condition);
    const auto cmp = utility::compare_networks(net_r, net_s);
    net["edges_synthetic"] = net_s.edges.size();
    net["shared_edges"] = cmp.shared;
    net["shared_fraction"] = cmp.shared_fraction;
    utility::write_dot(net_s, out / "network_synthetic.dot", &names);
    utility::write_edge_csv(net_s, out / "network_synthetic.csv");
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    net["synthetic_reason"] = e.what();
  }
  utility::write_dot(net_r, out / "network_real.dot", &names);
  utility::write_edge_csv(net_r, out / "network_real.csv");
  report["network"] = net;
  return report;
}

std::vector<predictive::CohortDefinition> cohort_definitions(Run& run) {
  const auto p = run.input("cohorts");
  std::vector<fs::path> files;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
  } else {
    files.push_back(p);
  }
  std::vector<predictive::CohortDefinition> defs;
  for (const auto& f : files) defs.push_back(predictive::load_cohort_definition(f));
  if (defs.empty()) fail(ErrorCode::InvalidArgument, "no cohort definitions found in " + p.string());
  return defs;
}

json eval_predictive(Run& run, const std::vector<omop::PatientHistory>& real,
                     const std::vector<omop::PatientHistory>& synth, const fs::path& real_dir, const fs::path& out) {
  const auto defs = cohort_definitions(run);
  std::optional<predictive::AncestorMap> ancestors;
  if (auto a = run.optional_input("ancestors")) ancestors = predictive::AncestorMap::load(*a);
  else if (fs::exists(real_dir / "concept_ancestor.csv"))
    ancestors = predictive::AncestorMap::load(real_dir / "concept_ancestor.csv");

  predictive::SolverOptions opt;
  opt.lambda = run.get<double>("l2", 1.0);
  const auto seed = run.get<std::uint64_t>("seed", 0);
  const predictive::AncestorMap* am = ancestors ? &*ancestors : nullptr;

  csv::Writer table(out / "cohort_metrics.csv");
  table.row({"cohort", "dataset", "size", "Pre", "AUC", "PR", "note"});
  csv::Writer dist(out / "cohort_distance.csv");
  dist.row({"cohort", "dist", "note"});
  json cohorts = json::array();
  for (const auto& def : defs) {
    json c{{"cohort", def.name}};
    try {
      def.validate();
    } catch (const Error& e) {
      c["skipped"] = e.what();
      run.warnings().push_back(e.what());
      cohorts.push_back(c);
      continue;
    }
    const auto er = predictive::evaluate_cohort(real, def, am, seed, opt, run.threads());
    const auto es = predictive::evaluate_cohort(synth, def, am, seed, opt, run.threads());
    predictive::Distance d;
    try {
      d = predictive::consolidated_distance(er.metrics, es.metrics);
    } catch (const Error& e) {
      d.reason = e.what();
    }
    c["real"] = predictive::to_json(er.metrics);
    c["synthetic"] = predictive::to_json(es.metrics);
    c["dist"] = optional_json(d.value);
    if (!d.reason.empty()) c["dist_reason"] = d.reason;
    cohorts.push_back(c);
    for (auto [label, ev] : {std::pair{"real", &er}, std::pair{"synthetic", &es}})
      table.row({def.name, label, std::to_string(ev->metrics.size), percent(ev->metrics.prevalence),
                 percent(ev->metrics.roc_auc), percent(ev->metrics.pr_auc), ev->metrics.reason});
    dist.row({def.name, d.value ? num(*d.value) : "NA", d.reason});
  }
  return {{"cohorts", cohorts}, {"rolled_up", am != nullptr}, {"files", {"cohort_metrics.csv", "cohort_distance.csv"}}};
}

json eval_privacy(Run& run, const std::vector<omop::PatientHistory>& real,
                  const std::vector<omop::PatientHistory>& synth, const fs::path& out) {
  const auto holdout_dir = run.input("holdout");
  const auto holdout = omop::histories(omop::load_dataset(holdout_dir));
  json acfg = json::object();
  if (auto p = run.optional_input("attack_config")) {
    std::ifstream in(*p);
    try {
      in >> acfg;
    } catch (const json::exception& e) {
      fail(ErrorCode::InvalidArgument, "attack config: " + std::string(e.what()));
    }
  }
  if (run.has("attack")) acfg.update(run.cfg().at("attack"));
  if (!acfg.contains("seed")) acfg["seed"] = run.get<std::uint64_t>("seed", 0);
  auto cfg = privacy::AttackConfig::from_json(acfg);
  cfg.threads = run.threads();
  auto report = privacy::privacy_report(real, holdout, synth, cfg);
  std::ofstream(out / "privacy.json") << report.dump(2) << '\n';
  csv::Writer w(out / "privacy.csv");
  w.row({"metric", "value"});
  w.row({"membership_inference_f1", num(report["membership_inference"]["f1"]["mean"].get<double>())});
  w.row({"attribute_inference_f1", num(report["attribute_inference"]["f1"].get<double>())});
  w.row({"identity_disclosure", num(report["identity_disclosure"]["score"].get<double>())});
  w.row({"nnaa_risk", num(report["nnaa"]["risk"].get<double>())});
  report["identity_disclosure"].erase("per_run");
  return report;
}

json eval_loti(Run& run, const std::vector<omop::PatientHistory>& real, const fs::path& out) {
  const auto rep = run.representation();
  const auto dist = codec::interval_distribution(real, rep);
  if (dist.total() == 0) fail(ErrorCode::Data, "real corpus has no intervals");
  json values = json::object();
  csv::Writer w(out / "loti.csv");
  w.row({"scheme", "loti_days"});
  double prev = -1.0;
  bool ordered = true;
  for (auto s : {codec::SchemeName::CehrGpt, codec::SchemeName::GptOutpat, codec::SchemeName::CehrBert,
                 codec::SchemeName::Vanilla}) {
    const double v = codec::loti(codec::AttScheme::named(s), dist);
    values[std::string(codec::scheme_label(s))] = v;
    w.row({std::string(codec::scheme_label(s)), num(v)});
    ordered = ordered && v >= prev;
    prev = v;
  }
  json r{{"intervals", dist.total()}, {"mean_interval_days", dist.mean()}, {"loti", values}, {"ordered", ordered}};
  if (run.has("scheme")) r["selected"] = {{"scheme", rep.scheme.label()}, {"loti", codec::loti(rep.scheme, dist)}};
  return r;
}

json cmd_evaluate(Run& run) {
  const auto real_dir = run.input("real");
  const std::string which = run.get<std::string>("which", "all");
  static const std::vector<std::string> kWhich = {"utility", "cooccurrence", "predictive", "privacy", "loti", "all"};
  if (std::find(kWhich.begin(), kWhich.end(), which) == kWhich.end())
    fail(ErrorCode::InvalidArgument, "unknown evaluation '" + which + "'");
  const bool all = which == "all";
  if (which == "privacy" && !run.has("holdout"))
    fail(ErrorCode::InvalidArgument, "privacy evaluation requires a holdout set (--holdout)");
  const fs::path out = run.need("output");
  fs::create_directories(out);

  const auto real = omop::histories(omop::load_dataset(real_dir, omop::Provenance::Real));
  json report{{"which", which}};
  if (which == "loti") {
    report["loti"] = eval_loti(run, real, out);
  } else {
    const auto synth_dir = run.input("synthetic");
    const auto synth = omop::histories(omop::load_dataset(synth_dir, omop::Provenance::Synthetic));
    if (real.empty() || synth.empty()) fail(ErrorCode::Data, "both datasets must contain patients");
    if (all || which == "utility") report["utility"] = eval_utility(run, real, synth, out);
    if (all || which == "cooccurrence") report["cooccurrence"] = eval_cooccurrence(run, real, synth, real_dir, out);
    if ((all && run.has("cohorts")) || which == "predictive")
      report["predictive"] = eval_predictive(run, real, synth, real_dir, out);
    else if (all)
      report["predictive"] = {{"skipped", "no cohort definitions given"}};
    if ((all && run.has("holdout")) || which == "privacy") report["privacy"] = eval_privacy(run, real, synth, out);
    else if (all)
      report["privacy"] = {{"skipped", "no holdout set given"}};
    if (all) report["loti"] = eval_loti(run, real, out);
  }
  std::ofstream(out / "report.json") << report.dump(2) << '\n';
  return report;
}

// --- demo ------------------------------------------------------------------

json cmd_demo(Run& run) {
  const fs::path out = run.need("output");
  const auto patients = run.get<std::size_t>("patients", 1000);
  const auto holdout = run.get<std::size_t>("holdout", patients / 5);
  if (patients == 0) fail(ErrorCode::InvalidArgument, "--patients must be at least 1");
  const auto s = demo::write(out, patients, holdout, run.get<std::uint64_t>("seed", 0));
  fs::create_directories(out / "cohorts");
  for (const auto& def : demo::cohorts())
    std::ofstream(out / "cohorts" / (def.name + ".json")) << predictive::to_json(def).dump(2) << '\n';
  return {{"train_patients", s.train_patients},
          {"holdout_patients", s.holdout_patients},
          {"cohorts", demo::cohorts().size()},
          {"layout", {"train/", "holdout/", "cohorts/"}}};
}

using Command = json (*)(Run&);

const std::map<std::string, Command, std::less<>>& registry() {
  static const std::map<std::string, Command, std::less<>> kCommands = {
      {"encode", cmd_encode},     {"decode", cmd_decode},     {"validate", cmd_validate},
      {"train", cmd_train},       {"generate", cmd_generate}, {"evaluate", cmd_evaluate},
      {"forecast", cmd_forecast}, {"demo", cmd_demo}};
  return kCommands;
}

fs::path manifest_path(std::string_view command, const Run& run) {
  if (run.has("manifest")) return run.get<std::string>("manifest", "");
  if (!run.has("output")) return {};
  const fs::path out = run.get<std::string>("output", "");
  if (command == "decode" || command == "evaluate" || command == "demo") return out / "manifest.json";
  return fs::path(out.string() + ".manifest.json");
}

}  // namespace

std::vector<std::string> commands() {
  std::vector<std::string> out;
  for (auto& [k, _] : registry()) out.push_back(k);
  return out;
}

std::string config_hash(const json& config) {
  json c = config;
  if (c.is_object()) {
    c.erase("threads");
    c.erase("manifest");
  }
  return hex(fnv1a(c.dump()));
}

std::string fingerprint(const fs::path& path) {
  std::uint64_t h = kFnvOffset;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path))
      if (e.is_regular_file() && e.path().filename() != "manifest.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) h = hash_file(f, fnv1a(f.filename().string(), h));
  } else {
    h = hash_file(path, h);
  }
  return hex(h);
}

json run(std::string_view command, const json& config) {
  const auto& reg = registry();
  auto it = reg.find(command);
  if (it == reg.end()) fail(ErrorCode::InvalidArgument, "unknown command '" + std::string(command) + "'");
  Run r(config);
  const auto t0 = std::chrono::steady_clock::now();
  json counters = it->second(r);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json manifest{{"tool", "cehr"},
                {"version", CEHR_VERSION_STRING},
                {"command", command},
                {"config", config},
                {"config_hash", config_hash(config)},
                {"seed", r.get<std::uint64_t>("seed", 0)},
                {"rng_algorithm", gen::kRngAlgorithm},
                {"threads", r.threads()},
                {"inputs", r.inputs()},
                {"wall_clock_seconds", secs},
                {"counters", counters},
                {"warnings", r.warnings()}};
  if (auto p = manifest_path(command, r); !p.empty()) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) fail(ErrorCode::Io, "cannot write manifest " + p.string());
    out << manifest.dump(2) << '\n';
    manifest["manifest_path"] = p.string();
  }
  return manifest;
}

}  // namespace cehr::pipeline
