// cehr: command-line front end over the cehr C API.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cehr/cehr.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

/// Collects the options a user actually typed into a JSON config.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {}

  template <typename T>
  CLI::Option* option(const std::string& flags, const char* key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* o = app_->add_option(flags, *value, help);
    apply_.push_back([o, value, key](json& j) {
      if (o->count() > 0) j[key] = *value;
    });
    return o;
  }

  CLI::Option* flag(const std::string& flags, const char* key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* o = app_->add_flag(flags, *value, help);
    apply_.push_back([o, value, key](json& j) {
      if (o->count() > 0) j[key] = *value;
    });
    return o;
  }

  void apply(json& j) const {
    for (const auto& f : apply_) f(j);
  }

 private:
  CLI::App* app_;
  std::vector<std::function<void(json&)>> apply_;
};

struct Command {
  CLI::App* app = nullptr;
  std::unique_ptr<Binder> binder;
};

void add_scheme(Binder& b) {
  b.option<std::string>("--scheme", "scheme", "cehr-gpt | gpt-outpat | cehr-bert | vanilla");
  b.option<std::vector<std::int64_t>>("--inpatient-type", "inpatient_types",
                                      "visit concept(s) that open an inpatient block (default 9201)");
}

void add_sampler(Binder& b) {
  b.option<std::size_t>("--top-k", "top_k", "keep the k most probable tokens");
  b.option<double>("--top-p", "top_p", "keep the smallest set with this probability mass");
  b.option<double>("--temperature", "temperature", "sampling temperature (default 1.0)");
  b.option<std::size_t>("--max-len", "max_len", "maximum sequence length (default 512)");
  b.flag("--grammar-constrained", "grammar_constrained", "mask tokens the grammar rejects");
}

void print_summary(const std::string& name, const json& c) {
  auto rate = [&](const char* label, const char* key) {
    if (c.contains(key)) std::printf("%s: %.6f\n", label, c.at(key).get<double>());
  };
  if (name == "validate") {
    std::printf("sequences: %zu, accepted: %zu\n", c.value("sequences", std::size_t{0}),
                c.value("accepted", std::size_t{0}));
    rate("acceptance rate", "acceptance_rate");
  } else if (name == "generate") {
    std::printf("attempts: %zu, valid: %zu\n", c.value("attempts", std::size_t{0}), c.value("valid", std::size_t{0}));
    rate("validity rate", "validity_rate");
  } else if (name == "encode") {
    std::printf("sequences written: %zu (too short: %zu, truncated: %zu)\n", c.value("sequences_written", std::size_t{0}),
                c.value("too_short", std::size_t{0}), c.value("truncated", std::size_t{0}));
  } else if (name == "decode") {
    std::printf("decoded: %zu, malformed lines: %zu, invalid sequences: %zu\n", c.value("decoded", std::size_t{0}),
                c.value("malformed_lines", std::size_t{0}), c.value("invalid_sequences", std::size_t{0}));
  } else if (name == "train") {
    std::printf("sequences: %zu, vocabulary: %zu\n", c.value("sequences", std::size_t{0}),
                c.value("vocabulary", std::size_t{0}));
  } else if (name == "forecast") {
    std::printf("expected interval: %.3f days (sd %.3f) -> %s, visit type %lld, event %lld\n",
                c.value("expected_days", 0.0), c.value("sd_days", 0.0), c.value("interval_token", std::string()).c_str(),
                static_cast<long long>(c.value("visit_type", std::int64_t{0})),
                static_cast<long long>(c.value("event", std::int64_t{0})));
  } else if (name == "evaluate") {
    std::printf("%s\n", c.dump(2).c_str());
  } else if (name == "demo") {
    std::printf("train patients: %zu, holdout patients: %zu\n", c.value("train_patients", std::size_t{0}),
                c.value("holdout_patients", std::size_t{0}));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal patient-sequence codec, generator and evaluation suite"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cehr_version());

  std::string config_path, manifest;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  bool print_json = false;

  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help) -> Binder& {
    Command c;
    c.app = app.add_subcommand(name, help);
    c.app->add_option("--config", config_path, "JSON config file; flags take precedence");
    c.app->add_option("--manifest", manifest, "where to write the run manifest");
    c.app->add_option("--threads", threads, "worker thread cap (default: available parallelism)");
    c.app->add_option("--seed", seed, "random seed");
    c.app->add_flag("--json", print_json, "print the full manifest as JSON");
    c.binder = std::make_unique<Binder>(c.app);
    commands.push_back(std::move(c));
    return *commands.back().binder;
  };

  {
    auto& b = add("encode", "encode an OMOP directory into JSONL sequences");
    b.option<std::string>("-i,--input", "input", "OMOP directory");
    b.option<std::string>("-o,--output", "output", "output JSONL file");
    b.option<std::size_t>("--max-len", "max_len", "post-truncation length (default 512)");
    b.option<std::size_t>("--min-tokens", "min_tokens", "drop shorter patients (default 20)");
    add_scheme(b);
  }
  {
    auto& b = add("decode", "decode JSONL sequences into an OMOP directory");
    b.option<std::string>("-i,--input", "input", "JSONL file");
    b.option<std::string>("-o,--output", "output", "output OMOP directory");
    b.option<std::string>("--concepts", "concepts", "concept.csv for concept domains");
    add_scheme(b);
  }
  {
    auto& b = add("validate", "check JSONL sequences against the grammar");
    b.option<std::string>("-i,--input", "input", "JSONL file");
    add_scheme(b);
  }
  {
    auto& b = add("train", "fit a count-based sequence model");
    b.option<std::string>("-i,--input", "input", "training JSONL");
    b.option<std::string>("-o,--output", "output", "model file");
    b.option<std::size_t>("--order", "order", "Markov order (default 2)");
    b.option<double>("--alpha", "alpha", "additive smoothing (default 0.1)");
    add_scheme(b);
  }
  {
    auto& b = add("generate", "sample synthetic sequences");
    b.option<std::string>("--model", "model", "model file");
    b.option<std::string>("--prompts", "prompts", "JSONL corpus to draw demographic prompts from");
    b.option<std::string>("-o,--output", "output", "output JSONL file");
    b.option<std::size_t>("-n,--n", "n", "number of sequences to attempt");
    add_sampler(b);
    add_scheme(b);
  }
  {
    auto& b = add("evaluate", "compare a synthetic OMOP directory with the real one");
    b.option<std::string>("--real", "real", "real OMOP directory");
    b.option<std::string>("--synthetic", "synthetic", "synthetic OMOP directory");
    b.option<std::string>("--which", "which", "utility | cooccurrence | predictive | privacy | loti | all");
    b.option<std::string>("--holdout", "holdout", "real patients held out of training (privacy)");
    b.option<std::string>("--cohorts", "cohorts", "cohort definition file or directory");
    b.option<std::string>("--ancestors", "ancestors", "concept_ancestor.csv for roll-up");
    b.option<std::string>("--attack-config", "attack_config", "JSON attack configuration");
    b.option<std::string>("-o,--out", "output", "report directory");
    b.option<double>("--epsilon", "epsilon", "KL smoothing (default 1e-12)");
    b.option<std::int64_t>("--anchor", "anchor", "anchor condition for concept networks");
    b.option<std::string>("--network-metric", "network_metric", "pmi3 | prevalence");
    b.option<std::vector<std::string>>("--strata", "strata", "prevalence strata: gender race age_band");
    add_scheme(b);
  }
  {
    auto& b = add("forecast", "Monte Carlo forecast of the next visit");
    b.option<std::string>("--model", "model", "model file");
    b.option<std::string>("--history", "history", "JSONL file holding the patient history");
    b.option<std::int64_t>("--person-id", "person_id", "record to use (default: first)");
    b.option<std::size_t>("--samples", "samples", "Monte Carlo draws (default 1000)");
    b.option<std::string>("-o,--output", "output", "write the forecast JSON here");
    add_sampler(b);
    add_scheme(b);
  }
  {
    auto& b = add("demo", "write the bundled toy OMOP corpus");
    b.option<std::string>("-o,--output", "output", "output directory");
    b.option<std::size_t>("--patients", "patients", "training patients (default 1000)");
    b.option<std::size_t>("--holdout", "holdout", "held-out patients (default patients/5)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (c.app->parsed()) chosen = &c;
  const std::string name = chosen->app->get_name();

  json cfg = json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::fprintf(stderr, "error: cannot open config %s\n", config_path.c_str());
      return kExitUsage;
    }
    try {
      in >> cfg;
    } catch (const json::exception& e) {
      std::fprintf(stderr, "error: config %s: %s\n", config_path.c_str(), e.what());
      return kExitUsage;
    }
    if (!cfg.is_object()) {
      std::fprintf(stderr, "error: config must be a JSON object\n");
      return kExitUsage;
    }
  }
  chosen->binder->apply(cfg);
  if (!manifest.empty()) cfg["manifest"] = manifest;
  if (threads > 0) cfg["threads"] = threads;
  if (chosen->app->count("--seed") > 0) cfg["seed"] = seed;

  char* out = nullptr;
  const cehr_status st = cehr_run(name.c_str(), cfg.dump().c_str(), &out);
  if (st != CEHR_OK) {
    std::fprintf(stderr, "error (%s): %s\n", cehr_status_name(st), cehr_last_error());
    return st == CEHR_ERR_INVALID_ARGUMENT ? kExitUsage : kExitData;
  }
  const json result = json::parse(out);
  cehr_free_string(out);

  for (const auto& w : result.value("warnings", json::array())) std::fprintf(stderr, "warning: %s\n", w.get<std::string>().c_str());
  if (print_json) std::printf("%s\n", result.dump(2).c_str());
  else print_summary(name, result.at("counters"));
  if (result.contains("manifest_path"))
    std::fprintf(stderr, "manifest: %s\n", result.at("manifest_path").get<std::string>().c_str());
  return kExitOk;
}
