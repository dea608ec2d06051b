#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cehr/codec.hpp"
#include "cehr/error.hpp"
#include "cehr/pipeline.hpp"
#include "cehr/predictive.hpp"
#include "cehr/sequence_io.hpp"
#include "support.hpp"

using namespace cehr;
using nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("config hash ignores threads and manifest") {
  const json a{{"input", "x"}, {"seed", 3}};
  json b = a;
  b["threads"] = 8;
  b["manifest"] = "/tmp/m.json";
  CHECK(pipeline::config_hash(a) == pipeline::config_hash(b));
  b["seed"] = 4;
  CHECK(pipeline::config_hash(a) != pipeline::config_hash(b));
  CHECK(pipeline::config_hash(a).size() == 16);
}

TEST_CASE("fingerprint tracks file content") {
  const auto dir = support::temp_dir("fingerprint");
  std::ofstream(dir / "a.txt") << "one";
  const auto f1 = pipeline::fingerprint(dir / "a.txt");
  const auto d1 = pipeline::fingerprint(dir);
  std::ofstream(dir / "a.txt") << "two";
  CHECK(pipeline::fingerprint(dir / "a.txt") != f1);
  CHECK(pipeline::fingerprint(dir) != d1);
  std::ofstream(dir / "manifest.json") << "{}";
  CHECK(pipeline::fingerprint(dir) == pipeline::fingerprint(dir));
}

TEST_CASE("unknown commands and missing inputs") {
  CHECK_THROWS_AS(pipeline::run("fly", json::object()), Error);
  try {
    pipeline::run("validate", {{"input", "/nonexistent/cehr.jsonl"}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
  try {
    pipeline::run("generate", {{"model", "m"}, {"prompts", "p"}, {"output", "o"}, {"top_k", 3}, {"top_p", 0.9}});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("end to end pipeline") {
  const auto dir = support::temp_dir("pipeline");
  const auto s = [&](const char* p) { return (dir / p).string(); };
  auto m = pipeline::run("demo", {{"output", s("demo")}, {"patients", 300}, {"holdout", 100}, {"seed", 5}});
  CHECK(fs::exists(dir / "demo" / "manifest.json"));
  for (auto key : {"tool", "version", "command", "config", "config_hash", "seed", "rng_algorithm", "threads", "inputs",
                   "wall_clock_seconds", "counters", "warnings"})
    CHECK(m.contains(key));

  m = pipeline::run("encode", {{"input", s("demo/train")}, {"output", s("train.jsonl")}, {"min_tokens", 0}});
  CHECK(m["counters"]["sequences_written"] == 300);
  CHECK(m["inputs"][0]["fnv1a64"].get<std::string>().size() == 16);
  CHECK(fs::exists(dir / "train.jsonl.manifest.json"));

  m = pipeline::run("validate", {{"input", s("train.jsonl")}});
  CHECK(m["counters"]["rejected"] == 0);

  pipeline::run("train", {{"input", s("train.jsonl")}, {"output", s("model.json")}});
  const json gen{{"model", s("model.json")}, {"prompts", s("train.jsonl")}, {"output", s("synth.jsonl")},
                 {"n", 120},                {"grammar_constrained", true}, {"seed", 9},
                 {"max_len", 256}};
  m = pipeline::run("generate", gen);
  CHECK(m["counters"]["invalid"] == 0);
  CHECK(m["counters"]["attempts"] == 120);
  const auto first = support::slurp(dir / "synth.jsonl");
  json gen4 = gen;
  gen4["threads"] = 4;
  pipeline::run("generate", gen4);
  CHECK(support::slurp(dir / "synth.jsonl") == first);

  m = pipeline::run("decode", {{"input", s("synth.jsonl")}, {"output", s("synth")}});
  CHECK(m["counters"]["invalid_sequences"] == 0);

  m = pipeline::run("forecast", {{"model", s("model.json")}, {"history", s("train.jsonl")}, {"samples", 200}});
  CHECK(m["counters"]["expected_days"].get<double>() >= 0.0);

  const json attack{{"repetitions", 3}, {"membership_sample", 50}, {"nnaa_sample", 50}, {"nnaa_runs", 2},
                    {"qid_diseases", 3}};
  m = pipeline::run("evaluate", {{"real", s("demo/train")},
                                 {"synthetic", s("synth")},
                                 {"holdout", s("demo/holdout")},
                                 {"cohorts", s("demo/cohorts")},
                                 {"attack", attack},
                                 {"output", s("report")}});
  const auto& r = m["counters"];
  for (auto key : {"utility", "cooccurrence", "predictive", "privacy", "loti"}) CHECK(r.contains(key));
  CHECK(r["loti"]["ordered"] == true);
  CHECK(r["predictive"]["cohorts"].size() == 5);
  for (auto f : {"report.json", "concept_prevalence.csv", "cohort_metrics.csv", "privacy.json", "loti.csv"})
    CHECK(fs::exists(dir / "report" / f));

  m = pipeline::run("evaluate", {{"real", s("demo/train")}, {"synthetic", s("synth")}, {"output", s("report2")}});
  CHECK(m["counters"]["privacy"].contains("skipped"));
  CHECK(m["counters"]["predictive"].contains("skipped"));

  CHECK_THROWS_AS(pipeline::run("evaluate", {{"real", s("demo/train")}, {"synthetic", s("synth")}, {"which", "privacy"},
                                             {"output", s("report3")}}),
                  Error);
}

TEST_CASE("placeholder cohort files parse") {
  const fs::path dir = fs::path(CEHR_SOURCE_DIR) / "cohorts" / "table2";
  for (auto name : {"hospitalization", "hf_readmission"})
    CHECK_NOTHROW(predictive::load_cohort_definition(dir / (std::string(name) + ".json")).validate());
  for (auto name : {"afib_ischemic_stroke", "cad_cabg"}) {
    const auto def = predictive::load_cohort_definition(dir / (std::string(name) + ".json"));
    CHECK(def.name == name);
    CHECK_THROWS_AS(def.validate(), Error);
  }
  for (const auto& e : fs::directory_iterator(fs::path(CEHR_SOURCE_DIR) / "cohorts" / "demo"))
    CHECK_NOTHROW(predictive::load_cohort_definition(e.path()).validate());
}
