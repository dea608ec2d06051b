#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cehr/cehr.h"

using nlohmann::json;

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  cehr_free_string(s);
  return out;
}

const char* kHistory = R"({"person": {"person_id": 7, "year_of_birth": 1960, "gender": 8507, "race": 8527},
  "visits": [{"visit_id": 1, "visit_type": 9202, "start": "2010-03-01"},
             {"visit_id": 2, "visit_type": 9201, "start": "2010-03-11", "end": "2010-03-13", "discharge": 8536}],
  "events": [{"visit_id": 1, "domain": "Condition", "concept_id": 100, "date": "2010-03-01"},
             {"visit_id": 2, "domain": "Drug", "concept_id": 200, "date": "2010-03-11"},
             {"visit_id": 2, "domain": "Condition", "concept_id": 300, "date": "2010-03-13"}]})";

}  // namespace

TEST_CASE("status names and version") {
  CHECK(std::string(cehr_version()).size() > 0);
  CHECK(std::string(cehr_status_name(CEHR_OK)) == "ok");
  CHECK(std::string(cehr_status_name(CEHR_ERR_GRAMMAR)) == "grammar error");
  char* names = nullptr;
  REQUIRE(cehr_commands(&names) == CEHR_OK);
  const auto s = take(names);
  for (auto c : {"encode", "decode", "validate", "train", "generate", "evaluate", "forecast", "demo"})
    CHECK(s.find(c) != std::string::npos);
}

TEST_CASE("codec round trip through the C API") {
  cehr_codec* codec = nullptr;
  REQUIRE(cehr_codec_new("cehr-gpt", nullptr, 0, &codec) == CEHR_OK);

  char* rec = nullptr;
  REQUIRE(cehr_codec_encode(codec, kHistory, 512, &rec) == CEHR_OK);
  const auto line = take(rec);
  const auto j = json::parse(line);
  CHECK(j["person_id"] == 7);
  const std::vector<std::string> expected{"Y:2010", "A:50",    "G:8507", "R:8527", "VS",     "VT:9202", "C:100",
                                          "VE",     "D:10",    "VS",     "VT:9201", "C:200", "iD:2",    "C:300",
                                          "DF:8536", "VE"};
  CHECK(j["tokens"].get<std::vector<std::string>>() == expected);

  int ok = 0;
  char* reason = nullptr;
  REQUIRE(cehr_codec_validate(codec, line.c_str(), &ok, &reason) == CEHR_OK);
  CHECK(ok == 1);
  CHECK(take(reason) == "None");

  char* hist = nullptr;
  REQUIRE(cehr_codec_decode(codec, line.c_str(), &hist) == CEHR_OK);
  const auto h = json::parse(take(hist));
  CHECK(h["visits"].size() == 2);
  CHECK(h["visits"][0]["start"] == "2010-01-01");
  CHECK(h["visits"][1]["start"] == "2010-01-11");
  CHECK(h["visits"][1]["end"] == "2010-01-13");
  CHECK(h["events"].size() == 3);

  const std::string bad = R"({"person_id": 1, "tokens": ["Y:2010", "A:50", "G:8507", "R:8527", "VS", "VT:9202", "VE"]})";
  REQUIRE(cehr_codec_validate(codec, bad.c_str(), &ok, &reason) == CEHR_OK);
  CHECK(ok == 0);
  CHECK(take(reason) == "EmptyVisit");

  CHECK(cehr_codec_decode(codec, bad.c_str(), &hist) == CEHR_ERR_GRAMMAR);
  CHECK(std::string(cehr_last_error()).size() > 0);
  CHECK(cehr_codec_encode(codec, "{not json", 512, &rec) == CEHR_ERR_INVALID_ARGUMENT);
  cehr_codec_free(codec);
}

TEST_CASE("argument errors") {
  cehr_codec* codec = nullptr;
  CHECK(cehr_codec_new("no-such-scheme", nullptr, 0, &codec) == CEHR_ERR_INVALID_ARGUMENT);
  CHECK(codec == nullptr);
  CHECK(cehr_codec_new("cehr-bert", nullptr, 0, nullptr) == CEHR_ERR_INVALID_ARGUMENT);
  char* out = nullptr;
  CHECK(cehr_run("fly", "{}", &out) == CEHR_ERR_INVALID_ARGUMENT);
  CHECK(std::string(cehr_last_error()).find("fly") != std::string::npos);
  CHECK(cehr_run("encode", "{}", &out) == CEHR_ERR_INVALID_ARGUMENT);
  CHECK(cehr_run("encode", "{\"input\": \"/nonexistent/cehr\", \"output\": \"x\"}", &out) == CEHR_ERR_INVALID_ARGUMENT);
  cehr_model* model = nullptr;
  CHECK(cehr_model_load("/nonexistent/model.json", &model) != CEHR_OK);
}

TEST_CASE("pipeline and model through the C API") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "cehr_capi_test";
  fs::remove_all(dir);
  char* out = nullptr;
  const json demo{{"output", (dir / "demo").string()}, {"patients", 60}, {"holdout", 10}, {"seed", 3}};
  REQUIRE(cehr_run("demo", demo.dump().c_str(), &out) == CEHR_OK);
  CHECK(json::parse(take(out))["counters"]["train_patients"] == 60);

  const json enc{{"input", (dir / "demo" / "train").string()}, {"output", (dir / "train.jsonl").string()}};
  REQUIRE(cehr_run("encode", enc.dump().c_str(), &out) == CEHR_OK);
  take(out);
  const json tr{{"input", (dir / "train.jsonl").string()}, {"output", (dir / "model.json").string()}};
  REQUIRE(cehr_run("train", tr.dump().c_str(), &out) == CEHR_OK);
  take(out);
  CHECK(fs::exists(dir / "model.json.manifest.json"));

  cehr_model* model = nullptr;
  REQUIRE(cehr_model_load((dir / "model.json").string().c_str(), &model) == CEHR_OK);
  std::size_t n = 0;
  REQUIRE(cehr_model_vocabulary_size(model, &n) == CEHR_OK);
  CHECK(n > 10);
  std::vector<double> p(n);
  REQUIRE(cehr_model_next(model, nullptr, 0, p.data(), p.size()) == CEHR_OK);
  double total = 0;
  for (double x : p) total += x;
  CHECK(std::abs(total - 1.0) < 1e-9);
  const char* ctx[] = {"NOT_A_TOKEN"};
  CHECK(cehr_model_next(model, ctx, 1, p.data(), p.size()) == CEHR_ERR_INVALID_ARGUMENT);
  CHECK(cehr_model_next(model, nullptr, 0, p.data(), 1) == CEHR_ERR_INVALID_ARGUMENT);
  char* text = nullptr;
  REQUIRE(cehr_model_token(model, 0, &text) == CEHR_OK);
  CHECK(take(text).size() > 0);
  CHECK(cehr_model_token(model, n, &text) == CEHR_ERR_INVALID_ARGUMENT);
  cehr_model_free(model);
  fs::remove_all(dir);
}
