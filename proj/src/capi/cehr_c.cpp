#include "cehr/cehr.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "cehr/codec.hpp"
#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/pipeline.hpp"
#include "cehr/sequence_io.hpp"

using nlohmann::json;

struct cehr_codec {
  cehr::codec::Representation rep;
  cehr::codec::ConceptDomains domains;
};

struct cehr_model {
  cehr::gen::MarkovModel model;
};

namespace {

thread_local std::string g_last_error;

cehr_status status_of(cehr::ErrorCode c) {
  switch (c) {
    case cehr::ErrorCode::InvalidArgument: return CEHR_ERR_INVALID_ARGUMENT;
    case cehr::ErrorCode::Io: return CEHR_ERR_IO;
    case cehr::ErrorCode::Data: return CEHR_ERR_DATA;
    case cehr::ErrorCode::Grammar: return CEHR_ERR_GRAMMAR;
    case cehr::ErrorCode::NotAvailable: return CEHR_ERR_NOT_AVAILABLE;
  }
  return CEHR_ERR_INTERNAL;
}

template <typename F>
cehr_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return CEHR_OK;
  } catch (const cehr::Error& e) {
    g_last_error = e.what();
    return status_of(e.code());
  } catch (const json::exception& e) {
    g_last_error = e.what();
    return CEHR_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CEHR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CEHR_ERR_INTERNAL;
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

void require(bool ok, const char* what) {
  if (!ok) cehr::fail(cehr::ErrorCode::InvalidArgument, what);
}

cehr::codec::TokenSequence parse_record(const char* record) {
  require(record != nullptr, "record is null");
  std::string err;
  auto seq = cehr::io::parse_jsonl_line(record, &err);
  if (!seq) cehr::fail(cehr::ErrorCode::InvalidArgument, "malformed sequence record: " + err);
  return *seq;
}

json history_to_json(const cehr::omop::PatientHistory& h) {
  using cehr::omop::format_date;
  json visits = json::array(), events = json::array();
  for (const auto& v : h.visits)
    visits.push_back({{"visit_id", v.visit_id},
                      {"visit_type", v.visit_type},
                      {"start", format_date(v.start)},
                      {"end", format_date(v.end)},
                      {"discharge", v.discharge ? json(*v.discharge) : json(nullptr)}});
  for (const auto& e : h.events)
    events.push_back({{"visit_id", e.visit_id},
                      {"domain", cehr::omop::domain_name(e.domain)},
                      {"concept_id", e.concept_id},
                      {"date", format_date(e.date)}});
  return {{"person",
           {{"person_id", h.person.person_id},
            {"year_of_birth", h.person.year_of_birth},
            {"gender", h.person.gender},
            {"race", h.person.race}}},
          {"visits", visits},
          {"events", events}};
}

cehr::omop::Date date_field(const json& j, const char* key) {
  auto d = cehr::omop::parse_date(j.at(key).get<std::string>());
  if (!d) cehr::fail(cehr::ErrorCode::InvalidArgument, std::string("bad date in '") + key + "'");
  return *d;
}

cehr::omop::PatientHistory history_from_json(const json& j) {
  cehr::omop::PatientHistory h;
  const json& p = j.at("person");
  h.person.person_id = p.at("person_id").get<std::int64_t>();
  h.person.year_of_birth = p.at("year_of_birth").get<int>();
  h.person.gender = p.value("gender", std::int64_t{0});
  h.person.race = p.value("race", std::int64_t{0});
  for (const auto& v : j.at("visits")) {
    cehr::omop::VisitRecord r;
    r.visit_id = v.at("visit_id").get<std::int64_t>();
    r.person_id = h.person.person_id;
    r.visit_type = v.at("visit_type").get<std::int64_t>();
    r.start = date_field(v, "start");
    r.end = v.contains("end") ? date_field(v, "end") : r.start;
    if (v.contains("discharge") && !v.at("discharge").is_null()) r.discharge = v.at("discharge").get<std::int64_t>();
    h.visits.push_back(r);
  }
  for (const auto& e : j.at("events")) {
    cehr::omop::DomainRecord r;
    r.person_id = h.person.person_id;
    r.visit_id = e.at("visit_id").get<std::int64_t>();
    auto d = cehr::omop::parse_domain(e.value("domain", std::string("Condition")));
    require(d.has_value(), "unknown event domain");
    r.domain = *d;
    r.concept_id = e.at("concept_id").get<std::int64_t>();
    r.date = date_field(e, "date");
    h.events.push_back(r);
  }
  cehr::omop::canonicalize(h);
  return h;
}

}  // namespace

extern "C" {

const char* cehr_version(void) { return CEHR_VERSION_STRING; }

const char* cehr_last_error(void) { return g_last_error.c_str(); }

const char* cehr_status_name(cehr_status status) {
  switch (status) {
    case CEHR_OK: return "ok";
    case CEHR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case CEHR_ERR_IO: return "i/o error";
    case CEHR_ERR_DATA: return "data error";
    case CEHR_ERR_GRAMMAR: return "grammar error";
    case CEHR_ERR_NOT_AVAILABLE: return "not available";
    case CEHR_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void cehr_free_string(char* s) { std::free(s); }

cehr_status cehr_run(const char* command, const char* config_json, char** manifest_json) {
  return guarded([&] {
    require(command && manifest_json, "null argument");
    *manifest_json = nullptr;
    const json cfg = config_json && *config_json ? json::parse(config_json) : json::object();
    *manifest_json = dup(cehr::pipeline::run(command, cfg).dump(2));
  });
}

cehr_status cehr_commands(char** names) {
  return guarded([&] {
    require(names != nullptr, "null argument");
    std::string s;
    for (const auto& c : cehr::pipeline::commands()) s += c + "\n";
    *names = dup(s);
  });
}

cehr_status cehr_codec_new(const char* scheme, const int64_t* inpatient_types, size_t n_types, cehr_codec** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = nullptr;
    auto name = cehr::codec::parse_scheme(scheme ? scheme : "cehr-gpt");
    require(name && *name != cehr::codec::SchemeName::Custom, "unknown scheme");
    auto c = std::make_unique<cehr_codec>();
    c->rep.scheme = cehr::codec::AttScheme::named(*name);
    if (inpatient_types && n_types > 0) c->rep.inpatient_types = {inpatient_types, inpatient_types + n_types};
    *out = c.release();
  });
}

void cehr_codec_free(cehr_codec* codec) { delete codec; }

cehr_status cehr_codec_load_concepts(cehr_codec* codec, const char* concept_csv) {
  return guarded([&] {
    require(codec && concept_csv, "null argument");
    codec->domains = cehr::omop::load_concept_domains(concept_csv);
  });
}

cehr_status cehr_codec_validate(const cehr_codec* codec, const char* jsonl_record, int* accepted, char** reason) {
  return guarded([&] {
    require(codec && accepted, "null argument");
    const auto v = cehr::codec::validate_sequence(parse_record(jsonl_record), codec->rep);
    *accepted = v.accepted ? 1 : 0;
    if (reason) *reason = dup(std::string(cehr::codec::reason_name(v.reason)));
  });
}

cehr_status cehr_codec_decode(const cehr_codec* codec, const char* jsonl_record, char** history_json) {
  return guarded([&] {
    require(codec && history_json, "null argument");
    cehr::codec::IdAllocator ids;
    const auto h = cehr::codec::decode_patient(parse_record(jsonl_record), codec->rep, ids, codec->domains);
    *history_json = dup(history_to_json(h).dump());
  });
}

cehr_status cehr_codec_encode(const cehr_codec* codec, const char* history_json, size_t max_len,
                              char** jsonl_record) {
  return guarded([&] {
    require(codec && history_json && jsonl_record, "null argument");
    const auto h = history_from_json(json::parse(history_json));
    *jsonl_record = dup(cehr::io::to_jsonl_line(cehr::codec::encode_patient(h, codec->rep, max_len)));
  });
}

cehr_status cehr_model_load(const char* path, cehr_model** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    *out = new cehr_model{cehr::gen::MarkovModel::load(path)};
  });
}

void cehr_model_free(cehr_model* model) { delete model; }

cehr_status cehr_model_vocabulary_size(const cehr_model* model, size_t* size) {
  return guarded([&] {
    require(model && size, "null argument");
    *size = model->model.vocabulary().size();
  });
}

cehr_status cehr_model_next(const cehr_model* model, const char* const* tokens, size_t n_tokens, double* probs,
                            size_t capacity) {
  return guarded([&] {
    require(model && probs && (tokens || n_tokens == 0), "null argument");
    const auto& vocab = model->model.vocabulary();
    require(capacity >= vocab.size(), "probability buffer smaller than the vocabulary");
    std::vector<std::uint32_t> ctx{cehr::gen::Vocabulary::kBegin};
    for (size_t i = 0; i < n_tokens; ++i) {
      auto idx = vocab.find(tokens[i]);
      if (!idx) cehr::fail(cehr::ErrorCode::InvalidArgument, std::string("token outside the vocabulary: ") + tokens[i]);
      ctx.push_back(*idx);
    }
    const auto p = model->model.next_distribution(ctx);
    std::copy(p.begin(), p.end(), probs);
  });
}

cehr_status cehr_model_token(const cehr_model* model, size_t index, char** text) {
  return guarded([&] {
    require(model && text, "null argument");
    require(index < model->model.vocabulary().size(), "token index out of range");
    *text = dup(model->model.vocabulary().text(std::uint32_t(index)));
  });
}

}  // extern "C"
