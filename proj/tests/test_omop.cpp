#include <doctest.h>

#include <fstream>

#include "cehr/error.hpp"
#include "cehr/omop.hpp"
#include "support.hpp"

using namespace cehr;
using support::ymd;

TEST_CASE("date parsing") {
  CHECK(omop::parse_date("2020-02-29") == ymd(2020, 2, 29));
  CHECK(omop::parse_date("2020-01-05 00:00:00") == ymd(2020, 1, 5));
  CHECK(omop::parse_date("2020-01-05T08:30:00") == ymd(2020, 1, 5));
  CHECK_FALSE(omop::parse_date("2019-02-29").has_value());
  CHECK_FALSE(omop::parse_date("2020/01/05").has_value());
  CHECK_FALSE(omop::parse_date("20-01-05").has_value());
  CHECK_FALSE(omop::parse_date("").has_value());
  CHECK(omop::format_date(ymd(2003, 7, 9)) == "2003-07-09");
  CHECK(omop::year_of(ymd(1999, 12, 31)) == 1999);
}

TEST_CASE("same-day events order condition, drug, procedure, then concept") {
  omop::DomainRecord c{1, 1, omop::Domain::Condition, 900, ymd(2010, 1, 1)};
  omop::DomainRecord d{1, 1, omop::Domain::Drug, 5, ymd(2010, 1, 1)};
  omop::DomainRecord c2{1, 1, omop::Domain::Condition, 901, ymd(2010, 1, 1)};
  CHECK(omop::same_day_before(c, d));
  CHECK_FALSE(omop::same_day_before(d, c));
  CHECK(omop::same_day_before(c, c2));
}

TEST_CASE("dataset save and load round trip") {
  const auto corpus = support::random_corpus(60, 3);
  const auto ds = support::to_dataset(corpus);
  const auto dir = support::temp_dir("omop_roundtrip");
  omop::save_dataset(ds, dir);
  const auto back = omop::load_dataset(dir);
  CHECK(back == ds);
  CHECK(back.report.malformed_rows == 0);
  CHECK(back.report.integrity_rejected == 0);

  const auto hs = omop::histories(back);
  REQUIRE(hs.size() == corpus.size());
  for (std::size_t i = 0; i < hs.size(); ++i) CHECK(omop::timeline_dates(hs[i]) == omop::timeline_dates(corpus[i]));

  omop::DatasetWriter w(dir / "streamed");
  for (const auto& h : corpus) w.write(h);
  w.close();
  CHECK(omop::load_dataset(dir / "streamed") == ds);
}

TEST_CASE("loader counts and drops bad rows") {
  const auto dir = support::temp_dir("omop_bad");
  {
    std::ofstream(dir / "person.csv") << "person_id,year_of_birth,gender_concept_id,race_concept_id\n"
                                         "1,1950,8507,8527\n"
                                         "2,notayear,8532,8527\n";
    std::ofstream(dir / "visit_occurrence.csv")
        << "visit_occurrence_id,person_id,visit_concept_id,visit_start_date,visit_end_date,discharged_to_concept_id\n"
           "10,1,9202,2010-01-01,2010-01-01,\n"
           "11,1,9201,2010-02-01,2010-02-05,8536\n"
           "12,99,9202,2010-03-01,2010-03-01,\n"
           "13,1,9202,2010-13-01,2010-03-01,\n";
    std::ofstream(dir / "condition_occurrence.csv")
        << "person_id,visit_occurrence_id,condition_concept_id,condition_start_date\n"
           "1,10,100,2010-01-01\n"
           "1,11,0,2010-02-02\n"
           "1,11,101,2010-03-09\n"
           "1,77,102,2010-01-01\n"
           "1,11,103\n";
  }
  const auto ds = omop::load_dataset(dir);
  CHECK(ds.persons.size() == 1);
  CHECK(ds.visits.size() == 2);
  CHECK(ds.events.size() == 1);
  CHECK(ds.report.unknown_concepts_dropped == 1);
  CHECK(ds.report.integrity_rejected == 3);
  CHECK(ds.report.malformed_rows == 3);
  CHECK(ds.visits[1].discharge == 8536);
}

TEST_CASE("missing tables are IO errors") {
  const auto dir = support::temp_dir("omop_missing");
  try {
    omop::load_dataset(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
  }
}

TEST_CASE("history assembly filters short patients and flags long ones") {
  const auto ds = support::to_dataset(support::random_corpus(50, 4));
  omop::AssembleReport rep;
  auto count = [](const omop::PatientHistory& h) { return h.events.size(); };
  const auto kept = omop::assemble_histories(ds, count, 5, 20, &rep);
  std::size_t expected = 0, flagged = 0;
  for (const auto& h : omop::histories(ds)) {
    expected += h.events.size() >= 5;
    flagged += h.events.size() > 20;
  }
  CHECK(kept.size() == expected);
  CHECK(rep.too_short == 50 - expected);
  CHECK(rep.flagged_for_truncation == flagged);
  for (const auto& a : kept) CHECK(a.needs_truncation == (a.token_count > 20));
}
