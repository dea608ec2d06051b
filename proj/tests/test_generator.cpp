#include <doctest.h>

#include <numeric>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/sequence_io.hpp"
#include "support.hpp"

using namespace cehr;
using namespace cehr::gen;

namespace {

const std::string kPrompt = "Y:2010 A:50 G:8507 R:8527 ";

std::vector<TokenSequence> two_sequences() {
  return {support::tokens_of(kPrompt + "VS VT:9202 C:1 VE"), support::tokens_of(kPrompt + "VS VT:9202 C:2 VE")};
}

std::uint32_t idx(const Vocabulary& v, const char* text) { return v.index(*codec::parse_token(text)); }

codec::Representation gpt_rep() { return {codec::AttScheme::cehr_gpt(), {omop::kInpatientVisit}}; }

// A corpus in which every visit is followed by D:7 or D:14 (7:3).
std::vector<TokenSequence> interval_corpus() {
  std::vector<TokenSequence> out;
  for (int i = 0; i < 10; ++i) {
    std::string s = kPrompt + "VS VT:9202 C:1 VE";
    for (int k = 0; k < 10; ++k) s += (k < 7 ? " D:7" : " D:14") + std::string(" VS VT:9202 C:") + (k % 2 ? "1" : "2") + " VE";
    out.push_back(support::tokens_of(s));
  }
  return out;
}

}  // namespace

TEST_CASE("seeded streams are frozen") {
  CHECK(splitmix64(0) == 16294208416658607535ull);
  Rng r(42, 0);
  CHECK(r.uniform() == 0.8455738971182607);
  CHECK(r.below(1000) == 573);
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Rng s(1, 0);
  shuffle(std::span<int>(v), s);
  CHECK(v == std::vector<int>{4, 6, 8, 9, 3, 5, 7, 2, 0, 1});
}

TEST_CASE("streams are independent and reproducible") {
  Rng a(7, 1), b(7, 1), c(7, 2);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    differs = differs || x != c.uniform();
  }
  CHECK(differs);
  Rng d(3, 3);
  for (int i = 0; i < 1000; ++i) CHECK(d.below(17) < 17);
  CHECK(d.below(1) == 0);
}

TEST_CASE("vocabulary layout") {
  Vocabulary v;
  CHECK(v.size() == 2);
  CHECK(v.text(Vocabulary::kBegin) == "[BOS]");
  CHECK(v.text(Vocabulary::kEnd) == "[EOS]");
  CHECK_FALSE(v.token(Vocabulary::kBegin).has_value());
  const auto i = v.add(*codec::parse_token("C:5"));
  CHECK(i == 2);
  CHECK(v.add("C:5") == 2);
  CHECK(v.find("C:5") == 2u);
  CHECK_FALSE(v.find("C:6").has_value());
  CHECK_THROWS_AS(v.index(*codec::parse_token("C:6")), Error);

  const auto corpus = two_sequences();
  const auto built = build_vocabulary(corpus);
  CHECK(built.size() == 11);
  CHECK(built.text(2) == "Y:2010");
  CHECK(training_indices(corpus[0], built).front() == Vocabulary::kBegin);
  CHECK(training_indices(corpus[0], built).back() == Vocabulary::kEnd);
}

TEST_CASE("Markov counts, smoothing and backoff") {
  const auto corpus = two_sequences();
  const auto m0 = MarkovModel::fit(corpus, 1, 0.0);
  const auto& v = m0.vocabulary();
  const std::uint32_t vt = idx(v, "VT:9202"), c1 = idx(v, "C:1"), c2 = idx(v, "C:2"), ve = idx(v, "VE");
  std::vector<std::uint32_t> ctx{vt};
  CHECK(m0.count(ctx) == 2);
  CHECK(m0.count(ctx, c1) == 1);
  auto p = m0.next_distribution(ctx);
  CHECK(p[c1] == 0.5);
  CHECK(p[c2] == 0.5);
  CHECK(p[Vocabulary::kBegin] == 0.0);

  const auto m1 = MarkovModel::fit(corpus, 1, 1.0);
  p = m1.next_distribution(ctx);
  CHECK(p[c1] == doctest::Approx(2.0 / 12.0));
  CHECK(p[ve] == doctest::Approx(1.0 / 12.0));
  CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[Vocabulary::kBegin] == 0.0);

  const auto m2 = MarkovModel::fit(corpus, 2, 0.1);
  CHECK(m2.backoff_length(std::vector<std::uint32_t>{c1, ve}) == 2);
  CHECK(m2.backoff_length(std::vector<std::uint32_t>{c2, c1}) == 1);
  CHECK(m2.backoff_length(std::vector<std::uint32_t>{}) == 0);
  CHECK(m2.next_distribution(std::vector<std::uint32_t>{c2, c1}) == m2.next_distribution(std::vector<std::uint32_t>{c1}));
  CHECK_THROWS_AS(MarkovModel::fit({}, 2, 0.1), Error);
  CHECK_THROWS_AS(MarkovModel::fit(corpus, 0, 0.1), Error);
}

TEST_CASE("model persistence round trips") {
  auto m = MarkovModel::fit(interval_corpus(), 3, 0.1);
  m.metadata()["scheme"] = "cehr-gpt";
  const auto back = MarkovModel::from_json(m.to_json());
  CHECK(back.order() == 3);
  CHECK(back.metadata().at("scheme") == "cehr-gpt");
  CHECK(back.vocabulary().size() == m.vocabulary().size());
  const std::vector<std::uint32_t> ctx{Vocabulary::kBegin, 2, 3, 4};
  CHECK(back.next_distribution(ctx) == m.next_distribution(ctx));
  CHECK_THROWS_AS(MarkovModel::from_json("{\"format\": \"other\"}"), Error);
  CHECK_THROWS_AS(MarkovModel::from_json("not json"), Error);
}

TEST_CASE("property: Markov fit recovers a known order-1 chain") {
  const double t[3][3] = {{0.1, 0.6, 0.3}, {0.5, 0.2, 0.3}, {0.3, 0.3, 0.4}};
  Rng rng(5, 0);
  std::vector<TokenSequence> corpus(4);
  for (auto& s : corpus) {
    std::uint32_t state = 0;
    for (int i = 0; i < 5000; ++i) {
      s.tokens.push_back({codec::TokenKind::Concept, std::int64_t(state)});
      state = sample_index(t[state], rng);
    }
  }
  const auto m = MarkovModel::fit(corpus, 1, 0.0);
  double worst = 0.0;
  for (std::uint32_t a = 0; a < 3; ++a) {
    const auto p = m.next_distribution(std::vector<std::uint32_t>{m.vocabulary().index({codec::TokenKind::Concept, a})});
    for (std::uint32_t b = 0; b < 3; ++b)
      worst = std::max(worst, std::abs(p[m.vocabulary().index({codec::TokenKind::Concept, b})] - t[a][b]));
  }
  CHECK(worst < 0.03);
}

TEST_CASE("truncation oracles") {
  SamplerConfig cfg;
  const std::vector<double> p{0.5, 0.3, 0.2};
  cfg.strategy = TopP{1.0};
  CHECK(truncate_distribution(p, cfg) == p);
  cfg.strategy = TopP{0.8};
  const auto q = truncate_distribution(p, cfg);
  CHECK(q[0] == doctest::Approx(0.625));
  CHECK(q[1] == doctest::Approx(0.375));
  CHECK(q[2] == 0.0);
  cfg.strategy = TopP{0.5};
  CHECK(truncate_distribution(p, cfg) == std::vector<double>{1.0, 0.0, 0.0});
  cfg.strategy = TopK{1};
  CHECK(truncate_distribution(std::vector<double>{0.2, 0.5, 0.3}, cfg) == std::vector<double>{0.0, 1.0, 0.0});
  cfg.strategy = TopK{2};
  const auto tie = truncate_distribution(std::vector<double>{0.3, 0.3, 0.4}, cfg);
  CHECK(tie[0] > 0.0);
  CHECK(tie[1] == 0.0);
  CHECK(tie[2] > 0.0);

  cfg.strategy = TopP{1.0};
  cfg.temperature = 0.5;
  const auto sharp = truncate_distribution(std::vector<double>{0.2, 0.8}, cfg);
  CHECK(sharp[0] == doctest::Approx(0.04 / 0.68));
  CHECK(sharp[1] == doctest::Approx(0.64 / 0.68));
}

TEST_CASE("property: truncated distributions renormalize") {
  Rng rng(9, 0);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> p(1 + rng.below(50));
    for (auto& x : p) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    p[0] += 1e-3;
    SamplerConfig cfg;
    if (trial % 2) cfg.strategy = TopK{1 + rng.below(10)};
    else cfg.strategy = TopP{0.05 + 0.95 * rng.uniform()};
    cfg.temperature = 0.3 + 2.0 * rng.uniform();
    const auto q = truncate_distribution(p, cfg);
    CHECK(std::accumulate(q.begin(), q.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] == 0.0) CHECK(q[i] == 0.0);
  }
}

TEST_CASE("sampler configuration checks") {
  SamplerConfig cfg;
  cfg.strategy = TopK{0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.strategy = TopP{0.0};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.strategy = TopP{1.5};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.strategy = TopP{0.9};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  Rng rng(1, 1);
  CHECK(sample_index(std::vector<double>{0.0, 2.0, 0.0}, rng) == 1);
  CHECK_THROWS_AS(sample_index(std::vector<double>{0.0, 0.0}, rng), Error);
}

TEST_CASE("constrained generation is grammatical and thread independent") {
  const auto rep = gpt_rep();
  std::vector<TokenSequence> corpus;
  for (const auto& h : support::random_corpus(150, 21, 8, 1200, 15)) corpus.push_back(codec::encode_patient(h, rep));
  const auto model = MarkovModel::fit(corpus, 2, 0.5);
  const auto pool = PromptPool::from_corpus(corpus);
  SamplerConfig cfg;
  cfg.strategy = TopP{0.95};
  cfg.grammar_constrained = true;
  cfg.seed = 17;
  cfg.max_len = 128;
  const auto serial = generate_corpus(model, pool, cfg, rep, 200, 1);
  const auto parallel = generate_corpus(model, pool, cfg, rep, 200, 4);
  CHECK(serial.report.valid + serial.report.aborted == 200);
  CHECK(serial.report.invalid == 0);
  for (const auto& s : serial.sequences) CHECK(codec::validate_sequence(s, rep).accepted);
  REQUIRE(serial.sequences.size() == parallel.sequences.size());
  std::string a, b;
  for (const auto& s : serial.sequences) a += io::to_jsonl_line(s) + "\n";
  for (const auto& s : parallel.sequences) b += io::to_jsonl_line(s) + "\n";
  CHECK(a == b);
  CHECK_THROWS_AS(generate_corpus(model, pool, cfg, rep, 0, 1), Error);
  CHECK_THROWS_AS(generate_corpus(model, PromptPool{}, cfg, rep, 5, 1), Error);
}

TEST_CASE("prompt pool") {
  PromptPool pool = PromptPool::from_corpus(two_sequences());
  CHECK(pool.size() == 2);
  CHECK_THROWS_AS(pool.add(support::tokens_of("Y:2010 A:3").tokens), Error);
  Rng rng(0, 0);
  CHECK(pool.sample(rng).size() == 4);
}

TEST_CASE("Monte Carlo forecast of the next visit") {
  const auto rep = gpt_rep();
  const auto model = MarkovModel::fit(interval_corpus(), 1, 0.0);
  SamplerConfig cfg;
  cfg.seed = 4;
  const auto history = support::tokens_of(kPrompt + "VS VT:9202 C:1 VE");
  const auto f = monte_carlo_forecast(model, history, 4000, cfg, rep);
  CHECK(f.expected_days == doctest::Approx(7.0 * 0.7 + 14.0 * 0.3).epsilon(0.02));
  CHECK(f.interval_counts.size() == 2);
  // D:9 is outside the vocabulary, so the closest seen interval is used.
  CHECK(codec::to_string(f.interval_token) == "D:7");
  CHECK(f.visit_type == omop::kOutpatientVisit);
  CHECK((f.event == 1 || f.event == 2));
  CHECK_THROWS_AS(monte_carlo_forecast(model, support::tokens_of(kPrompt + "VS VT:9202 C:1"), 10, cfg, rep), Error);
}
