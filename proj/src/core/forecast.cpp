#include <cmath>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"

namespace cehr::gen {

namespace {

template <typename Pred>
std::vector<double> restricted(std::vector<double> p, const Vocabulary& vocab, Pred admit) {
  double mass = 0.0;
  for (std::uint32_t i = 0; i < p.size(); ++i) {
    const auto& tok = vocab.token(i);
    if (!tok || !admit(*tok)) p[i] = 0.0;
    mass += p[i];
  }
  if (!(mass > 0.0)) fail(ErrorCode::NotAvailable, "model assigns no probability to the requested token class");
  for (double& x : p) x /= mass;
  return p;
}

template <typename Key>
Key argmax(const std::map<Key, std::size_t>& counts) {
  Key best{};
  std::size_t best_n = 0;
  for (const auto& [k, n] : counts)
    if (n > best_n) {
      best = k;
      best_n = n;
    }
  return best;
}

}  // namespace

Forecast monte_carlo_forecast(const SequenceModel& model, const TokenSequence& history, std::size_t n_samples,
                              const SamplerConfig& cfg, const codec::Representation& rep) {
  cfg.validate();
  if (n_samples == 0) fail(ErrorCode::InvalidArgument, "n_samples must be at least 1");
  codec::GrammarState state(rep);
  for (std::size_t i = 0; i < history.tokens.size(); ++i)
    if (state.advance(history.tokens[i]) != codec::RejectReason::None)
      fail(ErrorCode::Grammar, "history is not grammatical at token " + std::to_string(i));
  if (state.phase() != codec::GrammarState::Phase::ExpectIntervalOrEnd || !rep.scheme.has_visit_blocks())
    fail(ErrorCode::InvalidArgument, "history must end where a between-visit interval token is grammatical");

  const auto& vocab = model.vocabulary();
  std::vector<std::uint32_t> ctx{Vocabulary::kBegin};
  for (const auto& t : history.tokens) ctx.push_back(vocab.index(t));

  Rng rng(cfg.seed, 0);
  Forecast f;

  // P(dt | h)
  auto p = truncate_distribution(
      restricted(model.next_distribution(ctx), vocab, [&](const Token& t) { return state.admits(t); }), cfg);
  std::vector<double> days;
  days.reserve(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const auto& tok = *vocab.token(sample_index(p, rng));
    ++f.interval_counts[codec::to_string(tok)];
    days.push_back(double(rep.scheme.decode(tok)));
  }
  double sum = 0.0;
  for (double d : days) sum += d;
  f.expected_days = sum / double(days.size());
  double ss = 0.0;
  for (double d : days) ss += (d - f.expected_days) * (d - f.expected_days);
  f.sd_days = std::sqrt(ss / double(days.size()));

  // P(v | E(dt), h)
  f.interval_token = *rep.scheme.encode(std::llround(f.expected_days), codec::IntervalContext::BetweenVisit);
  if (!vocab.find(f.interval_token)) {
    // Condition on the closest interval the model has seen.
    double best = INFINITY;
    for (std::uint32_t i = 0; i < vocab.size(); ++i) {
      const auto& tok = vocab.token(i);
      if (!tok || !codec::is_interval(tok->kind) || !rep.scheme.admits(*tok)) continue;
      const double d = std::abs(double(rep.scheme.decode(*tok)) - f.expected_days);
      if (d < best) {
        best = d;
        f.interval_token = *tok;
      }
    }
  }
  const Token vs{codec::TokenKind::VisitStart, 0};
  for (const auto& t : {f.interval_token, vs}) {
    auto idx = vocab.find(t);
    if (!idx) fail(ErrorCode::NotAvailable, "expected interval token " + codec::to_string(t) + " is outside the model vocabulary");
    ctx.push_back(*idx);
  }
  auto pv = truncate_distribution(
      restricted(model.next_distribution(ctx), vocab, [](const Token& t) { return t.kind == codec::TokenKind::VisitType; }),
      cfg);
  for (std::size_t s = 0; s < n_samples; ++s) ++f.visit_type_counts[vocab.token(sample_index(pv, rng))->payload];
  f.visit_type = argmax(f.visit_type_counts);

  // P(c | v, E(dt), h)
  ctx.push_back(vocab.index(Token{codec::TokenKind::VisitType, f.visit_type}));
  auto pc = truncate_distribution(
      restricted(model.next_distribution(ctx), vocab, [](const Token& t) { return t.kind == codec::TokenKind::Concept; }),
      cfg);
  for (std::size_t s = 0; s < n_samples; ++s) ++f.event_counts[vocab.token(sample_index(pc, rng))->payload];
  f.event = argmax(f.event_counts);
  return f;
}

}  // namespace cehr::gen
