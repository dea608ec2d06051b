#include <algorithm>
#include <optional>
#include <thread>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"

namespace cehr::gen {

GenerationResult generate_sequence(const SequenceModel& model, std::span<const Token> prompt,
                                   const SamplerConfig& cfg, const codec::Representation& rep, Rng& rng) {
  const auto& vocab = model.vocabulary();
  GenerationResult out;
  auto& tokens = out.sequence.tokens;

  std::vector<std::uint32_t> ctx{Vocabulary::kBegin};
  codec::GrammarState state(rep);
  std::size_t last_accepting = 0;
  for (const auto& t : prompt) {
    ctx.push_back(vocab.index(t));
    tokens.push_back(t);
    if (cfg.grammar_constrained && state.advance(t) != codec::RejectReason::None) {
      out.aborted = true;
      return out;
    }
  }

  while (tokens.size() < cfg.max_len) {
    auto p = model.next_distribution(ctx);
    if (cfg.grammar_constrained) {
      const bool can_end = state.accepting();
      double mass = 0.0;
      for (std::uint32_t i = 0; i < p.size(); ++i) {
        const auto& tok = vocab.token(i);
        const bool ok = i == Vocabulary::kEnd ? can_end : (tok && state.admits(*tok));
        if (!ok) p[i] = 0.0;
        mass += p[i];
      }
      if (!(mass > 0.0)) {
        out.aborted = true;
        return out;
      }
      for (double& x : p) x /= mass;
    }
    const auto q = truncate_distribution(p, cfg);
    const std::uint32_t next = sample_index(q, rng);
    if (next == Vocabulary::kEnd) {
      out.ended = true;
      break;
    }
    const auto& tok = vocab.token(next);
    if (!tok) {  // begin marker; only reachable through a model that violates the contract
      out.aborted = true;
      return out;
    }
    tokens.push_back(*tok);
    ctx.push_back(next);
    if (cfg.grammar_constrained) {
      state.advance(*tok);
      if (state.accepting()) last_accepting = tokens.size();
    }
  }

  if (cfg.grammar_constrained && !out.ended) {
    // Ran into max_len: keep the longest grammatical prefix.
    if (last_accepting == 0) {
      out.aborted = true;
      return out;
    }
    tokens.resize(last_accepting);
  }
  return out;
}

GeneratedCorpus generate_corpus(const SequenceModel& model, const PromptPool& pool, const SamplerConfig& cfg,
                                const codec::Representation& rep, std::size_t n, unsigned threads) {
  cfg.validate();
  if (n == 0) fail(ErrorCode::InvalidArgument, "corpus size must be at least 1");
  if (pool.empty()) fail(ErrorCode::InvalidArgument, "prompt pool is empty");

  struct Slot {
    GenerationResult result;
    codec::Validation validation;
  };
  std::vector<Slot> slots(n);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng(cfg.seed, i);
      auto prompt = pool.sample(rng);
      slots[i].result = generate_sequence(model, prompt, cfg, rep, rng);
      if (!slots[i].result.aborted) slots[i].validation = codec::validate_sequence(slots[i].result.sequence, rep);
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  if (threads == 1) {
    work(0, n);
  } else {
    std::vector<std::jthread> pool_threads;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
      if (b < e) pool_threads.emplace_back(work, b, e);
    }
  }

  GeneratedCorpus out;
  auto& rep_out = out.report;
  rep_out.attempts = n;
  for (auto& s : slots) {
    if (s.result.aborted) {
      ++rep_out.aborted;
      ++rep_out.reject_reasons["Aborted"];
      continue;
    }
    if (!s.validation) {
      ++rep_out.invalid;
      ++rep_out.reject_reasons[std::string(codec::reason_name(s.validation.reason))];
      continue;
    }
    ++rep_out.valid;
    out.sequences.push_back(std::move(s.result.sequence));
  }
  rep_out.validity_rate = double(rep_out.valid) / double(n);
  return out;
}

}  // namespace cehr::gen
