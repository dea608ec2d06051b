#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cehr/codec.hpp"

namespace cehr::gen {

using codec::Token;
using codec::TokenSequence;

// ---------------------------------------------------------------------------
// Random streams

/// Name recorded in run manifests so corpora can be reproduced elsewhere.
inline constexpr std::string_view kRngAlgorithm = "mt19937_64, stream seed = splitmix64(seed ^ splitmix64(stream))";

std::uint64_t splitmix64(std::uint64_t x);

/// A seeded stream. Streams for (seed, i) are independent of how work is
/// scheduled, so parallel and serial runs draw identical numbers.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream);
  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Fisher-Yates driven by Rng::below, so the permutation is portable.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.below(i)]);
}

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr std::uint32_t kBegin = 0;
  static constexpr std::uint32_t kEnd = 1;
  static constexpr std::string_view kBeginMarker = "[BOS]";
  static constexpr std::string_view kEndMarker = "[EOS]";

  Vocabulary();

  std::uint32_t add(std::string_view text);
  std::uint32_t add(const Token& t) { return add(codec::to_string(t)); }
  std::optional<std::uint32_t> find(std::string_view text) const;
  std::optional<std::uint32_t> find(const Token& t) const { return find(codec::to_string(t)); }
  /// Throws InvalidArgument for tokens outside the vocabulary.
  std::uint32_t index(const Token& t) const;

  const std::string& text(std::uint32_t i) const { return text_.at(i); }
  /// Parsed token at `i`; nullopt for the begin/end markers.
  const std::optional<Token>& token(std::uint32_t i) const { return tokens_.at(i); }
  std::span<const std::optional<Token>> tokens() const { return tokens_; }
  std::size_t size() const { return text_.size(); }

 private:
  std::vector<std::string> text_;
  std::vector<std::optional<Token>> tokens_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

/// Tokens in first-seen order over the corpus, after the two markers.
Vocabulary build_vocabulary(std::span<const TokenSequence> corpus);

/// [BOS] t1 .. tn [EOS] as vocabulary indices.
std::vector<std::uint32_t> training_indices(const TokenSequence& seq, const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Models

class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  virtual const Vocabulary& vocabulary() const = 0;
  /// Probability of each vocabulary entry following `context`. Sums to 1;
  /// the begin marker always has probability 0.
  virtual std::vector<double> next_distribution(std::span<const std::uint32_t> context) const = 0;
};

/// Count-based order-k model with additive smoothing and suffix backoff:
/// P(t | ctx) = (count(ctx, t) + alpha) / (count(ctx) + alpha * |V'|) using the
/// longest suffix of ctx (length <= k) seen in training; |V'| excludes [BOS].
class MarkovModel final : public SequenceModel {
 public:
  static constexpr int kFormatVersion = 1;

  static MarkovModel fit(std::span<const TokenSequence> corpus, std::size_t order, double alpha);

  const Vocabulary& vocabulary() const override { return vocab_; }
  std::vector<double> next_distribution(std::span<const std::uint32_t> context) const override;

  std::size_t order() const { return order_; }
  double alpha() const { return alpha_; }
  std::uint64_t count(std::span<const std::uint32_t> context) const;
  std::uint64_t count(std::span<const std::uint32_t> context, std::uint32_t next) const;
  /// Length of the suffix of `context` the model conditions on.
  std::size_t backoff_length(std::span<const std::uint32_t> context) const;

  /// Free-form metadata persisted with the model (representation name, inpatient types, ...).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  std::string to_json() const;
  static MarkovModel from_json(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static MarkovModel load(const std::filesystem::path& path);

 private:
  struct Row {
    std::uint64_t total = 0;
    std::unordered_map<std::uint32_t, std::uint64_t> next;
  };
  struct ContextHash {
    std::size_t operator()(const std::vector<std::uint32_t>& v) const noexcept;
  };
  using Table = std::unordered_map<std::vector<std::uint32_t>, Row, ContextHash>;

  const Row* find_row(std::span<const std::uint32_t> context) const;

  Vocabulary vocab_;
  std::size_t order_ = 2;
  double alpha_ = 0.1;
  std::vector<Table> tables_;  // tables_[n] holds contexts of length n
  std::map<std::string, std::string> metadata_;
};

// ---------------------------------------------------------------------------
// Sampling

struct TopK {
  std::size_t k = 1;
};
struct TopP {
  double p = 1.0;
};

struct SamplerConfig {
  std::variant<TopK, TopP> strategy = TopP{1.0};
  double temperature = 1.0;
  std::uint64_t seed = 0;
  bool grammar_constrained = false;
  std::size_t max_len = 512;

  /// Throws InvalidArgument when k < 1, p outside (0, 1], or temperature <= 0.
  void validate() const;
  std::string describe() const;
};

/// Temperature (p_i^(1/t) renormalized), then top-k or top-p truncation, then
/// renormalization. Top-k ties at the cut keep the lower index; top-p keeps the
/// shortest probability-descending prefix whose mass reaches p.
std::vector<double> truncate_distribution(std::span<const double> p, const SamplerConfig& cfg);

/// Inverse-CDF draw over a (possibly unnormalized) non-negative vector.
std::uint32_t sample_index(std::span<const double> p, Rng& rng);

class PromptPool {
 public:
  static PromptPool from_corpus(std::span<const TokenSequence> corpus);
  void add(std::span<const Token> prompt);
  std::span<const Token> sample(Rng& rng) const;
  std::size_t size() const { return prompts_.size(); }
  bool empty() const { return prompts_.empty(); }

 private:
  std::vector<std::array<Token, 4>> prompts_;
};

struct GenerationResult {
  TokenSequence sequence;
  bool ended = false;    // end marker sampled
  bool aborted = false;  // constrained sampling found no admissible mass
};

GenerationResult generate_sequence(const SequenceModel& model, std::span<const Token> prompt,
                                   const SamplerConfig& cfg, const codec::Representation& rep, Rng& rng);

struct CorpusReport {
  std::size_t attempts = 0;
  std::size_t valid = 0;
  std::size_t invalid = 0;
  std::size_t aborted = 0;
  double validity_rate = 0.0;
  std::map<std::string, std::size_t> reject_reasons;
};

struct GeneratedCorpus {
  std::vector<TokenSequence> sequences;  // valid sequences in attempt order
  CorpusReport report;
};

/// `n` attempts; attempt i draws its prompt and tokens from Rng(cfg.seed, i).
/// Invalid sequences are discarded and counted. Output is independent of `threads`.
GeneratedCorpus generate_corpus(const SequenceModel& model, const PromptPool& pool, const SamplerConfig& cfg,
                                const codec::Representation& rep, std::size_t n, unsigned threads = 1);

// ---------------------------------------------------------------------------
// Forecasting

struct Forecast {
  std::map<std::string, std::size_t> interval_counts;  // token text -> draws
  double expected_days = 0.0;
  double sd_days = 0.0;
  Token interval_token;  // interval token for round(expected_days)
  codec::ConceptId visit_type = 0;
  std::map<codec::ConceptId, std::size_t> visit_type_counts;
  codec::ConceptId event = 0;
  std::map<codec::ConceptId, std::size_t> event_counts;
};

/// Monte Carlo estimates of the next interval, then the visit type given the
/// expected interval, then the first event given both. `history` must end where
/// a between-visit interval token is grammatical.
Forecast monte_carlo_forecast(const SequenceModel& model, const TokenSequence& history, std::size_t n_samples,
                              const SamplerConfig& cfg, const codec::Representation& rep);

}  // namespace cehr::gen
