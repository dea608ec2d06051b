#include "cehr/error.hpp"
#include "cehr/generator.hpp"

namespace cehr::gen {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) : engine_(splitmix64(seed ^ splitmix64(stream))) {}

double Rng::uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "Rng::below(0)");
  // Rejection sampling keeps the draw exactly uniform and platform independent.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do x = engine_();
  while (x >= limit);
  return x % n;
}

Vocabulary::Vocabulary() {
  add(kBeginMarker);
  add(kEndMarker);
}

std::uint32_t Vocabulary::add(std::string_view text) {
  auto it = index_.find(std::string(text));
  if (it != index_.end()) return it->second;
  const auto i = static_cast<std::uint32_t>(text_.size());
  text_.emplace_back(text);
  tokens_.push_back(text == kBeginMarker || text == kEndMarker ? std::nullopt : codec::parse_token(text));
  index_.emplace(text_.back(), i);
  return i;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view text) const {
  auto it = index_.find(std::string(text));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::uint32_t Vocabulary::index(const Token& t) const {
  auto i = find(t);
  if (!i) fail(ErrorCode::InvalidArgument, "token outside the vocabulary: " + codec::to_string(t));
  return *i;
}

Vocabulary build_vocabulary(std::span<const TokenSequence> corpus) {
  Vocabulary v;
  for (const auto& s : corpus)
    for (const auto& t : s.tokens) v.add(t);
  return v;
}

std::vector<std::uint32_t> training_indices(const TokenSequence& seq, const Vocabulary& vocab) {
  std::vector<std::uint32_t> out;
  out.reserve(seq.tokens.size() + 2);
  out.push_back(Vocabulary::kBegin);
  for (const auto& t : seq.tokens) out.push_back(vocab.index(t));
  out.push_back(Vocabulary::kEnd);
  return out;
}

}  // namespace cehr::gen
