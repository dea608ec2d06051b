#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/utility.hpp"

namespace cehr::utility {

namespace {

struct PairHash {
  std::size_t operator()(const ConceptPair& p) const noexcept {
    std::uint64_t h = p.first.bits * 0x9E3779B97F4A7C15ull;
    h ^= p.second.bits + 0x7F4A7C159E3779B9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

using PairCounts = std::unordered_map<ConceptPair, std::uint64_t, PairHash>;

void accumulate_patient(const omop::PatientHistory& h, PairCounts& counts) {
  std::vector<std::pair<omop::Date, ConceptKey>> events;
  events.reserve(h.events.size());
  for (const auto& e : h.events) events.emplace_back(e.date, ConceptKey::of(e.domain, e.concept_id));
  std::sort(events.begin(), events.end());

  std::unordered_set<ConceptPair, PairHash> seen;
  std::vector<ConceptKey> earlier;  // distinct concepts on strictly earlier dates, sorted
  std::size_t i = 0;
  while (i < events.size()) {
    std::size_t j = i;
    while (j < events.size() && events[j].first == events[i].first) ++j;
    for (std::size_t k = i; k < j; ++k) {
      if (k > i && events[k].second == events[k - 1].second) continue;
      for (auto a : earlier) seen.insert({a, events[k].second});
    }
    for (std::size_t k = i; k < j; ++k) earlier.push_back(events[k].second);
    std::sort(earlier.begin(), earlier.end());
    earlier.erase(std::unique(earlier.begin(), earlier.end()), earlier.end());
    i = j;
  }
  for (const auto& p : seen) ++counts[p];
}

}  // namespace

double CooccurrenceMatrix::probability(ConceptKey a, ConceptKey b) const {
  auto it = counts.find({a, b});
  return it == counts.end() || total == 0 ? 0.0 : double(it->second) / double(total);
}

std::map<ConceptPair, double> CooccurrenceMatrix::distribution() const {
  std::map<ConceptPair, double> out;
  for (auto& [k, c] : counts) out.emplace_hint(out.end(), k, double(c) / double(total));
  return out;
}

std::map<ConceptKey, double> CooccurrenceMatrix::row_marginals() const {
  std::map<ConceptKey, double> out;
  for (auto& [k, c] : counts) out[k.first] += double(c);
  for (auto& [k, v] : out) v /= double(total);
  return out;
}

std::map<ConceptKey, double> CooccurrenceMatrix::column_marginals() const {
  std::map<ConceptKey, double> out;
  for (auto& [k, c] : counts) out[k.second] += double(c);
  for (auto& [k, v] : out) v /= double(total);
  return out;
}

CooccurrenceMatrix build_cooccurrence(std::span<const omop::PatientHistory> corpus, unsigned threads) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, corpus.size()))));
  std::vector<PairCounts> partial(threads);
  {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (corpus.size() + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t b = std::min(corpus.size(), t * chunk), e = std::min(corpus.size(), b + chunk);
      auto job = [&, t, b, e] {
        for (std::size_t i = b; i < e; ++i) accumulate_patient(corpus[i], partial[t]);
      };
      if (threads == 1) job();
      else workers.emplace_back(job);
    }
  }
  CooccurrenceMatrix m;
  for (auto& part : partial)
    for (auto& [k, c] : part) {
      m.counts[k] += c;
      m.total += c;
    }
  return m;
}

KlReport kl_divergence(const CooccurrenceMatrix& p, const CooccurrenceMatrix& q, double epsilon) {
  return kl_divergence(p.distribution(), q.distribution(), epsilon);
}

KlReport kl_to_independence(const CooccurrenceMatrix& m) {
  KlReport r;
  if (m.total == 0) return r;
  const auto rows = m.row_marginals();
  const auto cols = m.column_marginals();
  double kl = 0.0;
  for (auto& [k, c] : m.counts) {
    const double p = double(c) / double(m.total);
    kl += p * std::log(p / (rows.at(k.first) * cols.at(k.second)));
  }
  r.value = kl < 0.0 && kl > -1e-12 ? 0.0 : kl;
  return r;
}

CooccurrenceBounds cooccurrence_bounds(std::span<const omop::PatientHistory> corpus, std::uint64_t seed,
                                       double epsilon) {
  if (corpus.size() < 2) fail(ErrorCode::InvalidArgument, "co-occurrence bounds need at least two patients");
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  gen::Rng rng(seed, 0);
  gen::shuffle(std::span(order), rng);

  const std::size_t half = corpus.size() / 2;
  std::vector<omop::PatientHistory> a, b;
  for (std::size_t i = 0; i < half; ++i) a.push_back(corpus[order[i]]);
  for (std::size_t i = half; i < 2 * half; ++i) b.push_back(corpus[order[i]]);

  CooccurrenceBounds out;
  out.lower = kl_divergence(build_cooccurrence(a), build_cooccurrence(b), epsilon).value;
  out.upper = kl_to_independence(build_cooccurrence(corpus)).value;
  out.ordered = out.lower <= out.upper;
  return out;
}

std::optional<double> pmi3(const CooccurrenceMatrix& m, ConceptKey a, ConceptKey b) {
  const double joint = m.probability(a, b);
  if (joint <= 0.0) return std::nullopt;
  double pa = 0.0, pb = 0.0;
  for (auto& [k, c] : m.counts) {
    if (k.first == a) pa += double(c);
    if (k.second == b) pb += double(c);
  }
  pa /= double(m.total);
  pb /= double(m.total);
  return std::log(joint * joint * joint / (pa * pb));
}

std::vector<TopPair> top_pairs(const CooccurrenceMatrix& source, const CooccurrenceMatrix& synthetic, Domain first,
                               Domain second, std::size_t n) {
  std::vector<TopPair> rows;
  for (auto& [k, c] : source.counts) {
    if (k.first.domain() != first || k.second.domain() != second) continue;
    rows.push_back({k, double(c) / double(source.total), synthetic.probability(k.first, k.second)});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TopPair& x, const TopPair& y) { return x.source > y.source; });
  if (rows.size() > n) rows.resize(n);
  return rows;
}

}  // namespace cehr::utility
