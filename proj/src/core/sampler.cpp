#include <algorithm>
#include <cmath>
#include <numeric>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"

namespace cehr::gen {

void SamplerConfig::validate() const {
  if (const auto* k = std::get_if<TopK>(&strategy); k && k->k < 1) fail(ErrorCode::InvalidArgument, "top-k needs k >= 1");
  if (const auto* p = std::get_if<TopP>(&strategy); p && !(p->p > 0.0 && p->p <= 1.0))
    fail(ErrorCode::InvalidArgument, "top-p needs p in (0, 1]");
  if (!(temperature > 0.0)) fail(ErrorCode::InvalidArgument, "temperature must be positive");
}

std::string SamplerConfig::describe() const {
  std::string s;
  if (const auto* k = std::get_if<TopK>(&strategy)) s = "top_k=" + std::to_string(k->k);
  else s = "top_p=" + std::to_string(std::get<TopP>(strategy).p);
  return s + " temperature=" + std::to_string(temperature);
}

std::vector<double> truncate_distribution(std::span<const double> p, const SamplerConfig& cfg) {
  const std::size_t n = p.size();
  std::vector<double> q(p.begin(), p.end());

  double total = 0.0;
  if (cfg.temperature != 1.0) {
    double max_log = -INFINITY;
    for (double x : q)
      if (x > 0.0) max_log = std::max(max_log, std::log(x));
    for (double& x : q) x = x > 0.0 ? std::exp((std::log(x) - max_log) / cfg.temperature) : 0.0;
  }
  for (double x : q) total += x;
  if (total <= 0.0) return q;
  if (total != 1.0)
    for (double& x : q) x /= total;

  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i)
    if (q[i] > 0.0) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return q[a] > q[b]; });

  std::size_t keep = order.size();
  if (const auto* k = std::get_if<TopK>(&cfg.strategy)) {
    keep = std::min(keep, k->k);
  } else {
    const double target = std::get<TopP>(cfg.strategy).p;
    double mass = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
      mass += q[order[i]];
      if (mass >= target - 1e-12) {
        keep = i + 1;
        break;
      }
    }
  }

  if (keep == order.size()) return q;
  std::vector<double> out(n, 0.0);
  double kept = 0.0;
  for (std::size_t i = 0; i < keep; ++i) kept += q[order[i]];
  for (std::size_t i = 0; i < keep; ++i) out[order[i]] = q[order[i]] / kept;
  return out;
}

std::uint32_t sample_index(std::span<const double> p, Rng& rng) {
  double total = 0.0;
  for (double x : p) total += x;
  if (!(total > 0.0)) fail(ErrorCode::InvalidArgument, "cannot sample from a zero distribution");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::uint32_t last = 0;
  for (std::uint32_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    acc += p[i];
    last = i;
    if (u < acc) return i;
  }
  return last;
}

PromptPool PromptPool::from_corpus(std::span<const TokenSequence> corpus) {
  PromptPool pool;
  for (const auto& s : corpus)
    if (s.tokens.size() >= 4) pool.add(std::span(s.tokens).first(4));
  return pool;
}

void PromptPool::add(std::span<const Token> prompt) {
  if (prompt.size() != 4) fail(ErrorCode::InvalidArgument, "a demographic prompt has exactly four tokens");
  prompts_.push_back({prompt[0], prompt[1], prompt[2], prompt[3]});
}

std::span<const Token> PromptPool::sample(Rng& rng) const {
  if (prompts_.empty()) fail(ErrorCode::InvalidArgument, "prompt pool is empty");
  return prompts_[rng.below(prompts_.size())];
}

}  // namespace cehr::gen
