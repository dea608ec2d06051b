#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"

namespace cehr::gen {

using nlohmann::json;

std::size_t MarkovModel::ContextHash::operator()(const std::vector<std::uint32_t>& v) const noexcept {
  std::uint64_t h = 1469598103934665603ull;
  for (auto x : v) {
    h ^= x;
    h *= 1099511628211ull;
  }
  return static_cast<std::size_t>(h);
}

MarkovModel MarkovModel::fit(std::span<const TokenSequence> corpus, std::size_t order, double alpha) {
  if (corpus.empty()) fail(ErrorCode::InvalidArgument, "cannot fit a model on an empty corpus");
  if (order < 1) fail(ErrorCode::InvalidArgument, "model order must be at least 1");
  if (!(alpha >= 0.0)) fail(ErrorCode::InvalidArgument, "smoothing must be non-negative");

  MarkovModel m;
  m.vocab_ = build_vocabulary(corpus);
  m.order_ = order;
  m.alpha_ = alpha;
  m.tables_.resize(order + 1);
  std::vector<std::uint32_t> ctx;
  for (const auto& seq : corpus) {
    const auto idx = training_indices(seq, m.vocab_);
    for (std::size_t i = 1; i < idx.size(); ++i) {
      for (std::size_t n = 0; n <= order && n <= i; ++n) {
        ctx.assign(idx.begin() + std::ptrdiff_t(i - n), idx.begin() + std::ptrdiff_t(i));
        auto& row = m.tables_[n][ctx];
        ++row.total;
        ++row.next[idx[i]];
      }
    }
  }
  return m;
}

const MarkovModel::Row* MarkovModel::find_row(std::span<const std::uint32_t> context) const {
  const std::size_t longest = std::min(order_, context.size());
  std::vector<std::uint32_t> key;
  for (std::size_t n = longest + 1; n-- > 0;) {
    key.assign(context.end() - std::ptrdiff_t(n), context.end());
    auto it = tables_[n].find(key);
    if (it != tables_[n].end() && it->second.total > 0) return &it->second;
  }
  return nullptr;
}

std::size_t MarkovModel::backoff_length(std::span<const std::uint32_t> context) const {
  const std::size_t longest = std::min(order_, context.size());
  std::vector<std::uint32_t> key;
  for (std::size_t n = longest + 1; n-- > 0;) {
    key.assign(context.end() - std::ptrdiff_t(n), context.end());
    auto it = tables_[n].find(key);
    if (it != tables_[n].end() && it->second.total > 0) return n;
  }
  return 0;
}

std::vector<double> MarkovModel::next_distribution(std::span<const std::uint32_t> context) const {
  const std::size_t v = vocab_.size();
  std::vector<double> p(v, 0.0);
  const Row* row = find_row(context);
  const double total = row ? double(row->total) : 0.0;
  const double denom = total + alpha_ * double(v - 1);
  if (denom <= 0.0) {
    for (std::size_t i = 1; i < v; ++i) p[i] = 1.0 / double(v - 1);
    return p;
  }
  for (std::size_t i = 1; i < v; ++i) p[i] = alpha_ / denom;
  if (row)
    for (auto [tok, c] : row->next)
      if (tok != Vocabulary::kBegin) p[tok] += double(c) / denom;
  return p;
}

std::uint64_t MarkovModel::count(std::span<const std::uint32_t> context) const {
  if (context.size() > order_) return 0;
  std::vector<std::uint32_t> key(context.begin(), context.end());
  auto it = tables_[context.size()].find(key);
  return it == tables_[context.size()].end() ? 0 : it->second.total;
}

std::uint64_t MarkovModel::count(std::span<const std::uint32_t> context, std::uint32_t next) const {
  if (context.size() > order_) return 0;
  std::vector<std::uint32_t> key(context.begin(), context.end());
  auto it = tables_[context.size()].find(key);
  if (it == tables_[context.size()].end()) return 0;
  auto jt = it->second.next.find(next);
  return jt == it->second.next.end() ? 0 : jt->second;
}

std::string MarkovModel::to_json() const {
  json j;
  j["format"] = "cehr-markov-model";
  j["version"] = kFormatVersion;
  j["order"] = order_;
  j["alpha"] = alpha_;
  j["metadata"] = metadata_;
  auto& vocab = j["vocabulary"] = json::array();
  for (std::size_t i = 0; i < vocab_.size(); ++i) vocab.push_back(vocab_.text(std::uint32_t(i)));
  auto& tables = j["tables"] = json::array();
  for (const auto& table : tables_) {
    std::vector<const std::pair<const std::vector<std::uint32_t>, Row>*> rows;
    for (const auto& kv : table) rows.push_back(&kv);
    std::sort(rows.begin(), rows.end(), [](auto* a, auto* b) { return a->first < b->first; });
    json arr = json::array();
    for (const auto* kv : rows) {
      std::vector<std::pair<std::uint32_t, std::uint64_t>> next(kv->second.next.begin(), kv->second.next.end());
      std::sort(next.begin(), next.end());
      json counts = json::array();
      for (auto [t, c] : next) counts.push_back({t, c});
      arr.push_back({{"context", kv->first}, {"counts", counts}});
    }
    tables.push_back(std::move(arr));
  }
  return j.dump();
}

MarkovModel MarkovModel::from_json(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "cehr-markov-model")
    fail(ErrorCode::Data, "not a cehr-markov-model file");
  if (j.value("version", 0) != kFormatVersion)
    fail(ErrorCode::Data, "unsupported model version " + std::to_string(j.value("version", 0)));
  try {
    MarkovModel m;
    m.order_ = j.at("order").get<std::size_t>();
    m.alpha_ = j.at("alpha").get<double>();
    if (j.contains("metadata")) m.metadata_ = j["metadata"].get<std::map<std::string, std::string>>();
    const auto& vocab = j.at("vocabulary");
    if (vocab.size() < 2 || vocab[0] != Vocabulary::kBeginMarker || vocab[1] != Vocabulary::kEndMarker)
      fail(ErrorCode::Data, "model vocabulary must start with the begin/end markers");
    for (std::size_t i = 2; i < vocab.size(); ++i) {
      const auto& s = vocab[i].get_ref<const std::string&>();
      if (!codec::parse_token(s)) fail(ErrorCode::Data, "model vocabulary holds an unknown token " + s);
      if (m.vocab_.add(s) != i) fail(ErrorCode::Data, "duplicate vocabulary entry " + s);
    }
    const auto& tables = j.at("tables");
    if (tables.size() != m.order_ + 1) fail(ErrorCode::Data, "model table count does not match its order");
    m.tables_.resize(m.order_ + 1);
    for (std::size_t n = 0; n <= m.order_; ++n) {
      for (const auto& entry : tables[n]) {
        auto ctx = entry.at("context").get<std::vector<std::uint32_t>>();
        if (ctx.size() != n) fail(ErrorCode::Data, "context length mismatch in model table");
        Row row;
        for (const auto& c : entry.at("counts")) {
          auto t = c.at(0).get<std::uint32_t>();
          auto k = c.at(1).get<std::uint64_t>();
          if (t >= m.vocab_.size()) fail(ErrorCode::Data, "token index out of range in model table");
          row.next[t] = k;
          row.total += k;
        }
        m.tables_[n].emplace(std::move(ctx), std::move(row));
      }
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorCode::Data, std::string("malformed model file: ") + e.what());
  }
}

void MarkovModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_json() << '\n';
}

MarkovModel MarkovModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

}  // namespace cehr::gen
