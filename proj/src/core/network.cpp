#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cehr/error.hpp"
#include "cehr/utility.hpp"
#include "csv.hpp"

namespace cehr::utility {

ConceptNetwork concept_network(const CooccurrenceMatrix& m, ConceptKey anchor, NetworkMetric metric,
                               std::size_t branching, std::size_t depth, std::optional<Domain> restrict_domain) {
  std::map<ConceptKey, std::vector<std::pair<ConceptKey, std::uint64_t>>> successors;
  for (auto& [k, c] : m.counts)
    if (k.first != k.second) successors[k.first].emplace_back(k.second, c);
  bool present = false;
  for (auto& [k, c] : m.counts) present = present || k.first == anchor || k.second == anchor;
  if (!present) fail(ErrorCode::InvalidArgument, "anchor concept " + to_string(anchor) + " is absent from the matrix");

  std::map<ConceptKey, double> rows, cols;
  if (metric == NetworkMetric::Pmi3) {
    rows = m.row_marginals();
    cols = m.column_marginals();
  }
  auto weight = [&](ConceptKey a, ConceptKey b, std::uint64_t c) {
    const double p = double(c) / double(m.total);
    if (metric == NetworkMetric::Prevalence) return p;
    return std::log(p * p * p / (rows.at(a) * cols.at(b)));
  };

  ConceptNetwork net;
  net.anchor = anchor;
  net.metric = metric;
  net.nodes.push_back(anchor);
  std::set<ConceptKey> seen{anchor};
  std::vector<ConceptKey> frontier{anchor};
  for (std::size_t level = 0; level < depth && !frontier.empty(); ++level) {
    std::vector<ConceptKey> next;
    for (auto from : frontier) {
      auto it = successors.find(from);
      if (it == successors.end()) continue;
      std::vector<NetworkEdge> cand;
      for (auto& [to, c] : it->second) {
        if (restrict_domain && to.domain() != *restrict_domain) continue;
        cand.push_back({from, to, weight(from, to, c), false});
      }
      std::stable_sort(cand.begin(), cand.end(),
                       [](const NetworkEdge& x, const NetworkEdge& y) { return x.weight > y.weight; });
      if (cand.size() > branching) cand.resize(branching);
      for (auto& e : cand) {
        net.edges.push_back(e);
        if (seen.insert(e.to).second) {
          net.nodes.push_back(e.to);
          next.push_back(e.to);
        }
      }
    }
    frontier = std::move(next);
  }
  return net;
}

NetworkComparison compare_networks(ConceptNetwork& a, ConceptNetwork& b) {
  std::set<ConceptPair> ea, eb;
  for (auto& e : a.edges) ea.insert({e.from, e.to});
  for (auto& e : b.edges) eb.insert({e.from, e.to});
  NetworkComparison r;
  for (auto& e : a.edges) e.shared = eb.count({e.from, e.to}) > 0;
  for (auto& e : b.edges) e.shared = ea.count({e.from, e.to}) > 0;
  for (auto& p : ea) r.shared += eb.count(p);
  r.edges_a = ea.size();
  r.edges_b = eb.size();
  r.shared_fraction = ea.empty() ? 0.0 : double(r.shared) / double(ea.size());
  return r;
}

void write_dot(const ConceptNetwork& net, const std::filesystem::path& path,
               const std::unordered_map<ConceptId, std::string>* names) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  auto label = [&](ConceptKey k) {
    std::string s = to_string(k);
    if (names) {
      auto it = names->find(k.id());
      if (it != names->end()) s += "\\n" + it->second;
    }
    std::string esc;
    for (char ch : s) {
      if (ch == '"') esc += '\\';
      esc += ch;
    }
    return esc;
  };
  out << "digraph concepts {\n";
  for (auto n : net.nodes) {
    out << "  \"" << to_string(n) << "\" [label=\"" << label(n) << '"';
    if (n == net.anchor) out << ", shape=box";
    out << "];\n";
  }
  for (auto& e : net.edges) {
    out << "  \"" << to_string(e.from) << "\" -> \"" << to_string(e.to) << "\" [weight=" << e.weight;
    if (e.shared) out << ", color=gold, penwidth=2";
    out << "];\n";
  }
  out << "}\n";
}

void write_edge_csv(const ConceptNetwork& net, const std::filesystem::path& path) {
  csv::Writer w(path);
  w.row({"from", "to", "weight", "shared"});
  for (auto& e : net.edges) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", e.weight);
    w.row({to_string(e.from), to_string(e.to), buf, e.shared ? "1" : "0"});
  }
}

}  // namespace cehr::utility
