#include <algorithm>
#include <cmath>
#include <numeric>

#include "cehr/error.hpp"
#include "cehr/predictive.hpp"

namespace cehr::predictive {

namespace {

void check_inputs(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) fail(ErrorCode::InvalidArgument, "labels and scores differ in length");
  for (double s : scores)
    if (std::isnan(s)) fail(ErrorCode::InvalidArgument, "score is NaN");
  for (int l : labels)
    if (l != 0 && l != 1) fail(ErrorCode::InvalidArgument, "labels must be 0 or 1");
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return idx;
}

}  // namespace

std::optional<double> roc_auc(std::span<const int> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  const auto idx = order_by_score(scores, false);
  double u = 0.0, neg_below = 0.0, pos_total = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    double pos = 0.0, neg = 0.0;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) (labels[idx[j++]] ? pos : neg) += 1.0;
    u += pos * neg_below + 0.5 * pos * neg;
    neg_below += neg;
    pos_total += pos;
    i = j;
  }
  if (pos_total == 0.0 || neg_below == 0.0) return std::nullopt;
  return u / (pos_total * neg_below);
}

std::optional<double> pr_auc(std::span<const int> labels, std::span<const double> scores) {
  check_inputs(labels, scores);
  const double positives = double(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0) return std::nullopt;
  const auto idx = order_by_score(scores, true);
  double tp = 0.0, fp = 0.0, recall_prev = 0.0, ap = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) (labels[idx[j++]] ? tp : fp) += 1.0;
    const double recall = tp / positives;
    ap += (recall - recall_prev) * (tp / (tp + fp));
    recall_prev = recall;
    i = j;
  }
  return ap;
}

Distance consolidated_distance(const CohortMetrics& real, const CohortMetrics& synthetic) {
  if (!real.prevalence || !real.roc_auc || !real.pr_auc)
    return {std::nullopt, "real metrics unavailable" + (real.reason.empty() ? "" : ": " + real.reason)};
  if (*real.prevalence == 0.0 || *real.roc_auc == 0.0 || *real.pr_auc == 0.0)
    fail(ErrorCode::InvalidArgument, "real metric is zero; relative distance undefined");
  if (!synthetic.prevalence || !synthetic.roc_auc || !synthetic.pr_auc)
    return {std::nullopt,
            "synthetic metrics unavailable" + (synthetic.reason.empty() ? "" : ": " + synthetic.reason)};
  const double d = std::abs(*synthetic.prevalence - *real.prevalence) * 0.5 / *real.prevalence +
                   std::abs(*synthetic.roc_auc - *real.roc_auc) * 0.25 / *real.roc_auc +
                   std::abs(*synthetic.pr_auc - *real.pr_auc) * 0.25 / *real.pr_auc;
  return {d, ""};
}

CohortEvaluation evaluate_cohort(std::span<const omop::PatientHistory> corpus, const CohortDefinition& def,
                                 const AncestorMap* ancestors, std::uint64_t seed, const SolverOptions& opt,
                                 unsigned threads) {
  CohortEvaluation ev;
  ev.cohort = def.name;
  const auto samples = build_cohort(corpus, def, threads);
  ev.metrics.size = samples.size();
  if (samples.empty()) {
    ev.metrics.reason = "no patients identified";
    return ev;
  }
  for (auto& s : samples) ev.positives += s.label;
  ev.metrics.prevalence = double(ev.positives) / double(samples.size());
  if (ev.positives == 0 || ev.positives == samples.size()) {
    ev.metrics.reason = "prevalence is 0% or 100%";
    return ev;
  }
  const auto x = bow_features(corpus, samples, ancestors);
  ev.features = x.cols();
  try {
    const auto r = train_logistic(x, seed, 0.85, opt);
    ev.converged = r.model.converged;
    ev.metrics.roc_auc = roc_auc(r.test_labels, r.test_scores);
    ev.metrics.pr_auc = pr_auc(r.test_labels, r.test_scores);
    if (!ev.metrics.roc_auc) ev.metrics.reason = "test split contains a single class";
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotAvailable) throw;
    ev.metrics.reason = e.what();
  }
  return ev;
}

nlohmann::json to_json(const CohortMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j{{"size", m.size}, {"prevalence", opt(m.prevalence)}, {"roc_auc", opt(m.roc_auc)},
                   {"pr_auc", opt(m.pr_auc)}};
  if (!m.reason.empty()) j["reason"] = m.reason;
  return j;
}

}  // namespace cehr::predictive
