#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "cehr/error.hpp"
#include "cehr/generator.hpp"
#include "cehr/predictive.hpp"

namespace cehr::predictive {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double linear(const BowFeatures& x, std::size_t row, std::span<const double> w, double b) {
  double z = b;
  for (std::size_t k = x.row_ptr[row]; k < x.row_ptr[row + 1]; ++k) z += w[x.col[k]] * x.value[k];
  return z;
}

}  // namespace

double LogisticModel::score(const BowFeatures& x, std::size_t row) const {
  return 1.0 / (1.0 + std::exp(-linear(x, row, weights, intercept)));
}

double logistic_loss(const BowFeatures& x, std::span<const std::size_t> rows, std::span<const double> params,
                     double lambda, std::vector<double>* grad) {
  const std::size_t d = x.cols();
  if (params.size() != d + 1) fail(ErrorCode::InvalidArgument, "parameter vector has the wrong length");
  const auto w = params.first(d);
  const double b = params[d];
  if (grad) grad->assign(d + 1, 0.0);

  double loss = 0.0;
  for (auto r : rows) {
    const double z = linear(x, r, w, b);
    const int y = x.labels[r];
    // log(1 + e^z) - y z, stable for either sign of z
    loss += std::log1p(std::exp(-std::abs(z))) + std::max(z, 0.0) - y * z;
    if (grad) {
      const double g = (z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z))) - y;
      for (std::size_t k = x.row_ptr[r]; k < x.row_ptr[r + 1]; ++k) (*grad)[x.col[k]] += g * x.value[k];
      (*grad)[d] += g;
    }
  }
  loss += 0.5 * lambda * dot(w, w);
  if (grad)
    for (std::size_t j = 0; j < d; ++j) (*grad)[j] += lambda * w[j];
  return loss;
}

LogisticModel fit_logistic(const BowFeatures& x, std::span<const std::size_t> rows, const SolverOptions& opt) {
  const std::size_t n = x.cols() + 1;
  std::vector<double> p(n, 0.0), g, p_next, g_next, dir(n);
  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y)

  LogisticModel m;
  m.lambda = opt.lambda;
  double f = logistic_loss(x, rows, p, opt.lambda, &g);
  m.loss_history.push_back(f);

  while (m.iterations < opt.max_iterations) {
    m.gradient_norm = inf_norm(g);
    if (m.gradient_norm <= opt.tolerance) {
      m.converged = true;
      break;
    }
    // two-loop recursion
    for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
    std::vector<double> alpha(memory.size());
    for (std::size_t k = memory.size(); k-- > 0;) {
      const auto& [s, y] = memory[k];
      alpha[k] = dot(s, dir) / dot(y, s);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * y[i];
    }
    double step = 1.0;
    if (!memory.empty()) {
      const auto& [s, y] = memory.back();
      const double gamma = dot(s, y) / dot(y, y);
      for (auto& v : dir) v *= gamma;
    } else {
      step = 1.0 / std::max(1.0, inf_norm(g));
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const auto& [s, y] = memory[k];
      const double beta = dot(y, dir) / dot(y, s);
      for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[k] - beta) * s[i];
    }
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = dot(g, dir);
      step = 1.0 / std::max(1.0, inf_norm(g));
    }

    // Armijo backtracking keeps every accepted loss at or below the previous one.
    double f_next = f;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries, step *= 0.5) {
      p_next = p;
      for (std::size_t i = 0; i < n; ++i) p_next[i] += step * dir[i];
      f_next = logistic_loss(x, rows, p_next, opt.lambda, &g_next);
      if (f_next <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = p_next[i] - p[i];
      y[i] = g_next[i] - g[i];
    }
    if (dot(s, y) > 1e-12 * dot(y, y)) {
      memory.emplace_back(std::move(s), std::move(y));
      if (memory.size() > opt.memory) memory.pop_front();
    }
    p.swap(p_next);
    g.swap(g_next);
    f = f_next;
    ++m.iterations;
    m.loss_history.push_back(f);
  }
  m.gradient_norm = inf_norm(g);
  m.converged = m.converged || m.gradient_norm <= opt.tolerance;
  m.weights.assign(p.begin(), p.end() - 1);
  m.intercept = p.back();
  return m;
}

TrainResult train_logistic(const BowFeatures& x, std::uint64_t split_seed, double train_fraction,
                           const SolverOptions& opt) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail(ErrorCode::InvalidArgument, "train fraction must be in (0, 1)");
  const std::size_t n = x.rows();
  if (n < 2) fail(ErrorCode::NotAvailable, "cohort too small to split");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  gen::Rng rng(split_seed, 0);
  gen::shuffle(std::span(order), rng);
  const std::size_t n_train = std::clamp<std::size_t>(std::size_t(std::llround(train_fraction * double(n))), 1, n - 1);

  TrainResult r;
  r.train_rows.assign(order.begin(), order.begin() + n_train);
  r.test_rows.assign(order.begin() + n_train, order.end());
  std::sort(r.train_rows.begin(), r.train_rows.end());
  std::sort(r.test_rows.begin(), r.test_rows.end());
  std::size_t pos = 0;
  for (auto i : r.train_rows) pos += x.labels[i] == 1;
  if (pos == 0 || pos == r.train_rows.size())
    fail(ErrorCode::NotAvailable, "training split contains a single class");

  r.model = fit_logistic(x, r.train_rows, opt);
  for (auto i : r.test_rows) {
    r.test_labels.push_back(x.labels[i]);
    r.test_scores.push_back(r.model.score(x, i));
  }
  return r;
}

}  // namespace cehr::predictive
