#include <cmath>
#include <limits>
#include <thread>

#include "cehr/error.hpp"
#include "cehr/privacy.hpp"

namespace cehr::privacy {

namespace {

constexpr std::size_t kNone = static_cast<std::size_t>(-1);

void check_shapes(const Matrix& query, const Matrix& search, bool exclude_self) {
  if (search.rows == 0) fail(ErrorCode::InvalidArgument, "nearest-neighbour search set is empty");
  if (query.cols != search.cols) fail(ErrorCode::InvalidArgument, "query and search dimensions differ");
  if (exclude_self && search.rows < 2) fail(ErrorCode::InvalidArgument, "no candidate left after excluding self");
}

Neighbor finish(std::size_t i, std::size_t best_j, double best) {
  if (best_j == kNone) fail(ErrorCode::InvalidArgument, "query " + std::to_string(i) + " has no candidate");
  return {best_j, std::sqrt(best)};
}

}  // namespace

std::vector<Neighbor> nearest_neighbor(const Matrix& query, const Matrix& search, bool exclude_self,
                                       unsigned threads) {
  check_shapes(query, search, exclude_self);
  std::vector<Neighbor> out(query.rows);
  const std::size_t dim = query.cols;

  auto run = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* q = query.data.data() + i * dim;
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_j = kNone;
      for (std::size_t j = 0; j < search.rows; ++j) {
        if (exclude_self && j == i) continue;
        const double* s = search.data.data() + j * dim;
        // Partial sums only grow, so a prefix at or above `best` cannot win.
        double d = 0.0;
        std::size_t k = 0;
        for (; k < dim; ++k) {
          const double diff = q[k] - s[k];
          d += diff * diff;
          if ((k & 15) == 15 && d >= best) break;
        }
        if (k == dim && d < best) {
          best = d;
          best_j = j;
        }
      }
      out[i] = finish(i, best_j, best);
    }
  };

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, query.rows))));
  if (threads == 1) {
    run(0, query.rows);
  } else {
    std::vector<std::jthread> workers;
    const std::size_t chunk = (query.rows + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t)
      workers.emplace_back(run, std::min(query.rows, t * chunk), std::min(query.rows, (t + 1) * chunk));
  }
  return out;
}

std::vector<Neighbor> nearest_neighbor_brute_force(const Matrix& query, const Matrix& search, bool exclude_self) {
  check_shapes(query, search, exclude_self);
  std::vector<Neighbor> out;
  for (std::size_t i = 0; i < query.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = kNone;
    for (std::size_t j = 0; j < search.rows; ++j) {
      if (exclude_self && i == j) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < query.cols; ++k) {
        const double diff = query.row(i)[k] - search.row(j)[k];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    out.push_back(finish(i, best_j, best));
  }
  return out;
}

}  // namespace cehr::privacy
