#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <vector>

#include "landmark/linop.hpp"
#include "landmark/rng.hpp"

namespace landmark {

/// Uniform k-subset without replacement, reproducible by seed (partial
/// Fisher-Yates over the index array).
inline std::vector<int> uniform_select(Index n, Index k, std::uint64_t seed) {
  require(n >= 1 && k >= 0 && k <= n, "uniform_select: need 0 <= k <= n");
  std::vector<Index> pool(n);
  for (Index i = 0; i < n; ++i) pool[i] = i;
  CounterRng rng(derive_seed(seed, 0x756e6966ULL));
  std::vector<int> mask(n, 0);
  for (Index i = 0; i < k; ++i) {
    const Index j =
        i + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
    mask[pool[i]] = 1;
  }
  return mask;
}

enum class GreedyObjective { Cssp, NystromTrace };

struct GreedyResult {
  std::vector<int> mask;
  std::vector<Index> order;  // selection order
  bool early_stop = false;   // residual exhausted before k columns
};

/// Forward greedy selection minimizing ||X - P_s X||_F^2, equivalently the
/// trace-norm Nystrom error on G = X^T X.  Works on the Gram/kernel matrix:
/// each round picks argmax_j ||G_:,j||^2 / G_jj on the residual Gram and
/// deflates the rank-one piece (Schur complement update).  Ties go to the
/// lowest index.  Cost O(n^2 k) on top of forming G.
inline GreedyResult greedy_select_gram(Matrix g, Index k) {
  const Index n = g.rows();
  require(g.cols() == n, "greedy: Gram matrix not square");
  require(k >= 0 && k <= n, "greedy: need 0 <= k <= n");

  GreedyResult res;
  res.mask.assign(n, 0);
  const double floor = 1e-12 * std::max(g.diagonal().maxCoeff(), 0.0);

  for (Index round = 0; round < k; ++round) {
    Index best = -1;
    double best_score = 0.0;
    for (Index j = 0; j < n; ++j) {
      if (res.mask[j] || g(j, j) <= floor) continue;
      const double score = g.col(j).squaredNorm() / g(j, j);
      if (best < 0 || score > best_score) {
        best = j;
        best_score = score;
      }
    }
    if (best < 0) {  // residual numerically zero: nothing left to gain
      res.early_stop = true;
      break;
    }
    res.mask[best] = 1;
    res.order.push_back(best);
    Vector col = g.col(best);
    g.noalias() -= (col / g(best, best)) * col.transpose();
  }
  return res;
}

/// obj = Cssp: a is the data matrix X (m x n), selection runs on G = X^T X.
/// obj = NystromTrace: a is the PSD kernel matrix itself.
inline GreedyResult greedy_select(const Matrix& a, Index k,
                                  GreedyObjective obj) {
  if (obj == GreedyObjective::Cssp)
    return greedy_select_gram(a.transpose() * a, k);
  return greedy_select_gram(a, k);
}

}  // namespace landmark
