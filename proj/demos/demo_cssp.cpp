// Picks columns from a synthetic low-rank matrix and compares the result
// against uniform sampling and greedy selection.

#include <cstdio>
#include <random>

#include "landmark/baselines.hpp"
#include "landmark/eval.hpp"
#include "landmark/optimizer.hpp"

using namespace landmark;

namespace {

Matrix make_data(Index rows, Index cols, Index rank, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  Matrix u(rows, rank), v(cols, rank), noise(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < rank; ++j) u(i, j) = normal(gen);
  for (Index i = 0; i < cols; ++i)
    for (Index j = 0; j < rank; ++j) v(i, j) = normal(gen);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) noise(i, j) = normal(gen);
  return u * v.transpose() + 0.1 * noise;
}

double masked_error(const Matrix& x, const std::vector<int>& mask) {
  return cssp_error(x, mask);
}

}  // namespace

int main() {
  const Index k = 8;
  Matrix x = make_data(120, 40, 8, 7);
  GramOperator op(x);

  OptimizerConfig cfg;
  cfg.hp.mc_size = 5;
  cfg.max_iters = 400;
  cfg.seed = 1;

  LambdaSearchResult sr = search_lambda(k, Objective::Cssp, op, cfg);
  std::vector<int> continuous = sr.result.s;

  std::vector<int> uniform = uniform_select(x.cols(), k, 1);
  std::vector<int> greedy = greedy_select(x, k, GreedyObjective::Cssp).mask;

  const double best = best_rank_k_error(x, k, ErrorNorm::FrobeniusSq);
  std::printf("columns: %ld of %ld (lambda %.4g, %ld optimizer runs)\n",
              static_cast<long>(k), static_cast<long>(x.cols()), sr.lambda,
              static_cast<long>(sr.runs));
  std::printf("  best rank-%ld  %10.4f\n", static_cast<long>(k), best);
  std::printf("  continuous   %10.4f\n", masked_error(x, continuous));
  std::printf("  greedy       %10.4f\n", masked_error(x, greedy));
  std::printf("  uniform      %10.4f\n", masked_error(x, uniform));
  std::printf("selected:");
  for (Index j : mask_to_indices(continuous))
    std::printf(" %ld", static_cast<long>(j));
  std::printf("\n");
  return 0;
}
