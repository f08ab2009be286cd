// Landmark selection for an RBF kernel on clustered 2-D points.

#include <cstdio>
#include <random>

#include "landmark/baselines.hpp"
#include "landmark/eval.hpp"
#include "landmark/optimizer.hpp"

using namespace landmark;

namespace {

Matrix clustered_points(Index per_cluster, Index clusters, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> place(-5.0, 5.0);
  Matrix pts(per_cluster * clusters, 2);
  for (Index c = 0; c < clusters; ++c) {
    const double cx = place(gen), cy = place(gen);
    for (Index i = 0; i < per_cluster; ++i) {
      pts(c * per_cluster + i, 0) = cx + 0.4 * normal(gen);
      pts(c * per_cluster + i, 1) = cy + 0.4 * normal(gen);
    }
  }
  return pts;
}

}  // namespace

int main() {
  const Index k = 6;
  Matrix pts = clustered_points(30, 6, 11);
  RbfKernelOperator op(pts, KernelSpec{1.0});
  Matrix kd = materialize(op);

  OptimizerConfig cfg;
  cfg.hp.mc_size = 5;
  cfg.max_iters = 300;
  cfg.seed = 3;

  LambdaSearchResult sr = search_lambda(k, Objective::NystromFrobenius, op, cfg);

  NystromErrors cont = nystrom_errors(kd, sr.result.s);
  NystromErrors unif = nystrom_errors(kd, uniform_select(pts.rows(), k, 3));
  NystromErrors greedy = nystrom_errors(
      kd, greedy_select(kd, k, GreedyObjective::NystromTrace).mask);

  std::printf("landmarks: %ld of %ld points (lambda %.4g)\n",
              static_cast<long>(k), static_cast<long>(pts.rows()), sr.lambda);
  std::printf("  %-11s %14s %14s\n", "method", "frobenius^2", "trace");
  std::printf("  %-11s %14.4f %14.4f\n", "continuous", cont.frobenius_sq, cont.trace);
  std::printf("  %-11s %14.4f %14.4f\n", "greedy", greedy.frobenius_sq, greedy.trace);
  std::printf("  %-11s %14.4f %14.4f\n", "uniform", unif.frobenius_sq, unif.trace);
  std::printf("selected:");
  for (Index j : mask_to_indices(sr.result.s))
    std::printf(" %ld", static_cast<long>(j));
  std::printf("\n");
  return 0;
}
