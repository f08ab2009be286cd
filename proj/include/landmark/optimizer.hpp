#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "landmark/cssp.hpp"
#include "landmark/linop.hpp"
#include "landmark/nystrom.hpp"
#include "landmark/solver.hpp"

namespace landmark {

enum class Objective { Cssp, NystromFrobenius, NystromTrace };

enum class StepKind { Adam, Constant };

enum class GradientMode { Stochastic, ExactDense };

struct OptimizerConfig {
  StepKind step_kind = StepKind::Adam;
  double base_rate = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_stabilizer = 1e-8;

  Index max_iters = 2000;
  double stall_tol = 1e-4;  // termination: max_j |dt_j| below this ...
  Index stall_window = 20;  // ... for this many consecutive iterations

  double epsilon = 1e-3;  // truncate t_j < epsilon to 0 and freeze
  double tau = 0.5;       // threshold t* into the binary mask

  HyperParams hp;
  CgConfig cg;
  std::uint64_t seed = 0;
  bool warm_start = true;
  Index trajectory_stride = 10;  // 0 disables snapshots
  GradientMode gradient_mode = GradientMode::Stochastic;

  // Rescale the operator to unit mean diagonal before optimizing, so the
  // delta and lambda defaults mean the same thing at every data scale.  The
  // selection itself is invariant; loss diagnostics refer to the rescaled
  // objective.
  bool normalize_scale = true;

  void validate() const {
    hp.validate();
    require(base_rate > 0.0, "optimizer: base rate must be positive");
    require(max_iters >= 1, "optimizer: max_iters must be at least 1");
    require(stall_window >= 1, "optimizer: stall window must be at least 1");
    require(epsilon >= 0.0 && tau > epsilon && tau <= 1.0,
            "optimizer: need 0 <= epsilon < tau <= 1");
  }
};

struct TruncationEvent {
  Index iteration;
  Index coordinate;
};

enum class Termination { Stall, MaxIters, AllFrozen };

struct SelectionResult {
  std::vector<int> s;  // binary mask, s_j = 1 iff t_final_j > tau
  Vector t_final;
  Vector w_final;
  std::vector<std::pair<Index, Vector>> trajectory;  // (iteration, t)
  std::vector<TruncationEvent> truncations;
  std::vector<double> loss_estimates;  // one per iteration
  std::vector<Index> cg_iterations;    // one per iteration
  Index iterations = 0;
  Termination termination = Termination::MaxIters;
  bool cg_warnings = false;

  std::vector<Index> selected() const {
    std::vector<Index> idx;
    for (Index j = 0; j < static_cast<Index>(s.size()); ++j)
      if (s[j]) idx.push_back(j);
    return idx;
  }

  Index count() const {
    Index c = 0;
    for (int v : s) c += v;
    return c;
  }
};

// Thrown on a non-finite iterate; carries the trajectory so callers can dump it.
struct OptimizerFailure : std::runtime_error {
  std::vector<std::pair<Index, Vector>> trajectory;

  OptimizerFailure(const std::string& msg,
                   std::vector<std::pair<Index, Vector>> traj)
      : std::runtime_error(msg), trajectory(std::move(traj)) {}
};

// t(w) = 1 - exp(-w . w), mapping all of R^n onto [0,1)^n.
inline Vector map_w_to_t(const Vector& w) {
  require(w.allFinite(), "map_w_to_t: non-finite w");
  return 1.0 - (-w.array().square()).exp();
}

// df/dw = df/dt . (2 w . exp(-w . w)); exactly zero wherever w is zero.
inline Vector chain_rule(const Vector& grad_t, const Vector& w) {
  require(grad_t.size() == w.size(), "chain_rule: dimension mismatch");
  return grad_t.array() * (2.0 * w.array() * (-w.array().square()).exp());
}

namespace detail {

inline constexpr double kCornerClamp = 1e-9;  // keep t strictly below 1

inline Vector exact_dense_gradient(Objective obj, const Matrix& k_dense,
                                   const Vector& t, const HyperParams& hp) {
  // Frozen coordinates break the interior precondition, so evaluate on the
  // support block and re-embed; off-support entries only meet a zero chain
  // factor anyway.
  std::vector<Index> support;
  for (Index j = 0; j < t.size(); ++j)
    if (t[j] != 0.0) support.push_back(j);
  const Index ns = static_cast<Index>(support.size());
  Matrix ks(ns, ns);
  Vector ts(ns);
  for (Index j = 0; j < ns; ++j) {
    ts[j] = t[support[j]];
    for (Index i = 0; i < ns; ++i) ks(i, j) = k_dense(support[i], support[j]);
  }
  Vector gs = (obj == Objective::NystromFrobenius)
                  ? grad_g_exact(ks, ts, hp.delta, hp.lambda)
                  : grad_f_exact(ks, ts, hp.delta, hp.lambda);
  Vector grad = Vector::Constant(t.size(), hp.lambda);
  for (Index j = 0; j < ns; ++j) grad[support[j]] = gs[j];
  return grad;
}

}  // namespace detail

/// Algorithm: start at t = 1/2 (w = sqrt(ln 2)), iterate
///   map w -> t, truncate t_j < epsilon to 0 and freeze the coordinate,
///   estimate the gradient on the support, chain-rule into w, step,
/// until the t-movement stalls or the iteration cap hits, then threshold
/// t* at tau into the mask s.
inline SelectionResult run_selection(Objective obj, const SymmetricOperator& op,
                                     const OptimizerConfig& cfg) {
  cfg.validate();
  const Index n = op.dim();
  const double w0 = std::sqrt(std::log(2.0));  // t = 1/2

  double scale = 1.0;
  if (cfg.normalize_scale) {
    const double mean_diag = op.diagonal().mean();
    if (std::isfinite(mean_diag) && mean_diag > 0.0) scale = mean_diag;
  }
  ScaledOperator scaled_view(op, 1.0 / scale);
  const SymmetricOperator& kop =
      scale == 1.0 ? op : static_cast<const SymmetricOperator&>(scaled_view);

  SelectionResult res;
  Vector w = Vector::Constant(n, w0);
  std::vector<char> frozen(n, 0);
  Vector m1 = Vector::Zero(n);
  Vector m2 = Vector::Zero(n);
  EstimatorScratch scratch;
  Matrix k_dense;
  if (cfg.gradient_mode == GradientMode::ExactDense)
    k_dense = materialize(kop, kDenseGuard);

  auto map_current = [&](Vector& t) {
    t = map_w_to_t(w);
    for (Index j = 0; j < n; ++j) {
      if (frozen[j])
        t[j] = 0.0;
      else if (t[j] > 1.0 - detail::kCornerClamp)
        t[j] = 1.0 - detail::kCornerClamp;
    }
  };

  auto snapshot = [&](Index iter, const Vector& t) {
    if (cfg.trajectory_stride > 0 && iter % cfg.trajectory_stride == 0)
      res.trajectory.emplace_back(iter, t);
  };

  Vector t(n);
  map_current(t);
  Index stall_run = 0;
  res.termination = Termination::MaxIters;

  for (Index iter = 0; iter < cfg.max_iters; ++iter) {
    // truncation pass
    bool any_live = false;
    for (Index j = 0; j < n; ++j) {
      if (frozen[j]) continue;
      if (t[j] < cfg.epsilon) {
        t[j] = 0.0;
        w[j] = 0.0;
        m1[j] = 0.0;
        m2[j] = 0.0;
        frozen[j] = 1;
        res.truncations.push_back({iter, j});
      } else {
        any_live = true;
      }
    }
    snapshot(iter, t);
    if (!any_live) {
      res.termination = Termination::AllFrozen;
      res.iterations = iter;
      break;
    }

    // gradient at t
    Vector grad_t;
    if (cfg.gradient_mode == GradientMode::ExactDense) {
      grad_t = detail::exact_dense_gradient(obj, k_dense, t, cfg.hp);
      res.loss_estimates.push_back(0.0);
      res.cg_iterations.push_back(0);
    } else {
      ProbeStream probes{cfg.seed, static_cast<std::uint64_t>(iter)};
      EstimatorScratch* sc = cfg.warm_start ? &scratch : nullptr;
      GradientEstimate est =
          (obj == Objective::NystromFrobenius)
              ? grad_g_stochastic(kop, t, cfg.hp, cfg.cg, probes, sc)
              : grad_f_stochastic(kop, t, cfg.hp, cfg.cg, probes, sc);
      res.cg_warnings = res.cg_warnings || !est.cg_all_converged;
      res.loss_estimates.push_back(est.loss_estimate);
      res.cg_iterations.push_back(est.cg_iterations);
      grad_t = std::move(est.grad);
    }

    // step in w-space; frozen coordinates are skipped outright
    Vector grad_w = chain_rule(grad_t, w);
    if (cfg.step_kind == StepKind::Adam) {
      const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
      const double corr1 = 1.0 - std::pow(b1, double(iter + 1));
      const double corr2 = 1.0 - std::pow(b2, double(iter + 1));
      for (Index j = 0; j < n; ++j) {
        if (frozen[j]) continue;
        m1[j] = b1 * m1[j] + (1.0 - b1) * grad_w[j];
        m2[j] = b2 * m2[j] + (1.0 - b2) * grad_w[j] * grad_w[j];
        const double step = cfg.base_rate * (m1[j] / corr1) /
                            (std::sqrt(m2[j] / corr2) + cfg.adam_stabilizer);
        w[j] -= step;
      }
    } else {
      for (Index j = 0; j < n; ++j)
        if (!frozen[j]) w[j] -= cfg.base_rate * grad_w[j];
    }
    if (!w.allFinite())
      throw OptimizerFailure(
          "optimizer: non-finite iterate at iteration " + std::to_string(iter),
          std::move(res.trajectory));

    Vector t_next(n);
    map_current(t_next);
    const double movement = (t_next - t).cwiseAbs().maxCoeff();
    stall_run = movement < cfg.stall_tol ? stall_run + 1 : 0;
    t = std::move(t_next);
    res.iterations = iter + 1;
    if (stall_run >= cfg.stall_window) {
      res.termination = Termination::Stall;
      break;
    }
  }

  // final truncation + threshold
  for (Index j = 0; j < n; ++j) {
    if (frozen[j]) continue;
    if (t[j] < cfg.epsilon) {
      t[j] = 0.0;
      w[j] = 0.0;
      frozen[j] = 1;
      res.truncations.push_back({res.iterations, j});
    }
  }
  if (cfg.trajectory_stride > 0 &&
      (res.trajectory.empty() || res.trajectory.back().first != res.iterations))
    res.trajectory.emplace_back(res.iterations, t);

  res.t_final = t;
  res.w_final = w;
  res.s.assign(n, 0);
  for (Index j = 0; j < n; ++j) res.s[j] = t[j] > cfg.tau ? 1 : 0;
  return res;
}

struct LambdaSearchConfig {
  double lambda_lo = 1e-3;
  double lambda_hi = 1e3;
  Index max_runs = 12;
};

struct LambdaSearchResult {
  double lambda = 0.0;
  SelectionResult result;
  Index runs = 0;
  bool budget_exhausted = false;  // best-so-far returned without an exact hit
};

/// Pick exactly k coordinates from a finished run: rank by t*, largest first,
/// ties toward the lower index.  Shrinks an oversized mask and, when the run
/// came up short, tops it up from the best unselected coordinates.
inline void force_exact_k(SelectionResult& res, Index target_k) {
  const Index n = static_cast<Index>(res.s.size());
  require(target_k >= 0 && target_k <= n, "force_exact_k: bad target");
  std::vector<Index> order(n);
  for (Index j = 0; j < n; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return res.t_final[a] > res.t_final[b];
  });
  // currently-selected coordinates first, each group already ranked by t*
  std::stable_partition(order.begin(), order.end(),
                        [&](Index j) { return res.s[j] == 1; });
  res.s.assign(n, 0);
  for (Index r = 0; r < target_k; ++r) res.s[order[r]] = 1;
}

/// Bisection on log(lambda) toward a target subset size, exploiting that
/// ||s||_0 is empirically non-increasing in lambda.  Returns the run closest
/// to target_k (ties toward the smaller size), postprocessed to exactly
/// target_k coordinates.
inline LambdaSearchResult search_lambda(Index target_k, Objective obj,
                                        const SymmetricOperator& op,
                                        OptimizerConfig cfg,
                                        const LambdaSearchConfig& scfg = {}) {
  const Index n = op.dim();
  require(target_k >= 0 && target_k <= n, "search_lambda: target out of range");
  require(scfg.lambda_lo > 0.0 && scfg.lambda_hi >= scfg.lambda_lo,
          "search_lambda: bad lambda bounds");

  LambdaSearchResult out;
  std::map<double, SelectionResult> runs;
  auto run_at = [&](double lambda) -> const SelectionResult& {
    auto it = runs.find(lambda);
    if (it == runs.end()) {
      cfg.hp.lambda = lambda;
      it = runs.emplace(lambda, run_selection(obj, op, cfg)).first;
      ++out.runs;
    }
    return it->second;
  };
  auto better = [&](double cand, double best) {
    const Index ck = runs.at(cand).count(), bk = runs.at(best).count();
    const Index cd = std::abs(ck - target_k), bd = std::abs(bk - target_k);
    return cd < bd || (cd == bd && ck < bk);
  };

  double lo = scfg.lambda_lo, hi = scfg.lambda_hi;
  double best = lo;
  run_at(lo);
  // grow the bracket outward if the endpoints don't straddle the target
  while (out.runs < scfg.max_runs && runs.at(lo).count() < target_k &&
         lo > 1e-12) {
    lo /= 16.0;
    run_at(lo);
    if (better(lo, best)) best = lo;
  }
  if (out.runs < scfg.max_runs) {
    run_at(hi);
    if (better(hi, best)) best = hi;
    while (out.runs < scfg.max_runs && runs.at(hi).count() > target_k &&
           hi < 1e12) {
      hi *= 16.0;
      run_at(hi);
      if (better(hi, best)) best = hi;
    }
  }

  while (out.runs < scfg.max_runs && hi / lo > 1.02 &&
         runs.at(best).count() != target_k) {
    const double mid = std::sqrt(lo * hi);
    run_at(mid);
    if (better(mid, best)) best = mid;
    if (runs.at(mid).count() > target_k)
      lo = mid;
    else
      hi = mid;
  }

  out.lambda = best;
  out.result = runs.at(best);
  out.budget_exhausted = runs.at(best).count() != target_k;
  force_exact_k(out.result, target_k);
  return out;
}

}  // namespace landmark
