#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "landmark/linop.hpp"

namespace landmark {

/// L_t = T Z T + delta I = T K T + delta (I - T^2) with Z = K - delta I.
/// Symmetric positive definite for t in [0,1)^n and delta > 0.  One K-apply
/// per operator application.
class LtOperator {
 public:
  LtOperator(const SymmetricOperator& k, Vector t, double delta)
      : k_(&k), t_(std::move(t)), delta_(delta) {
    require(t_.size() == k.dim(), "lt operator: t dimension mismatch");
    require(delta_ > 0.0, "lt operator: delta must be positive");
    require((t_.array() >= 0.0).all() && (t_.array() < 1.0).all(),
            "lt operator: t outside [0,1)");
    t_sq_ = t_.cwiseProduct(t_);
  }

  Index dim() const { return t_.size(); }
  const SymmetricOperator& base() const { return *k_; }
  const Vector& t() const { return t_; }
  double delta() const { return delta_; }

  // v |-> t.(K(t.v)) - delta t^2.v + delta v
  Vector apply(const Vector& v) const {
    require(v.size() == dim(), "lt operator: vector dimension mismatch");
    Vector kv = k_->apply(t_.cwiseProduct(v));
    return t_.cwiseProduct(kv) - delta_ * t_sq_.cwiseProduct(v) + delta_ * v;
  }

 private:
  const SymmetricOperator* k_;
  Vector t_;
  double delta_;
  Vector t_sq_;
};

inline Vector lt_apply(const LtOperator& op, const Vector& v) {
  return op.apply(v);
}

inline Vector lt_apply(const SymmetricOperator& k, const Vector& t, double delta,
                       const Vector& v) {
  return LtOperator(k, t, delta).apply(v);
}

struct CgConfig {
  double rel_tolerance = 1e-8;  // on ||residual|| / ||rhs||
  Index max_iters = 0;          // 0: min(10n, 1000)
  double abs_floor = 1e-14;     // stop when ||residual|| falls below this outright
};

struct SolveReport {
  Index iterations = 0;
  double final_relative_residual = 0.0;
  bool converged = false;
};

namespace detail {

inline Index cg_iter_cap(const CgConfig& cfg, Index n) {
  return cfg.max_iters > 0 ? cfg.max_iters : std::min<Index>(10 * n, 1000);
}

}  // namespace detail

/// Preconditioner-free conjugate gradient on an SPD operator.  x carries the
/// warm start on entry and the solution on exit.  rhs = 0 short-circuits to
/// x = 0 with zero iterations.  Non-convergence is reported, not thrown.
template <typename Op>
SolveReport cg_solve(const Op& a, const Vector& b, Vector& x,
                     const CgConfig& cfg = {}) {
  const Index n = b.size();
  SolveReport report;

  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    x = Vector::Zero(n);
    report.converged = true;
    return report;
  }

  if (x.size() != n) x = Vector::Zero(n);
  const double stop = std::max(cfg.rel_tolerance * b_norm, cfg.abs_floor);

  Vector r = b - a.apply(x);
  double r_dot = r.squaredNorm();
  Vector p = r;
  const Index cap = detail::cg_iter_cap(cfg, n);
  while (std::sqrt(r_dot) > stop && report.iterations < cap) {
    Vector ap = a.apply(p);
    const double p_ap = p.dot(ap);
    if (p_ap <= 0.0) break;  // direction of nonpositive curvature; bail out
    const double alpha = r_dot / p_ap;
    x += alpha * p;
    r -= alpha * ap;
    const double r_dot_next = r.squaredNorm();
    p = r + (r_dot_next / r_dot) * p;
    r_dot = r_dot_next;
    ++report.iterations;
  }

  const double res = (b - a.apply(x)).norm();
  report.final_relative_residual = res / b_norm;
  report.converged =
      report.final_relative_residual <= cfg.rel_tolerance || res <= cfg.abs_floor;
  return report;
}

template <typename Op>
std::pair<Vector, SolveReport> cg_solve(const Op& a, const Vector& b,
                                        const CgConfig& cfg = {}) {
  Vector x;
  SolveReport report = cg_solve(a, b, x, cfg);
  return {std::move(x), report};
}

inline Matrix assemble_lt_dense(const Matrix& k_dense, const Vector& t,
                                double delta) {
  Matrix lt = t.asDiagonal() * k_dense * t.asDiagonal();
  lt.diagonal().array() += delta * (1.0 - t.array().square());
  return lt;
}

/// Dense LDLT reference solve of L_t x = rhs.  Small problems only; the guard
/// keeps it from running at operator scale by accident.
inline Vector dense_solve_oracle(const SymmetricOperator& k, const Vector& t,
                                 double delta, const Vector& rhs,
                                 Index guard = 2048) {
  const Index n = k.dim();
  require(n <= guard, "dense solve oracle: dimension exceeds guard");
  require(rhs.size() == n, "dense solve oracle: rhs dimension mismatch");
  Matrix lt = assemble_lt_dense(materialize(k, guard), t, delta);
  Eigen::LDLT<Matrix> ldlt(lt);
  Vector x = ldlt.solve(rhs);
  const double scale = lt.norm() * x.norm() + rhs.norm();
  if (!((lt * x - rhs).norm() <= 1e-8 * scale))
    throw std::runtime_error("dense solve oracle: system singular to working precision");
  return x;
}

inline Vector dense_solve_oracle(const LtOperator& op, const Vector& rhs,
                                 Index guard = 2048) {
  return dense_solve_oracle(op.base(), op.t(), op.delta(), rhs, guard);
}

/// Support reduction for the solves inside the stochastic estimators.  With
/// S = {j : t_j != 0}, the solution of L_t q = t.r vanishes off S and its
/// S-block solves the reduced system (L_t)_S y = (t)_S . (r)_S where
/// (L_t)_S = (T)_S (K)_{S,S} (T)_S + delta (I - (T)_S^2).  Only the linear
/// solves shrink; full-dimension K-applies elsewhere are unaffected.
class SupportSystem {
 public:
  SupportSystem(const SymmetricOperator& k, const Vector& t, double delta)
      : n_(k.dim()) {
    require(t.size() == n_, "support system: t dimension mismatch");
    for (Index j = 0; j < n_; ++j)
      if (t[j] != 0.0) support_.push_back(j);
    t_s_.resize(static_cast<Index>(support_.size()));
    for (Index i = 0; i < t_s_.size(); ++i) t_s_[i] = t[support_[i]];
    if (all()) {
      lt_ = std::make_unique<LtOperator>(k, t, delta);
    } else if (reduced_dim() > 0) {
      k_s_ = k.restricted(support_);
      lt_ = std::make_unique<LtOperator>(*k_s_, t_s_, delta);
    }
  }

  Index full_dim() const { return n_; }
  Index reduced_dim() const { return static_cast<Index>(support_.size()); }
  bool all() const { return reduced_dim() == n_; }
  bool empty() const { return support_.empty(); }
  const std::vector<Index>& support() const { return support_; }
  const Vector& t_reduced() const { return t_s_; }
  const LtOperator& lt() const { return *lt_; }

  // K restricted to the support; null when no reduction happened.
  const SymmetricOperator* restricted_operator() const { return k_s_.get(); }

  Vector restrict_vec(const Vector& v) const {
    require(v.size() == n_, "support system: restrict dimension mismatch");
    Vector out(reduced_dim());
    for (Index i = 0; i < out.size(); ++i) out[i] = v[support_[i]];
    return out;
  }

  Vector embed(const Vector& v) const {
    require(v.size() == reduced_dim(), "support system: embed dimension mismatch");
    Vector out = Vector::Zero(n_);
    for (Index i = 0; i < v.size(); ++i) out[support_[i]] = v[i];
    return out;
  }

  /// Solve L_t q = t.r in the reduced coordinates and re-embed.  warm holds
  /// the reduced warm start and is updated in place; callers keep one per
  /// probe slot.
  Vector solve_t_weighted(const Vector& r, Vector& warm, const CgConfig& cfg,
                          SolveReport* report = nullptr) const {
    if (empty()) {
      if (report) *report = SolveReport{0, 0.0, true};
      return Vector::Zero(n_);
    }
    Vector rhs = restrict_vec(r).cwiseProduct(t_s_);
    SolveReport rep = cg_solve(*lt_, rhs, warm, cfg);
    if (report) *report = rep;
    return all() ? warm : embed(warm);
  }

 private:
  Index n_;
  std::vector<Index> support_;
  Vector t_s_;
  std::unique_ptr<SymmetricOperator> k_s_;
  std::unique_ptr<LtOperator> lt_;
};

inline std::unique_ptr<SupportSystem> reduce_support(const SymmetricOperator& k,
                                                     const Vector& t,
                                                     double delta) {
  return std::make_unique<SupportSystem>(k, t, delta);
}

}  // namespace landmark
