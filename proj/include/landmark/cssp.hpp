#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "landmark/linop.hpp"
#include "landmark/solver.hpp"

namespace landmark {

/// Relaxation point t in [0,1]^n; T = Diag(t).  Binary t is a corner point.
struct SelectionWeights {
  Vector t;

  SelectionWeights(Vector values) : t(std::move(values)) {
    require((t.array() >= 0.0).all() && (t.array() <= 1.0).all(),
            "selection weights: entries outside [0,1]");
  }

  Index dim() const { return t.size(); }

  std::vector<Index> support() const {
    std::vector<Index> s;
    for (Index j = 0; j < t.size(); ++j)
      if (t[j] > 0.0) s.push_back(j);
    return s;
  }
};

struct HyperParams {
  double delta = 1.0;
  double lambda = 0.0;
  Index mc_size = 10;  // Monte Carlo probes per gradient estimate

  void validate() const {
    require(delta > 0.0, "hyper params: delta must be positive");
    require(lambda >= 0.0, "hyper params: lambda must be nonnegative");
    require(mc_size >= 1, "hyper params: mc_size must be at least 1");
  }
};

struct GradientEstimate {
  Vector grad;
  Index probes_used = 0;
  bool cg_all_converged = true;
  Index cg_iterations = 0;     // summed over probes and solves
  double loss_estimate = 0.0;  // free Monte Carlo estimate of the objective
  std::vector<Vector> probe_terms;  // per-probe phi/psi when requested
};

inline constexpr Index kDenseGuard = 256;

namespace detail {

// Pseudo-inverse of a symmetric PSD matrix, eigenvalue cutoff 1e-10 * max.
inline Matrix psd_pinv(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  require(eig.info() == Eigen::Success, "psd pinv: eigendecomposition failed");
  const Vector& vals = eig.eigenvalues();
  const double cutoff = 1e-10 * std::max(vals.cwiseAbs().maxCoeff(), 0.0);
  Vector inv = Vector::Zero(vals.size());
  for (Index i = 0; i < vals.size(); ++i)
    if (vals[i] > cutoff && vals[i] > 0.0) inv[i] = 1.0 / vals[i];
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

inline void check_dense_scale(Index n) {
  require(n <= kDenseGuard, "dense path: n exceeds guard (" +
                                std::to_string(kDenseGuard) +
                                "); use the matrix-free path");
}

inline void check_interior(const Vector& t) {
  require((t.array() > 0.0).all() && (t.array() < 1.0).all(),
          "exact gradient: t must be strictly interior to (0,1)^n");
}

// Inner matrix T K T + delta (I - T^2), shared by both relaxations.
inline Matrix inner_matrix(const Matrix& k, const Vector& t, double delta) {
  Matrix m = t.asDiagonal() * k * t.asDiagonal();
  m.diagonal().array() += delta * (1.0 - t.array().square());
  return m;
}

}  // namespace detail

/// P~(t) = X T [T X^T X T + delta (I - T^2)]^+ T X^T.  Interior points make
/// the bracket positive definite so the pseudo-inverse is the plain inverse;
/// at corners the cutoff reproduces the block pseudo-inverse semantics.
inline Matrix projection_tilde_dense(const Matrix& x, const Vector& t,
                                     double delta) {
  detail::check_dense_scale(x.cols());
  require(t.size() == x.cols(), "projection: t dimension mismatch");
  require(delta > 0.0, "projection: delta must be positive");
  Matrix inner = detail::inner_matrix(x.transpose() * x, t, delta);
  Matrix xt = x * t.asDiagonal();
  return xt * detail::psd_pinv(inner) * xt.transpose();
}

// f_lambda(t) = -tr[X^T P~(t) X] + lambda sum_j t_j
inline double f_lambda_dense(const Matrix& x, const Vector& t, double delta,
                             double lambda) {
  Matrix p = projection_tilde_dense(x, t, delta);
  return -(x.transpose() * (p * x)).trace() + lambda * t.sum();
}

/// Exact gradient (interior points only):
/// grad f = 2 Diag[L_t^-1 T K^2 (T L_t^-1 T Z - I)] + lambda 1, Z = K - delta I.
inline Vector grad_f_exact(const Matrix& k_dense, const Vector& t, double delta,
                           double lambda) {
  const Index n = k_dense.rows();
  detail::check_dense_scale(n);
  require(t.size() == n, "grad_f_exact: t dimension mismatch");
  detail::check_interior(t);

  Matrix lt = detail::inner_matrix(k_dense, t, delta);
  Eigen::LDLT<Matrix> ldlt(lt);
  Matrix z = k_dense;
  z.diagonal().array() -= delta;

  Matrix left = ldlt.solve(t.asDiagonal() * k_dense) * k_dense;   // L^-1 T K^2
  Matrix right = t.asDiagonal() * ldlt.solve(t.asDiagonal() * z); // T L^-1 T Z
  right.diagonal().array() -= 1.0;
  Vector diag = left.cwiseProduct(right.transpose()).rowwise().sum();
  return 2.0 * diag + Vector::Constant(n, lambda);
}

namespace detail {

// Full-dimension warm starts, one per probe slot; restricted to the current
// support on entry and re-embedded on exit so they survive support changes.
struct WarmStore {
  std::vector<Vector> slots;

  Vector fetch(Index slot, const SupportSystem& sys) {
    if (slot >= static_cast<Index>(slots.size()) ||
        slots[slot].size() != sys.full_dim())
      return Vector::Zero(sys.reduced_dim());
    return sys.restrict_vec(slots[slot]);
  }

  void stash(Index slot, const SupportSystem& sys, const Vector& reduced) {
    if (slot >= static_cast<Index>(slots.size()))
      slots.resize(slot + 1);
    slots[slot] = sys.embed(reduced);
  }
};

}  // namespace detail

/// Per-estimator scratch: CG warm starts keyed by probe slot.  Pass the same
/// object across SGD iterations to warm-start; pass nullptr for cold,
/// bitwise-reproducible solves.
struct EstimatorScratch {
  detail::WarmStore b;
  detail::WarmStore e;
  void clear() {
    b.slots.clear();
    e.slots.clear();
  }
};

/// Stochastic CSSP gradient (one probe: a = Kz, b = L_t^-1(t.a),
/// phi = b.Z(t.b) - a.b); returns 2 mean(phi) + lambda 1.  Solves run on the
/// support of t only; phi vanishes off the support by construction.
inline GradientEstimate grad_f_stochastic(const SymmetricOperator& k,
                                          const Vector& t, const HyperParams& hp,
                                          const CgConfig& cg,
                                          const ProbeStream& rng,
                                          EstimatorScratch* scratch = nullptr,
                                          bool keep_probe_terms = false) {
  hp.validate();
  const Index n = k.dim();
  require(t.size() == n, "grad_f_stochastic: t dimension mismatch");
  require((t.array() >= 0.0).all() && (t.array() < 1.0).all(),
          "grad_f_stochastic: t outside [0,1)");

  SupportSystem sys(k, t, hp.delta);
  GradientEstimate est;
  if (sys.empty()) {  // all phi vanish; only the penalty term survives
    est.grad = Vector::Constant(n, hp.lambda);
    est.probes_used = hp.mc_size;
    est.loss_estimate = hp.lambda * t.sum();
    if (keep_probe_terms)
      est.probe_terms.assign(static_cast<std::size_t>(hp.mc_size),
                             Vector::Zero(n));
    return est;
  }
  const SymmetricOperator& k_s =
      sys.restricted_operator() ? *sys.restricted_operator() : k;
  const Vector& t_s = sys.t_reduced();

  est.grad = Vector::Zero(n);
  Vector phi_mean = Vector::Zero(n);
  double loss_acc = 0.0;

  for (Index m = 0; m < hp.mc_size; ++m) {
    Vector z = rng.probe(n, static_cast<std::uint64_t>(m));
    Vector a = k.apply(z);

    Vector warm = scratch ? scratch->b.fetch(m, sys) : Vector::Zero(sys.reduced_dim());
    SolveReport rep;
    Vector rhs = sys.restrict_vec(a).cwiseProduct(t_s);
    rep = cg_solve(sys.lt(), rhs, warm, cg);
    if (scratch) scratch->b.stash(m, sys, warm);
    est.cg_iterations += rep.iterations;
    est.cg_all_converged = est.cg_all_converged && rep.converged;

    // b and phi live on the support; Z applies stay reduced.
    const Vector& b_s = warm;
    Vector a_s = sys.restrict_vec(a);
    Vector tb = t_s.cwiseProduct(b_s);
    Vector zb = k_s.apply(tb) - hp.delta * tb;
    Vector phi_s = b_s.cwiseProduct(zb) - a_s.cwiseProduct(b_s);
    require(phi_s.allFinite(), "grad_f_stochastic: non-finite probe term");

    loss_acc += -a_s.cwiseProduct(t_s).dot(b_s);
    Vector phi = sys.embed(phi_s);
    phi_mean += phi;
    if (keep_probe_terms) est.probe_terms.push_back(std::move(phi));
    ++est.probes_used;
  }

  phi_mean /= static_cast<double>(hp.mc_size);
  est.grad = 2.0 * phi_mean + Vector::Constant(n, hp.lambda);
  est.loss_estimate =
      loss_acc / static_cast<double>(hp.mc_size) + hp.lambda * t.sum();
  return est;
}

}  // namespace landmark
