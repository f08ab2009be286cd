#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <utility>
#include <vector>

#include "landmark/cssp.hpp"
#include "landmark/linop.hpp"
#include "landmark/solver.hpp"

namespace landmark {

/// Factor form of K^_s = K_[s] K_[s,s]^+ K_[s]^T: the n x k column block and
/// the k x k pseudo-inverse core.  The n x n product is never formed.
struct NystromApprox {
  std::vector<Index> indices;  // selected landmarks, sorted
  Matrix columns;              // K_[s], n x k
  Matrix core_pinv;            // K_[s,s]^+, k x k

  Index rank_bound() const { return static_cast<Index>(indices.size()); }

  // Dense realization, test scale only.
  Matrix reconstruct_dense() const {
    if (indices.empty()) return Matrix();
    return columns * core_pinv * columns.transpose();
  }
};

/// K~(t) = K T [T K T + delta (I - T^2)]^+ T K, the Nystrom analogue of the
/// continuous projection.
inline Matrix k_tilde_dense(const Matrix& k_dense, const Vector& t,
                            double delta) {
  detail::check_dense_scale(k_dense.rows());
  require(k_dense.rows() == k_dense.cols(), "k_tilde: K not square");
  require(t.size() == k_dense.rows(), "k_tilde: t dimension mismatch");
  require(delta > 0.0, "k_tilde: delta must be positive");
  Matrix inner = detail::inner_matrix(k_dense, t, delta);
  Matrix kt = k_dense * t.asDiagonal();
  return kt * detail::psd_pinv(inner) * kt.transpose();
}

// g_lambda(t) = ||K - K~(t)||_F^2 + lambda sum_j t_j
inline double g_lambda_dense(const Matrix& k_dense, const Vector& t,
                             double delta, double lambda) {
  return (k_dense - k_tilde_dense(k_dense, t, delta)).squaredNorm() +
         lambda * t.sum();
}

/// Exact gradient (interior points only):
/// grad g = 4 Diag[L_t^-1 T K D K (I - T L_t^-1 T Z)] + lambda 1,
/// with D = K~(t) - K and Z = K - delta I.
inline Vector grad_g_exact(const Matrix& k_dense, const Vector& t, double delta,
                           double lambda) {
  const Index n = k_dense.rows();
  detail::check_dense_scale(n);
  require(t.size() == n, "grad_g_exact: t dimension mismatch");
  detail::check_interior(t);

  Matrix lt = detail::inner_matrix(k_dense, t, delta);
  Eigen::LDLT<Matrix> ldlt(lt);
  Matrix z = k_dense;
  z.diagonal().array() -= delta;
  Matrix d = k_tilde_dense(k_dense, t, delta) - k_dense;

  Matrix left = ldlt.solve(t.asDiagonal() * (k_dense * d * k_dense));
  Matrix right = -(t.asDiagonal() * ldlt.solve(t.asDiagonal() * z));
  right.diagonal().array() += 1.0;
  Vector diag = left.cwiseProduct(right.transpose()).rowwise().sum();
  return 4.0 * diag + Vector::Constant(n, lambda);
}

/// Stochastic Nystrom gradient.  One probe runs the five-step pipeline
///   a = Kz, b = L^-1(t.a), c = K(t.b) - a, d = Kc, e = L^-1(t.d),
///   psi = b.d + a.e - e.Z(t.b) - b.Z(t.e)
/// and the estimate is 2 mean(psi) + lambda 1.  b and e live on the support
/// of t, so both solves run reduced and psi vanishes off the support;
/// c = Dz and d need full-dimension K-applies.
inline GradientEstimate grad_g_stochastic(const SymmetricOperator& k,
                                          const Vector& t, const HyperParams& hp,
                                          const CgConfig& cg,
                                          const ProbeStream& rng,
                                          EstimatorScratch* scratch = nullptr,
                                          bool keep_probe_terms = false) {
  hp.validate();
  const Index n = k.dim();
  require(t.size() == n, "grad_g_stochastic: t dimension mismatch");
  require((t.array() >= 0.0).all() && (t.array() < 1.0).all(),
          "grad_g_stochastic: t outside [0,1)");

  SupportSystem sys(k, t, hp.delta);
  GradientEstimate est;
  if (sys.empty()) {  // psi vanishes, but c = -a still feeds the loss estimate
    est.grad = Vector::Constant(n, hp.lambda);
    double zero_loss = 0.0;
    for (Index m = 0; m < hp.mc_size; ++m) {
      zero_loss += k.apply(rng.probe(n, static_cast<std::uint64_t>(m))).squaredNorm();
      if (keep_probe_terms) est.probe_terms.push_back(Vector::Zero(n));
      ++est.probes_used;
    }
    est.loss_estimate =
        zero_loss / static_cast<double>(hp.mc_size) + hp.lambda * t.sum();
    return est;
  }
  const SymmetricOperator& k_s =
      sys.restricted_operator() ? *sys.restricted_operator() : k;
  const Vector& t_s = sys.t_reduced();

  est.grad = Vector::Zero(n);
  Vector psi_mean = Vector::Zero(n);
  double loss_acc = 0.0;

  for (Index m = 0; m < hp.mc_size; ++m) {
    Vector z = rng.probe(n, static_cast<std::uint64_t>(m));
    Vector a = k.apply(z);
    Vector a_s = sys.restrict_vec(a);

    Vector warm_b = scratch ? scratch->b.fetch(m, sys) : Vector::Zero(sys.reduced_dim());
    SolveReport rep_b;
    Vector rhs_b = a_s.cwiseProduct(t_s);
    rep_b = cg_solve(sys.lt(), rhs_b, warm_b, cg);
    if (scratch) scratch->b.stash(m, sys, warm_b);
    const Vector& b_s = warm_b;

    Vector tb_full = sys.embed(t_s.cwiseProduct(b_s));
    Vector c = k.apply(tb_full) - a;
    Vector d_full = k.apply(c);
    Vector d_s = sys.restrict_vec(d_full);

    Vector warm_e = scratch ? scratch->e.fetch(m, sys) : Vector::Zero(sys.reduced_dim());
    SolveReport rep_e;
    Vector rhs_e = d_s.cwiseProduct(t_s);
    rep_e = cg_solve(sys.lt(), rhs_e, warm_e, cg);
    if (scratch) scratch->e.stash(m, sys, warm_e);
    const Vector& e_s = warm_e;

    est.cg_iterations += rep_b.iterations + rep_e.iterations;
    est.cg_all_converged =
        est.cg_all_converged && rep_b.converged && rep_e.converged;

    // Z(t.b) restricted to the support is c + a - delta t.b, no extra apply.
    Vector tb_s = t_s.cwiseProduct(b_s);
    Vector zb_s = sys.restrict_vec(c) + a_s - hp.delta * tb_s;
    Vector te_s = t_s.cwiseProduct(e_s);
    Vector ze_s = k_s.apply(te_s) - hp.delta * te_s;

    Vector psi_s = b_s.cwiseProduct(d_s) + a_s.cwiseProduct(e_s) -
                   e_s.cwiseProduct(zb_s) - b_s.cwiseProduct(ze_s);
    require(psi_s.allFinite(), "grad_g_stochastic: non-finite probe term");

    loss_acc += c.squaredNorm();
    Vector psi = sys.embed(psi_s);
    psi_mean += psi;
    if (keep_probe_terms) est.probe_terms.push_back(std::move(psi));
    ++est.probes_used;
  }

  psi_mean /= static_cast<double>(hp.mc_size);
  est.grad = 2.0 * psi_mean + Vector::Constant(n, hp.lambda);
  est.loss_estimate =
      loss_acc / static_cast<double>(hp.mc_size) + hp.lambda * t.sum();
  return est;
}

/// Build the factor form of K^_s from k operator columns (K e_j per selected
/// j) and the pseudo-inverse of the k x k principal block.  O(k) operator
/// applies, O(k^3) core cost, O(nk) storage.
inline NystromApprox nystrom_reconstruct(const SymmetricOperator& k,
                                         const std::vector<Index>& selected) {
  const Index n = k.dim();
  NystromApprox approx;
  approx.indices = selected;
  const Index kk = static_cast<Index>(selected.size());
  if (kk == 0) return approx;

  approx.columns.resize(n, kk);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < kk; ++j) {
    require(selected[j] >= 0 && selected[j] < n,
            "nystrom_reconstruct: index out of range");
    e[selected[j]] = 1.0;
    approx.columns.col(j) = k.apply(e);
    e[selected[j]] = 0.0;
  }

  Matrix core(kk, kk);
  for (Index j = 0; j < kk; ++j)
    for (Index i = 0; i < kk; ++i) core(i, j) = approx.columns(selected[i], j);
  approx.core_pinv = detail::psd_pinv(core);
  return approx;
}

inline NystromApprox nystrom_reconstruct(const SymmetricOperator& k,
                                         const std::vector<int>& mask) {
  require(static_cast<Index>(mask.size()) == k.dim(),
          "nystrom_reconstruct: mask dimension mismatch");
  std::vector<Index> selected;
  for (Index j = 0; j < k.dim(); ++j)
    if (mask[j]) selected.push_back(j);
  return nystrom_reconstruct(k, selected);
}

}  // namespace landmark
