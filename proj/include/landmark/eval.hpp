#pragma once

#include <Eigen/Dense>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "landmark/cssp.hpp"
#include "landmark/linop.hpp"
#include "landmark/nystrom.hpp"

namespace landmark {

inline std::vector<Index> mask_to_indices(const std::vector<int>& mask) {
  std::vector<Index> idx;
  for (Index j = 0; j < static_cast<Index>(mask.size()); ++j)
    if (mask[j]) idx.push_back(j);
  return idx;
}

/// ||X - P_s X||_F^2 where P_s projects onto the span of the selected
/// columns; rank-revealing QR of X_[s] for stability.  Empty s gives
/// ||X||_F^2.
inline double cssp_error(const Matrix& x, const std::vector<int>& mask) {
  require(static_cast<Index>(mask.size()) == x.cols(),
          "cssp_error: mask dimension mismatch");
  const std::vector<Index> idx = mask_to_indices(mask);
  const double total = x.squaredNorm();
  if (idx.empty()) return total;

  Matrix xs(x.rows(), static_cast<Index>(idx.size()));
  for (Index j = 0; j < xs.cols(); ++j) xs.col(j) = x.col(idx[j]);

  Eigen::ColPivHouseholderQR<Matrix> qr(xs);
  const Index r = qr.rank();
  if (r == 0) return total;
  Matrix q = qr.householderQ() * Matrix::Identity(x.rows(), r);
  const double captured = (q.transpose() * x).squaredNorm();
  return std::max(0.0, total - captured);
}

struct NystromErrors {
  double frobenius_sq = 0.0;  // ||K - K^_s||_F^2
  double trace = 0.0;         // tr(K - K^_s) = ||K - K^_s||_* for PSD residual
};

/// Both error norms of K - K^_s, evaluated in factor form: only k x k and
/// n x k intermediates appear.
inline NystromErrors nystrom_errors(const Matrix& k_dense,
                                    const std::vector<int>& mask) {
  const Index n = k_dense.rows();
  require(k_dense.cols() == n, "nystrom_errors: K not square");
  require(static_cast<Index>(mask.size()) == n,
          "nystrom_errors: mask dimension mismatch");

  NystromErrors err;
  const std::vector<Index> idx = mask_to_indices(mask);
  if (idx.empty()) {
    err.frobenius_sq = k_dense.squaredNorm();
    err.trace = k_dense.trace();
    return err;
  }

  const Index kk = static_cast<Index>(idx.size());
  Matrix c(n, kk);
  for (Index j = 0; j < kk; ++j) c.col(j) = k_dense.col(idx[j]);
  Matrix core(kk, kk);
  for (Index j = 0; j < kk; ++j)
    for (Index i = 0; i < kk; ++i) core(i, j) = c(idx[i], j);
  Matrix w_pinv = detail::psd_pinv(core);

  Matrix gram = c.transpose() * c;            // C^T C
  Matrix h = c.transpose() * (k_dense * c);   // C^T K C
  const double cross = (w_pinv * h).trace();
  const double approx_sq = (w_pinv * gram * w_pinv * gram).trace();
  err.frobenius_sq = std::max(0.0, k_dense.squaredNorm() - 2.0 * cross + approx_sq);
  err.trace = std::max(0.0, k_dense.trace() - (w_pinv * gram).trace());
  return err;
}

inline NystromErrors nystrom_errors(const Matrix& k_dense,
                                    const NystromApprox& approx) {
  std::vector<int> mask(k_dense.rows(), 0);
  for (Index j : approx.indices) mask[j] = 1;
  return nystrom_errors(k_dense, mask);
}

enum class ErrorNorm { FrobeniusSq, Trace };

/// Best rank-k reference from the singular spectrum: sum of sigma_i^2 past k
/// (Frobenius-squared) or sum of sigma_i past k (trace, PSD case).
inline double best_rank_k_error(const Matrix& a, Index k, ErrorNorm norm) {
  require(k >= 0 && k <= std::min(a.rows(), a.cols()),
          "best_rank_k_error: k out of range");
  Eigen::BDCSVD<Matrix> svd(a);
  const Vector& sv = svd.singularValues();
  double acc = 0.0;
  for (Index i = k; i < sv.size(); ++i)
    acc += norm == ErrorNorm::FrobeniusSq ? sv[i] * sv[i] : sv[i];
  return acc;
}

struct ApproxFactor {
  double value = 0.0;
  bool exact_reference = false;  // reference at numerical zero; value is the raw error
};

/// Ratio error / reference against the SVD truncation.  A reference at
/// numerical zero (<= 1e-14) means the best rank-k approximation is exact;
/// the sentinel flags it and value reports the raw error instead.
inline ApproxFactor approximation_factor(double error, double reference) {
  ApproxFactor f;
  if (reference <= 1e-14) {
    f.exact_reference = true;
    f.value = error;
    return f;
  }
  f.value = error / reference;
  return f;
}

struct EvaluationReport {
  std::string method;
  Index k = 0;
  double frobenius_sq_error = 0.0;
  double trace_error = 0.0;  // NaN for plain CSSP evaluations
  double best_rank_k_error = 0.0;
  double approximation_factor = 0.0;  // NaN when the reference is exact
  double wall_time_s = 0.0;
};

}  // namespace landmark
