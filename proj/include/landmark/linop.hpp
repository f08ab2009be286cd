#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "landmark/rng.hpp"

namespace landmark {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

enum class OperatorKind { GramOfDense, ExplicitKernel, Materialized, Scaled };

/// Symmetric PSD linear operator exposed only through matrix-vector products.
/// Everything downstream (losses, gradients, CG) touches K through this
/// interface; the concrete matrix is never required.
///
/// Operators are immutable after construction and safe to share across
/// threads; apply() is reentrant.
class SymmetricOperator {
 public:
  virtual ~SymmetricOperator() = default;

  virtual Index dim() const = 0;
  virtual OperatorKind kind() const = 0;

  /// v |-> Kv.  Throws std::invalid_argument on dimension mismatch.
  virtual Vector apply(const Vector& v) const = 0;

  /// Exact diagonal of K.  The default probes with unit vectors (n applies);
  /// concrete operators override it with closed forms.
  virtual Vector diagonal() const {
    const Index n = dim();
    Vector d(n);
    Vector e = Vector::Zero(n);
    for (Index j = 0; j < n; ++j) {
      e[j] = 1.0;
      d[j] = apply(e)[j];
      e[j] = 0.0;
    }
    return d;
  }

  /// Principal-submatrix operator K_{[keep, keep]}.  Indices must be sorted
  /// and unique.  Concrete operators exploit structure (column slices of X,
  /// point subsets of a kernel) so restricted applies get cheaper.
  virtual std::unique_ptr<SymmetricOperator> restricted(
      const std::vector<Index>& keep) const = 0;

 protected:
  void check_dim(const Vector& v) const {
    require(v.size() == dim(), "operator apply: dimension mismatch (got " +
                                   std::to_string(v.size()) + ", expected " +
                                   std::to_string(dim()) + ")");
  }
};

// K = X^T X, applied as v |-> X^T (X v).  K itself is never materialized.
class GramOperator final : public SymmetricOperator {
 public:
  explicit GramOperator(Matrix x) : x_(std::move(x)) {
    require(x_.rows() >= 1 && x_.cols() >= 1, "gram operator: empty matrix");
    require(x_.allFinite(), "gram operator: non-finite entries");
  }

  Index dim() const override { return x_.cols(); }
  OperatorKind kind() const override { return OperatorKind::GramOfDense; }

  Vector apply(const Vector& v) const override {
    check_dim(v);
    return x_.transpose() * (x_ * v);
  }

  Vector diagonal() const override {
    return x_.colwise().squaredNorm().transpose();
  }

  std::unique_ptr<SymmetricOperator> restricted(
      const std::vector<Index>& keep) const override {
    Matrix sub(x_.rows(), static_cast<Index>(keep.size()));
    for (Index j = 0; j < sub.cols(); ++j) sub.col(j) = x_.col(keep[j]);
    return std::make_unique<GramOperator>(std::move(sub));
  }

  const Matrix& data() const { return x_; }

 private:
  Matrix x_;
};

class MaterializedOperator final : public SymmetricOperator {
 public:
  explicit MaterializedOperator(Matrix k) : k_(std::move(k)) {
    require(k_.rows() == k_.cols(), "materialized operator: matrix not square");
    require(k_.allFinite(), "materialized operator: non-finite entries");
  }

  Index dim() const override { return k_.rows(); }
  OperatorKind kind() const override { return OperatorKind::Materialized; }

  Vector apply(const Vector& v) const override {
    check_dim(v);
    return k_ * v;
  }

  Vector diagonal() const override { return k_.diagonal(); }

  std::unique_ptr<SymmetricOperator> restricted(
      const std::vector<Index>& keep) const override {
    const Index k = static_cast<Index>(keep.size());
    Matrix sub(k, k);
    for (Index j = 0; j < k; ++j)
      for (Index i = 0; i < k; ++i) sub(i, j) = k_(keep[i], keep[j]);
    return std::make_unique<MaterializedOperator>(std::move(sub));
  }

  const Matrix& matrix() const { return k_; }

 private:
  Matrix k_;
};

// c * K as an operator.  Non-owning unless constructed from a unique_ptr, in
// which case the base's lifetime is carried along.
class ScaledOperator final : public SymmetricOperator {
 public:
  ScaledOperator(const SymmetricOperator& base, double factor)
      : base_(&base), factor_(factor) {
    check_factor();
  }

  ScaledOperator(std::unique_ptr<SymmetricOperator> base, double factor)
      : owned_(std::move(base)), base_(owned_.get()), factor_(factor) {
    require(base_ != nullptr, "scaled operator: null base");
    check_factor();
  }

  Index dim() const override { return base_->dim(); }
  OperatorKind kind() const override { return OperatorKind::Scaled; }

  Vector apply(const Vector& v) const override {
    return factor_ * base_->apply(v);
  }

  Vector diagonal() const override { return factor_ * base_->diagonal(); }

  std::unique_ptr<SymmetricOperator> restricted(
      const std::vector<Index>& keep) const override {
    return std::make_unique<ScaledOperator>(base_->restricted(keep), factor_);
  }

  double factor() const { return factor_; }
  const SymmetricOperator& base() const { return *base_; }

 private:
  void check_factor() const {
    require(std::isfinite(factor_) && factor_ > 0.0,
            "scaled operator: factor must be positive and finite");
  }

  std::unique_ptr<SymmetricOperator> owned_;
  const SymmetricOperator* base_;
  double factor_;
};

struct KernelSpec {
  double sigma = 1.0;  // RBF bandwidth, K_ij = exp(-||x_i - x_j||^2 / sigma^2)
};

enum class KernelMode { Materialized, OnTheFly };

namespace detail {

inline Matrix rbf_kernel_block(const Matrix& points, const Vector& sq_norms,
                               double sigma, Index row0, Index rows) {
  // pairwise squared distances for rows [row0, row0+rows) against all points
  Matrix d2 = (-2.0 * points.middleRows(row0, rows) * points.transpose());
  d2.colwise() += sq_norms.segment(row0, rows);
  d2.rowwise() += sq_norms.transpose();
  // clamp tiny negative round-off before exponentiating
  return (d2.array().max(0.0) * (-1.0 / (sigma * sigma))).exp();
}

}  // namespace detail

// RBF kernel applied blockwise; the n x n matrix is never stored.  Extra
// memory is O(block_size * n).
class RbfKernelOperator final : public SymmetricOperator {
 public:
  RbfKernelOperator(Matrix points, KernelSpec spec, Index block_size = 512)
      : points_(std::move(points)), spec_(spec), block_size_(block_size) {
    require(points_.rows() >= 1, "kernel operator: no points");
    require(points_.allFinite(), "kernel operator: non-finite coordinates");
    require(spec_.sigma > 0.0, "kernel operator: sigma must be positive");
    require(block_size_ >= 1, "kernel operator: block size must be positive");
    sq_norms_ = points_.rowwise().squaredNorm();
  }

  Index dim() const override { return points_.rows(); }
  OperatorKind kind() const override { return OperatorKind::ExplicitKernel; }

  Vector apply(const Vector& v) const override {
    check_dim(v);
    const Index n = dim();
    Vector out(n);
    for (Index row0 = 0; row0 < n; row0 += block_size_) {
      const Index rows = std::min(block_size_, n - row0);
      out.segment(row0, rows) =
          detail::rbf_kernel_block(points_, sq_norms_, spec_.sigma, row0, rows) * v;
    }
    return out;
  }

  Vector diagonal() const override { return Vector::Ones(dim()); }

  std::unique_ptr<SymmetricOperator> restricted(
      const std::vector<Index>& keep) const override {
    Matrix sub(static_cast<Index>(keep.size()), points_.cols());
    for (Index i = 0; i < sub.rows(); ++i) sub.row(i) = points_.row(keep[i]);
    return std::make_unique<RbfKernelOperator>(std::move(sub), spec_, block_size_);
  }

  const Matrix& points() const { return points_; }

 private:
  Matrix points_;
  KernelSpec spec_;
  Index block_size_;
  Vector sq_norms_;
};

inline std::unique_ptr<SymmetricOperator> gram_operator(Matrix x) {
  return std::make_unique<GramOperator>(std::move(x));
}

inline constexpr Index kKernelMaterializeCap = 4096;

inline std::unique_ptr<SymmetricOperator> kernel_operator(
    const Matrix& points, const KernelSpec& spec, KernelMode mode,
    Index block_size = 512) {
  if (mode == KernelMode::OnTheFly)
    return std::make_unique<RbfKernelOperator>(points, spec, block_size);

  require(points.rows() <= kKernelMaterializeCap,
          "kernel operator: materialized mode capped at n <= " +
              std::to_string(kKernelMaterializeCap));
  RbfKernelOperator fly(points, spec, block_size);
  const Index n = fly.dim();
  Matrix k(n, n);
  Vector sq_norms = points.rowwise().squaredNorm();
  for (Index row0 = 0; row0 < n; row0 += block_size) {
    const Index rows = std::min(block_size, n - row0);
    k.middleRows(row0, rows) =
        detail::rbf_kernel_block(points, sq_norms, spec.sigma, row0, rows);
  }
  return std::make_unique<MaterializedOperator>(std::move(k));
}

/// Rademacher probe keyed by (seed, iteration, probe index).  The counter
/// scheme makes every probe a pure function of its key, so runs reproduce
/// exactly no matter how probes are scheduled.
inline Vector rademacher_probe(Index n, std::uint64_t seed,
                               std::uint64_t iteration,
                               std::uint64_t probe_index) {
  require(n >= 1, "rademacher probe: n must be positive");
  CounterRng rng(derive_seed(seed, 0x7261646dULL, iteration, probe_index));
  Vector z(n);
  std::uint64_t bits = 0;
  int bits_left = 0;
  for (Index i = 0; i < n; ++i) {
    if (bits_left == 0) {
      bits = rng.next_u64();
      bits_left = 64;
    }
    z[i] = (bits & 1) ? 1.0 : -1.0;
    bits >>= 1;
    --bits_left;
  }
  return z;
}

// Independent-stream probe source handed to the stochastic gradient
// estimators; iteration is fixed per SGD step, probe_index runs 0..M-1.
struct ProbeStream {
  std::uint64_t seed = 0;
  std::uint64_t iteration = 0;

  Vector probe(Index n, std::uint64_t probe_index) const {
    return rademacher_probe(n, seed, iteration, probe_index);
  }
};

/// Factorized diagonal estimator: Bz (.) Cz is unbiased for Diag(B C^T).
/// With C = I it reduces to the classic z (.) Az estimator.
inline Vector estimate_diagonal_factored(
    const std::function<Vector(const Vector&)>& b_apply,
    const std::function<Vector(const Vector&)>& c_apply, const Vector& z) {
  Vector bz = b_apply(z);
  Vector cz = c_apply(z);
  require(bz.size() == z.size() && cz.size() == z.size(),
          "diagonal estimator: factor output dimension mismatch");
  return bz.cwiseProduct(cz);
}

// Dense realization of an operator; test scale only.
inline Matrix materialize(const SymmetricOperator& op, Index guard = 2048) {
  const Index n = op.dim();
  require(n <= guard, "materialize: dimension exceeds guard");
  Matrix k(n, n);
  Vector e = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    e[j] = 1.0;
    k.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return k;
}

}  // namespace landmark
