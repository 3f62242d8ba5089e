#pragma once

#include <memory>
#include <optional>
#include <ostream>
#include <vector>

#include <Eigen/Sparse>

namespace firelgcp {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

/// Sparse Cholesky factorization (CHOLMOD, fill-reducing ordering) of a
/// symmetric positive definite matrix. Only the lower triangle is read.
/// Re-uses the symbolic analysis when the sparsity pattern of successive
/// matrices is unchanged.
class SparseCholesky {
 public:
  SparseCholesky();
  explicit SparseCholesky(const SparseMatrix& m);
  ~SparseCholesky();
  SparseCholesky(const SparseCholesky&) = delete;
  SparseCholesky& operator=(const SparseCholesky&) = delete;
  SparseCholesky(SparseCholesky&&) noexcept;
  SparseCholesky& operator=(SparseCholesky&&) noexcept;

  /// Throws NumericalError if the matrix is not positive definite.
  void factorize(const SparseMatrix& m);

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;
  /// log det of the factorized matrix.
  double log_determinant() const;
  Eigen::Index rows() const { return n_; }
  /// Returns y with y ~ N(0, M^{-1}) when z ~ N(0, I).
  Eigen::VectorXd sample_transform(const Eigen::VectorXd& z) const;
  /// Nonzeros of the factor.
  Eigen::Index factor_nonzeros() const;

  /// Lower factor L in the permuted ordering, P M P^T = L L^T, with sorted
  /// row indices and the diagonal first in each column.
  const SparseMatrix& factor() const;
  /// Maps original index -> index in the permuted (factor) ordering.
  const Eigen::VectorXi& permutation() const { return perm_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  Eigen::VectorXi perm_;
  Eigen::Index n_ = 0;
  std::vector<int> pattern_outer_;
  std::vector<int> pattern_inner_;
  mutable SparseMatrix factor_;
  mutable bool factor_ready_ = false;
};

/// Entries of M^{-1} on the sparsity pattern of the Cholesky factor of M
/// (Takahashi recursions). Covers all pairs (i, j) with M_ij != 0.
class SelectedInverse {
 public:
  explicit SelectedInverse(const SparseCholesky& chol);

  /// Marginal variances in the original ordering.
  Eigen::VectorXd diagonal() const;
  /// (M^{-1})_ij in original ordering, if inside the computed pattern.
  std::optional<double> entry(int i, int j) const;

 private:
  SparseMatrix z_;  // lower triangle in permuted ordering
  Eigen::VectorXi perm_;
};

/// Kronecker product of two sparse matrices, keeping structural zeros of
/// the operands as explicit entries.
SparseMatrix kronecker(const SparseMatrix& a, const SparseMatrix& b);

/// Block-diagonal assembly.
SparseMatrix block_diagonal(const std::vector<SparseMatrix>& blocks);

SparseMatrix sparse_from_dense(const Eigen::MatrixXd& m);

/// Writes the lower triangle as "i j value" lines (0-based).
void write_symmetric_triplets(std::ostream& out, const SparseMatrix& m);

double max_asymmetry(const SparseMatrix& m);

}  // namespace firelgcp
