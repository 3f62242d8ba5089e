#include "firelgcp/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>

#include <cholmod.h>

#include "firelgcp/error.hpp"

namespace firelgcp {

struct SparseCholesky::Impl {
  cholmod_common common;
  cholmod_factor* factor = nullptr;

  Impl() {
    cholmod_start(&common);
    common.final_ll = 1;
    common.print = 0;
    common.error_handler = nullptr;
  }
  ~Impl() {
    if (factor) cholmod_free_factor(&factor, &common);
    cholmod_finish(&common);
  }

  cholmod_dense view(const Eigen::VectorXd& b) const {
    cholmod_dense d{};
    d.nrow = static_cast<std::size_t>(b.size());
    d.ncol = 1;
    d.nzmax = d.nrow;
    d.d = d.nrow;
    d.x = const_cast<double*>(b.data());
    d.xtype = CHOLMOD_REAL;
    d.dtype = CHOLMOD_DOUBLE;
    return d;
  }

  Eigen::VectorXd apply(int system, const Eigen::VectorXd& b) {
    cholmod_dense in = view(b);
    cholmod_dense* out = cholmod_solve(system, factor, &in, &common);
    if (!out) throw NumericalError("sparse Cholesky solve failed");
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(static_cast<const double*>(out->x), b.size());
    cholmod_free_dense(&out, &common);
    return x;
  }
};

namespace {

cholmod_sparse lower_view(const SparseMatrix& m) {
  cholmod_sparse a{};
  a.nrow = static_cast<std::size_t>(m.rows());
  a.ncol = static_cast<std::size_t>(m.cols());
  a.nzmax = static_cast<std::size_t>(m.nonZeros());
  a.p = const_cast<int*>(m.outerIndexPtr());
  a.i = const_cast<int*>(m.innerIndexPtr());
  a.x = const_cast<double*>(m.valuePtr());
  a.stype = -1;
  a.itype = CHOLMOD_INT;
  a.xtype = CHOLMOD_REAL;
  a.dtype = CHOLMOD_DOUBLE;
  a.sorted = 1;
  a.packed = 1;
  return a;
}

}  // namespace

SparseCholesky::SparseCholesky() : impl_(std::make_unique<Impl>()) {}
SparseCholesky::SparseCholesky(const SparseMatrix& m) : SparseCholesky() { factorize(m); }
SparseCholesky::~SparseCholesky() = default;
SparseCholesky::SparseCholesky(SparseCholesky&&) noexcept = default;
SparseCholesky& SparseCholesky::operator=(SparseCholesky&&) noexcept = default;

void SparseCholesky::factorize(const SparseMatrix& m) {
  if (m.rows() != m.cols()) throw ConfigError("SparseCholesky: matrix must be square");
  SparseMatrix compressed = m;
  compressed.makeCompressed();
  factor_ready_ = false;
  const bool same_pattern =
      impl_->factor && n_ == compressed.rows() &&
      pattern_outer_.size() == static_cast<std::size_t>(compressed.outerSize() + 1) &&
      std::equal(pattern_outer_.begin(), pattern_outer_.end(), compressed.outerIndexPtr()) &&
      pattern_inner_.size() == static_cast<std::size_t>(compressed.nonZeros()) &&
      std::equal(pattern_inner_.begin(), pattern_inner_.end(), compressed.innerIndexPtr());
  cholmod_sparse a = lower_view(compressed);
  cholmod_common* cc = &impl_->common;
  if (!same_pattern) {
    if (impl_->factor) cholmod_free_factor(&impl_->factor, cc);
    impl_->factor = cholmod_analyze(&a, cc);
    if (!impl_->factor) throw NumericalError("sparse Cholesky: symbolic analysis failed");
    n_ = compressed.rows();
    pattern_outer_.assign(compressed.outerIndexPtr(), compressed.outerIndexPtr() + compressed.outerSize() + 1);
    pattern_inner_.assign(compressed.innerIndexPtr(), compressed.innerIndexPtr() + compressed.nonZeros());
    perm_.resize(n_);
    const int* p = static_cast<const int*>(impl_->factor->Perm);
    for (Eigen::Index k = 0; k < n_; ++k) perm_[p[k]] = static_cast<int>(k);
  }
  cholmod_factorize(&a, impl_->factor, cc);
  if (cc->status != CHOLMOD_OK || impl_->factor->minor < impl_->factor->n) {
    pattern_outer_.clear();
    cholmod_free_factor(&impl_->factor, cc);
    throw NumericalError("sparse Cholesky failed: matrix not positive definite",
                         "dimension=" + std::to_string(n_));
  }
}

Eigen::VectorXd SparseCholesky::solve(const Eigen::VectorXd& b) const {
  if (b.size() != n_) throw ConfigError("SparseCholesky::solve: dimension mismatch");
  return impl_->apply(CHOLMOD_A, b);
}

double SparseCholesky::log_determinant() const {
  const cholmod_factor* f = impl_->factor;
  if (!f) throw ConfigError("SparseCholesky: not factorized");
  const double* x = static_cast<const double*>(f->x);
  double s = 0.0;
  if (f->is_super) {
    const int* super = static_cast<const int*>(f->super);
    const int* pi = static_cast<const int*>(f->pi);
    const int* px = static_cast<const int*>(f->px);
    for (std::size_t k = 0; k < f->nsuper; ++k) {
      const int ncols = super[k + 1] - super[k];
      const int nrows = pi[k + 1] - pi[k];
      const double* block = x + px[k];
      for (int j = 0; j < ncols; ++j) s += std::log(block[j * (nrows + 1)]);
    }
    return 2.0 * s;
  }
  const int* p = static_cast<const int*>(f->p);
  for (std::size_t j = 0; j < f->n; ++j) s += std::log(x[p[j]]);
  return f->is_ll ? 2.0 * s : s;
}

const SparseMatrix& SparseCholesky::factor() const {
  if (factor_ready_) return factor_;
  if (!impl_->factor) throw ConfigError("SparseCholesky: not factorized");
  cholmod_common* cc = &impl_->common;
  cholmod_factor* copy = cholmod_copy_factor(impl_->factor, cc);
  cholmod_change_factor(CHOLMOD_REAL, 1, 0, 1, 1, copy, cc);
  cholmod_sparse* l = cholmod_factor_to_sparse(copy, cc);
  cholmod_free_factor(&copy, cc);
  if (!l) throw NumericalError("sparse Cholesky: factor extraction failed");
  const int* p = static_cast<const int*>(l->p);
  const int* i = static_cast<const int*>(l->i);
  const double* v = static_cast<const double*>(l->x);
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(p[l->ncol]));
  for (std::size_t j = 0; j < l->ncol; ++j)
    for (int k = p[j]; k < p[j + 1]; ++k) t.emplace_back(i[k], static_cast<int>(j), v[k]);
  factor_.resize(static_cast<Eigen::Index>(l->nrow), static_cast<Eigen::Index>(l->ncol));
  factor_.setFromTriplets(t.begin(), t.end());
  factor_.makeCompressed();
  cholmod_free_sparse(&l, cc);
  factor_ready_ = true;
  return factor_;
}

Eigen::Index SparseCholesky::factor_nonzeros() const {
  if (!impl_->factor) return 0;
  return static_cast<Eigen::Index>(impl_->common.lnz);
}

Eigen::VectorXd SparseCholesky::sample_transform(const Eigen::VectorXd& z) const {
  // P M P^T = L L^T  =>  x = P^T L^{-T} z has covariance M^{-1}.
  if (z.size() != n_) throw ConfigError("SparseCholesky::sample_transform: dimension mismatch");
  const Eigen::VectorXd y = impl_->apply(CHOLMOD_Lt, z);
  return impl_->apply(CHOLMOD_Pt, y);
}

SelectedInverse::SelectedInverse(const SparseCholesky& chol) : perm_(chol.permutation()) {
  const SparseMatrix& l = chol.factor();
  z_ = l;
  const int n = static_cast<int>(l.cols());
  const int* outer = l.outerIndexPtr();
  const int* inner = l.innerIndexPtr();
  const double* lv = l.valuePtr();
  double* zv = z_.valuePtr();

  // column j (descending): Z[S,j] = -Z[S,S] L[S,j] / L[j,j] with S the
  // off-diagonal structure of L[:,j]; Z[S,S] is read by scanning the columns
  // of Z indexed by S against a position marker.
  std::vector<int> pos(static_cast<std::size_t>(n), -1);
  std::vector<double> acc;
  for (int j = n - 1; j >= 0; --j) {
    const int start = outer[j];
    const int stop = outer[j + 1];
    const int s_count = stop - start - 1;
    const double ljj = lv[start];
    for (int a = 0; a < s_count; ++a) pos[static_cast<std::size_t>(inner[start + 1 + a])] = a;
    acc.assign(static_cast<std::size_t>(s_count), 0.0);
    for (int a = 0; a < s_count; ++a) {
      const int m = inner[start + 1 + a];
      const double la = lv[start + 1 + a];
      const int mb = outer[m];
      const int me = outer[m + 1];
      acc[static_cast<std::size_t>(a)] += zv[mb] * la;
      int found = 0;
      for (int r = mb + 1; r < me; ++r) {
        const int b = pos[static_cast<std::size_t>(inner[r])];
        if (b < 0) continue;
        ++found;
        acc[static_cast<std::size_t>(b)] += zv[r] * la;
        acc[static_cast<std::size_t>(a)] += zv[r] * lv[start + 1 + b];
      }
      if (found != s_count - 1 - a) throw NumericalError("selected inversion: pattern not closed");
    }
    double diag = 1.0 / (ljj * ljj);
    for (int a = 0; a < s_count; ++a) {
      const double z = -acc[static_cast<std::size_t>(a)] / ljj;
      zv[start + 1 + a] = z;
      diag -= lv[start + 1 + a] * z / ljj;
    }
    zv[start] = diag;
    for (int a = 0; a < s_count; ++a) pos[static_cast<std::size_t>(inner[start + 1 + a])] = -1;
  }
}

Eigen::VectorXd SelectedInverse::diagonal() const {
  const auto n = z_.cols();
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int pi = perm_[i];
    d[i] = z_.valuePtr()[z_.outerIndexPtr()[pi]];
  }
  return d;
}

std::optional<double> SelectedInverse::entry(int i, int j) const {
  int r = perm_[i];
  int c = perm_[j];
  if (r < c) std::swap(r, c);
  const int* inner = z_.innerIndexPtr();
  const int* begin = inner + z_.outerIndexPtr()[c];
  const int* end = inner + z_.outerIndexPtr()[c + 1];
  const int* it = std::lower_bound(begin, end, r);
  if (it == end || *it != r) return std::nullopt;
  return z_.valuePtr()[it - inner];
}

SparseMatrix kronecker(const SparseMatrix& a, const SparseMatrix& b) {
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(a.nonZeros() * b.nonZeros()));
  for (int ka = 0; ka < a.outerSize(); ++ka)
    for (SparseMatrix::InnerIterator ia(a, ka); ia; ++ia)
      for (int kb = 0; kb < b.outerSize(); ++kb)
        for (SparseMatrix::InnerIterator ib(b, kb); ib; ++ib)
          triplets.emplace_back(static_cast<int>(ia.row() * b.rows() + ib.row()),
                                static_cast<int>(ia.col() * b.cols() + ib.col()), ia.value() * ib.value());
  SparseMatrix k(a.rows() * b.rows(), a.cols() * b.cols());
  k.setFromTriplets(triplets.begin(), triplets.end());
  return k;
}

SparseMatrix block_diagonal(const std::vector<SparseMatrix>& blocks) {
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
    nnz += b.nonZeros();
  }
  std::vector<Triplet> triplets;
  triplets.reserve(static_cast<std::size_t>(nnz));
  Eigen::Index r0 = 0, c0 = 0;
  for (const auto& b : blocks) {
    for (int k = 0; k < b.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(b, k); it; ++it)
        triplets.emplace_back(static_cast<int>(r0 + it.row()), static_cast<int>(c0 + it.col()), it.value());
    r0 += b.rows();
    c0 += b.cols();
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

SparseMatrix sparse_from_dense(const Eigen::MatrixXd& m) {
  std::vector<Triplet> triplets;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), m(i, j));
  SparseMatrix s(m.rows(), m.cols());
  s.setFromTriplets(triplets.begin(), triplets.end());
  return s;
}

void write_symmetric_triplets(std::ostream& out, const SparseMatrix& m) {
  out << std::setprecision(17);
  for (int k = 0; k < m.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(m, k); it; ++it)
      if (it.row() >= it.col()) out << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

double max_asymmetry(const SparseMatrix& m) {
  const SparseMatrix t = m.transpose();
  const SparseMatrix d = m - t;
  double worst = 0.0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(d, k); it; ++it) worst = std::max(worst, std::fabs(it.value()));
  return worst;
}

}  // namespace firelgcp
