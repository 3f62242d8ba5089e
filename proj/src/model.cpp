#include "firelgcp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "firelgcp/error.hpp"
#include "firelgcp/rng.hpp"

namespace firelgcp {

std::vector<CountRecord> subsample_zero_months(const std::vector<CountRecord>& records, std::uint64_t seed) {
  std::map<std::pair<int, int>, std::vector<CountRecord>> groups;  // (cell, year)
  for (const auto& r : records) {
    if (r.count < 0) throw ConfigError("subsample: negative count for cell " + std::to_string(r.cell_id));
    if (r.month < 1) throw ConfigError("subsample: month index must be >= 1");
    groups[{r.cell_id, year_index(r.month)}].push_back(r);
  }
  const CounterRng root(seed, 0x73756273);
  std::vector<CountRecord> out;
  out.reserve(records.size() / 4 + 16);
  for (auto& [key, group] : groups) {
    std::sort(group.begin(), group.end(), [](const auto& a, const auto& b) { return a.month < b.month; });
    std::vector<const CountRecord*> zeros;
    for (const auto& r : group) {
      if (r.count > 0)
        out.push_back(r);
      else
        zeros.push_back(&r);
    }
    if (zeros.empty()) continue;
    // one stream per (cell, year) so the draw does not depend on processing order
    CounterRng rng = root.split((static_cast<std::uint64_t>(static_cast<std::uint32_t>(key.first)) << 32) |
                                static_cast<std::uint32_t>(key.second));
    const auto pick = static_cast<std::size_t>(rng.below(zeros.size()));
    CountRecord agg = *zeros[pick];
    agg.exposure = 0.0;
    agg.n_aggregated = 0;
    for (const auto* z : zeros) {
      agg.exposure += z->exposure;
      agg.n_aggregated += z->n_aggregated;
    }
    out.push_back(agg);
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.cell_id != b.cell_id ? a.cell_id < b.cell_id : a.month < b.month; });
  return out;
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::fixed_only: return "FIXED_ONLY";
    case ModelVariant::shared_spatial: return "SHARED_SPATIAL";
    case ModelVariant::independent_yearly: return "INDEPENDENT_YEARLY";
    case ModelVariant::ar1_yearly: return "AR1_YEARLY";
  }
  return "?";
}

ModelVariant variant_from_string(const std::string& s) {
  std::string u;
  for (char c : s) u.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (u == "FIXED_ONLY") return ModelVariant::fixed_only;
  if (u == "SHARED_SPATIAL") return ModelVariant::shared_spatial;
  if (u == "INDEPENDENT_YEARLY") return ModelVariant::independent_yearly;
  if (u == "AR1_YEARLY") return ModelVariant::ar1_yearly;
  throw ConfigError("unknown model variant '" + s + "'");
}

void PriorSpec::validate() const {
  auto prob = [](double p, const char* name) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError(std::string("prior: ") + name + " must be in (0, 1)");
  };
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("prior: ") + name + " must be > 0");
  };
  positive(fixed_effect_precision, "fixed_effect_precision");
  positive(range0, "range0");
  positive(sd0, "sd0");
  positive(seasonal_var0, "seasonal_var0");
  positive(rho0, "rho0");
  if (!(rho0 < 1.0)) throw ConfigError("prior: rho0 must be < 1");
  prob(range_prob, "range_prob");
  prob(sd_prob, "sd_prob");
  prob(seasonal_prob, "seasonal_prob");
  prob(rho_prob, "rho_prob");
}

Eigen::VectorXd ThetaLayout::encode(const HyperParams& h) const {
  Eigen::VectorXd t(size());
  int i = 0;
  if (spatial) {
    t[i++] = std::log(h.range);
    t[i++] = std::log(h.sd);
  }
  if (rho) t[i++] = std::atanh(h.rho);
  if (seasonal) t[i++] = std::log(h.seasonal_precision);
  return t;
}

HyperParams ThetaLayout::decode(const Eigen::VectorXd& theta, const HyperParams& defaults) const {
  if (theta.size() != size()) throw ConfigError("theta has wrong dimension");
  HyperParams h = defaults;
  int i = 0;
  if (spatial) {
    h.range = std::exp(theta[i++]);
    h.sd = std::exp(theta[i++]);
  }
  if (rho) h.rho = std::tanh(theta[i++]);
  if (seasonal) h.seasonal_precision = std::exp(theta[i++]);
  return h;
}

std::vector<std::string> ThetaLayout::names() const {
  std::vector<std::string> n;
  if (spatial) {
    n.emplace_back("range");
    n.emplace_back("sd");
  }
  if (rho) n.emplace_back("rho");
  if (seasonal) n.emplace_back("seasonal_precision");
  return n;
}

double log_prior_hyper(const Eigen::VectorXd& theta, const ThetaLayout& layout, const PriorSpec& priors) {
  if (theta.size() != layout.size() || !theta.allFinite()) return -std::numeric_limits<double>::infinity();
  double lp = 0.0;
  int i = 0;
  if (layout.spatial) {
    // range r: density lambda r^-2 exp(-lambda / r) (d = 2), P(r < range0) = range_prob
    const double lr = theta[i++];
    const double lambda_r = -priors.range0 * std::log(priors.range_prob);
    lp += std::log(lambda_r) - lr - lambda_r * std::exp(-lr);
    // sd s: exponential, P(s > sd0) = sd_prob
    const double ls = theta[i++];
    const double lambda_s = -std::log(priors.sd_prob) / priors.sd0;
    lp += std::log(lambda_s) - lambda_s * std::exp(ls) + ls;
  }
  if (layout.rho) {
    // exponential on d(rho) = sqrt(-log(1 - rho^2)), split evenly over the sign
    const double z = theta[i++];
    if (!std::isfinite(z)) return -std::numeric_limits<double>::infinity();
    const double rho = std::tanh(z);
    // -log(1 - rho^2) = 2 log cosh z
    const double az = std::fabs(z);
    const double two_log_cosh =
        az < 1.0 ? -std::log1p(-rho * rho) : 2.0 * (az + std::log1p(std::exp(-2.0 * az)) - std::log(2.0));
    const double d = std::sqrt(two_log_cosh);
    const double d0 = std::sqrt(-std::log1p(-priors.rho0 * priors.rho0));
    const double lambda = -std::log(priors.rho_prob) / d0;
    // density in z: (lambda / 2) exp(-lambda d) |rho| / d
    const double ratio = std::fabs(rho) < 1e-8 ? 1.0 : std::fabs(rho) / d;
    lp += std::log(0.5 * lambda) - lambda * d + std::log(ratio);
  }
  if (layout.seasonal) {
    // precision tau with P(tau^{-1/2} > sqrt(var0)) = prob
    const double lt = theta[i++];
    const double lambda = -std::log(priors.seasonal_prob) / std::sqrt(priors.seasonal_var0);
    lp += std::log(0.5 * lambda) - 0.5 * lt - lambda * std::exp(-0.5 * lt);
  }
  return std::isfinite(lp) ? lp : -std::numeric_limits<double>::infinity();
}

SparseMatrix ar1_precision(double rho, int n) {
  if (!(std::fabs(rho) < 1.0)) throw DomainError("AR(1) precision requires |rho| < 1");
  if (n < 1) throw ConfigError("AR(1) precision requires n >= 1");
  const double s = 1.0 / (1.0 - rho * rho);
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    const bool end = (i == 0 || i == n - 1);
    t.emplace_back(i, i, n == 1 ? 1.0 : s * (end ? 1.0 : 1.0 + rho * rho));
    if (i + 1 < n) {
      t.emplace_back(i, i + 1, -rho * s);
      t.emplace_back(i + 1, i, -rho * s);
    }
  }
  SparseMatrix q(n, n);
  q.setFromTriplets(t.begin(), t.end());
  return q;
}

CyclicRw1 CyclicRw1::make(int levels) {
  if (levels < 3) throw ConfigError("cyclic random walk needs >= 3 levels");
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(levels, levels);
  for (int i = 0; i < levels; ++i) {
    const int j = (i + 1) % levels;
    r(i, i) += 1.0;
    r(j, j) += 1.0;
    r(i, j) -= 1.0;
    r(j, i) -= 1.0;
  }
  // generalized variance: geometric mean of diag of the pseudo-inverse
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);
  Eigen::MatrixXd pinv = Eigen::MatrixXd::Zero(levels, levels);
  for (int k = 0; k < levels; ++k) {
    const double ev = eig.eigenvalues()[k];
    if (ev > 1e-10) pinv += eig.eigenvectors().col(k) * eig.eigenvectors().col(k).transpose() / ev;
  }
  double mean_log = 0.0;
  for (int i = 0; i < levels; ++i) mean_log += std::log(pinv(i, i));
  const double scale = std::exp(mean_log / levels);

  // orthonormal basis of the sum-to-zero subspace
  const Eigen::MatrixXd centering =
      Eigen::MatrixXd::Identity(levels, levels) - Eigen::MatrixXd::Constant(levels, levels, 1.0 / levels);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ceig(centering);
  CyclicRw1 c;
  c.levels = levels;
  c.scale = scale;
  c.basis = ceig.eigenvectors().rightCols(levels - 1);
  c.structure = c.basis.transpose() * (scale * r) * c.basis;
  c.structure = 0.5 * (c.structure + c.structure.transpose()).eval();
  Eigen::LLT<Eigen::MatrixXd> llt(c.structure);
  c.log_det_structure = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return c;
}

int LatentLayout::n_spatial() const {
  switch (variant) {
    case ModelVariant::fixed_only: return 0;
    case ModelVariant::shared_spatial: return n_mesh;
    case ModelVariant::independent_yearly:
    case ModelVariant::ar1_yearly: return n_mesh * n_years;
  }
  return 0;
}

LatentModel LatentModel::custom(const CustomModelSpec& spec) {
  spec.priors.validate();
  const auto n = spec.response.size();
  if (spec.weight.size() != n || spec.fixed_design.rows() != n)
    throw ConfigError("custom model: response, weight and design must have the same number of rows");
  if (spec.n_levels > 0 && spec.level.size() != static_cast<std::size_t>(n))
    throw ConfigError("custom model: level must be given per record");
  LatentModel m;
  m.family_ = spec.family;
  m.priors_ = spec.priors;
  m.response_ = spec.response;
  m.weight_ = spec.weight;
  m.layout_.n_fixed = static_cast<int>(spec.fixed_design.cols());
  m.layout_.variant = ModelVariant::fixed_only;
  if (spec.n_levels > 0) {
    m.seasonal_ = CyclicRw1::make(spec.n_levels);
    m.layout_.n_seasonal = spec.n_levels - 1;
  }
  m.theta_layout_ = {false, false, spec.n_levels > 0};
  for (int j = 0; j < m.layout_.n_fixed; ++j) m.fixed_names_.push_back("beta" + std::to_string(j));

  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < spec.fixed_design.cols(); ++j)
      if (spec.fixed_design(i, j) != 0.0) t.emplace_back(static_cast<int>(i), static_cast<int>(j), spec.fixed_design(i, j));
    if (spec.n_levels > 0) {
      const int lv = spec.level[static_cast<std::size_t>(i)];
      if (lv < 0 || lv >= spec.n_levels) throw ConfigError("custom model: level out of range");
      for (int k = 0; k < m.layout_.n_seasonal; ++k)
        t.emplace_back(static_cast<int>(i), m.layout_.seasonal_offset() + k, m.seasonal_->basis(lv, k));
    }
  }
  m.design_.resize(n, m.layout_.dim());
  m.design_.setFromTriplets(t.begin(), t.end());
  m.finalize();
  return m;
}

LatentModel LatentModel::build(const std::vector<CountRecord>& records, const CovariateTable& covariates,
                               const GridSpec& grid, std::shared_ptr<const Mesh> mesh, ModelVariant variant,
                               const PriorSpec& priors) {
  priors.validate();
  grid.validate();
  covariates.validate();
  if (records.empty()) throw ConfigError("model: no count records");
  if (has_spatial(variant) && !mesh) throw ConfigError("model: spatial variants require a mesh");

  LatentModel m;
  m.family_ = Family::poisson;
  m.priors_ = priors;
  m.records_ = records;
  m.covariates_ = std::make_shared<const CovariateTable>(covariates);
  m.grid_ = std::make_shared<const GridSpec>(grid);
  m.seasonal_ = CyclicRw1::make(12);

  m.fixed_names_.emplace_back("intercept");
  const auto& dnames = covariates.dynamic_names();
  for (std::size_t j = 0; j < dnames.size(); ++j)
    if (dnames[j] == CovariateTable::kTimeName) m.time_column_ = static_cast<int>(j);
  if (m.time_column_ >= 0) m.fixed_names_.emplace_back(CovariateTable::kTimeName);
  for (std::size_t j = 0; j < covariates.static_names().size(); ++j) {
    m.static_columns_.push_back(static_cast<int>(j));
    m.fixed_names_.push_back(covariates.static_names()[j]);
  }
  for (std::size_t j = 0; j < dnames.size(); ++j)
    if (static_cast<int>(j) != m.time_column_) {
      m.dynamic_columns_.push_back(static_cast<int>(j));
      m.fixed_names_.push_back(dnames[j]);
    }

  m.layout_.variant = variant;
  m.layout_.n_fixed = static_cast<int>(m.fixed_names_.size());
  m.layout_.n_seasonal = 11;
  m.layout_.n_years = year_index(covariates.last_month()) + 1;
  if (has_spatial(variant)) {
    m.mesh_ = std::move(mesh);
    m.fem_ = std::make_shared<const FemMatrices>(fem_matrices(*m.mesh_));
    m.layout_.n_mesh = static_cast<int>(m.mesh_->vertex_count());
    std::vector<Point2> centers;
    for (int id : covariates.cell_ids()) {
      if (!grid.is_active(id)) throw ConfigError("model: covariate cell " + std::to_string(id) + " is not an active grid cell");
      centers.push_back(grid.cell_center(id));
    }
    m.cell_projector_ = projector(*m.mesh_, centers);
  }
  m.theta_layout_ = {has_spatial(variant), variant == ModelVariant::ar1_yearly, true};

  std::vector<std::pair<int, int>> targets;
  targets.reserve(records.size());
  m.response_.resize(static_cast<Eigen::Index>(records.size()));
  m.weight_.resize(static_cast<Eigen::Index>(records.size()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.count < 0) throw ConfigError("model: negative count at record " + std::to_string(i));
    if (!(r.exposure > 0.0)) throw ConfigError("model: exposure must be > 0 at record " + std::to_string(i));
    m.response_[static_cast<Eigen::Index>(i)] = static_cast<double>(r.count);
    m.weight_[static_cast<Eigen::Index>(i)] = r.exposure;
    targets.emplace_back(r.cell_id, r.month);
  }
  m.design_ = m.design_rows(targets);
  m.finalize();
  return m;
}

void LatentModel::finalize() {
  design_.makeCompressed();
  design_t_ = design_.transpose();
  log_factorial_.resize(response_.size());
  for (Eigen::Index i = 0; i < response_.size(); ++i)
    log_factorial_[i] = family_ == Family::poisson ? std::lgamma(response_[i] + 1.0) : 0.0;
  if (family_ == Family::gaussian && (weight_.array() <= 0.0).any())
    throw ConfigError("gaussian model: observation precisions must be > 0");
}

SparseMatrix LatentModel::design_rows(const std::vector<std::pair<int, int>>& targets) const {
  if (!covariates_) throw ConfigError("design_rows: model was not built from covariate tables");
  using RowMajorMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor, int>;
  const RowMajorMatrix projector_rows = cell_projector_;
  std::vector<std::size_t> missing;
  std::vector<Triplet> t;
  t.reserve(targets.size() * static_cast<std::size_t>(layout_.n_fixed + layout_.n_seasonal + 3));
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto [cell, month] = targets[i];
    if (!covariates_->has_cell(cell) || month < covariates_->first_month() || month > covariates_->last_month()) {
      missing.push_back(i);
      continue;
    }
    const int row = static_cast<int>(i);
    const int ci = covariates_->cell_index(cell);
    const auto drow = covariates_->dynamic_row(cell, month);
    int col = 0;
    t.emplace_back(row, col++, 1.0);
    if (time_column_ >= 0) t.emplace_back(row, col++, covariates_->dynamic_values()(drow, time_column_));
    for (int j : static_columns_) t.emplace_back(row, col++, covariates_->static_values()(ci, j));
    for (int j : dynamic_columns_) t.emplace_back(row, col++, covariates_->dynamic_values()(drow, j));
    const int lv = calendar_month(month) - 1;
    for (int k = 0; k < layout_.n_seasonal; ++k) t.emplace_back(row, layout_.seasonal_offset() + k, seasonal_->basis(lv, k));
    if (has_spatial(layout_.variant)) {
      const int block = layout_.variant == ModelVariant::shared_spatial ? 0 : year_index(month);
      const int offset = layout_.spatial_offset() + block * layout_.n_mesh;
      for (RowMajorMatrix::InnerIterator it(projector_rows, ci); it; ++it)
        t.emplace_back(row, offset + static_cast<int>(it.col()), it.value());
    }
  }
  if (!missing.empty()) {
    std::ostringstream msg;
    msg << "missing covariates for " << missing.size() << " target(s):";
    for (std::size_t k = 0; k < std::min<std::size_t>(missing.size(), 10); ++k)
      msg << " (cell " << targets[missing[k]].first << ", month " << targets[missing[k]].second << ")";
    throw ConfigError(msg.str());
  }
  SparseMatrix a(static_cast<Eigen::Index>(targets.size()), layout_.dim());
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

namespace {

SparseMatrix scaled_dense_block(const Eigen::MatrixXd& m, double s) { return sparse_from_dense(s * m); }

SparseMatrix diagonal_matrix(int n, double v) {
  SparseMatrix d(n, n);
  d.reserve(Eigen::VectorXi::Constant(n, 1));
  for (int i = 0; i < n; ++i) d.insert(i, i) = v;
  d.makeCompressed();
  return d;
}

}  // namespace

SparseMatrix LatentModel::prior_precision(const Eigen::VectorXd& theta) const {
  const HyperParams h = theta_layout_.decode(theta);
  std::vector<SparseMatrix> blocks;
  blocks.push_back(diagonal_matrix(layout_.n_fixed, priors_.fixed_effect_precision));
  if (layout_.n_seasonal > 0) blocks.push_back(scaled_dense_block(seasonal_->structure, h.seasonal_precision));
  if (has_spatial(layout_.variant)) {
    const SparseMatrix qs = matern_precision({h.range, h.sd}, *fem_);
    switch (layout_.variant) {
      case ModelVariant::shared_spatial: blocks.push_back(qs); break;
      case ModelVariant::independent_yearly:
        for (int y = 0; y < layout_.n_years; ++y) blocks.push_back(qs);
        break;
      case ModelVariant::ar1_yearly: blocks.push_back(kronecker(ar1_precision(h.rho, layout_.n_years), qs)); break;
      case ModelVariant::fixed_only: break;
    }
  }
  return block_diagonal(blocks);
}

double LatentModel::prior_log_determinant(const Eigen::VectorXd& theta) const {
  const HyperParams h = theta_layout_.decode(theta);
  double ld = layout_.n_fixed * std::log(priors_.fixed_effect_precision);
  if (layout_.n_seasonal > 0)
    ld += layout_.n_seasonal * std::log(h.seasonal_precision) + seasonal_->log_det_structure;
  if (has_spatial(layout_.variant)) {
    const SparseCholesky chol(matern_precision({h.range, h.sd}, *fem_));
    const double lds = chol.log_determinant();
    const int ny = layout_.n_years;
    switch (layout_.variant) {
      case ModelVariant::shared_spatial: ld += lds; break;
      case ModelVariant::independent_yearly: ld += ny * lds; break;
      case ModelVariant::ar1_yearly:
        // det(R kron Qs) = det(R)^n det(Qs)^Y, log det R = -(Y - 1) log(1 - rho^2)
        ld += ny * lds - layout_.n_mesh * (ny - 1) * std::log1p(-h.rho * h.rho);
        break;
      case ModelVariant::fixed_only: break;
    }
  }
  return ld;
}

double LatentModel::log_prior_latent(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const {
  if (x.size() != layout_.dim()) throw ConfigError("latent vector has wrong dimension");
  const SparseMatrix q = prior_precision(theta);
  const double quad = x.dot(q * x);
  return 0.5 * prior_log_determinant(theta) - 0.5 * quad - 0.5 * static_cast<double>(x.size()) * std::log(2.0 * M_PI);
}

LikelihoodEval LatentModel::log_likelihood_eta(const Eigen::VectorXd& eta) const {
  const Eigen::Index n = response_.size();
  if (eta.size() != n) throw ConfigError("linear predictor has wrong length");
  LikelihoodEval out;
  out.gradient.resize(n);
  out.neg_hessian.resize(n);
  double total = 0.0;
  if (family_ == Family::poisson) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(eta[i])) throw DomainError("non-finite linear predictor at record " + std::to_string(i));
      const double mu = weight_[i] * std::exp(eta[i]);
      total += response_[i] * eta[i] - mu - log_factorial_[i];
      out.gradient[i] = response_[i] - mu;
      out.neg_hessian[i] = mu;
    }
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isfinite(eta[i])) throw DomainError("non-finite linear predictor at record " + std::to_string(i));
      const double r = response_[i] - eta[i];
      total += 0.5 * std::log(weight_[i] / (2.0 * M_PI)) - 0.5 * weight_[i] * r * r;
      out.gradient[i] = weight_[i] * r;
      out.neg_hessian[i] = weight_[i];
    }
  }
  out.value = std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
  return out;
}

Eigen::VectorXd LatentModel::log_likelihood_gradient(const Eigen::VectorXd& x) const {
  return design_t_ * log_likelihood(x).gradient;
}

double LatentModel::log_joint(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const {
  return log_likelihood(x).value + log_prior_latent(x, theta) + log_prior_hyper(theta, theta_layout_, priors_);
}

}  // namespace firelgcp
