#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "firelgcp/grid.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/spde.hpp"
#include "firelgcp/sparse.hpp"

namespace firelgcp {

/// Count of events in one grid cell over `n_aggregated` months, observed
/// with Poisson mean exposure * Lambda (exposure in km^2 * months).
struct CountRecord {
  int cell_id = 0;
  int month = 1;  // month index, 1 = January of the first year
  long count = 0;
  double exposure = 4.0;
  int n_aggregated = 1;
};

/// Replaces the zero-count months of every (cell, year) by one record at a
/// uniformly drawn month whose exposure is the sum of the replaced
/// exposures. Positive counts are kept unchanged. Output is sorted by
/// (cell_id, month) and depends only on the input and the seed.
std::vector<CountRecord> subsample_zero_months(const std::vector<CountRecord>& records, std::uint64_t seed);

enum class ModelVariant { fixed_only, shared_spatial, independent_yearly, ar1_yearly };

std::string to_string(ModelVariant v);
ModelVariant variant_from_string(const std::string& s);
inline bool has_spatial(ModelVariant v) { return v != ModelVariant::fixed_only; }

/// Prior thresholds: P(range < range0) = range_prob, P(sd > sd0) = sd_prob,
/// P(seasonal marginal variance > seasonal_var0) = seasonal_prob,
/// P(|rho| > rho0) = rho_prob.
struct PriorSpec {
  double fixed_effect_precision = 0.1;
  double range0 = 50.0;
  double range_prob = 0.5;
  double sd0 = 1.0;
  double sd_prob = 0.5;
  double seasonal_var0 = 0.25;
  double seasonal_prob = 0.5;
  double rho0 = 0.5;
  double rho_prob = 0.5;

  void validate() const;
};

struct HyperParams {
  double range = 50.0;
  double sd = 1.0;
  double rho = 0.5;
  double seasonal_precision = 4.0;
};

/// Which hyperparameters a model carries. The transformed vector theta is
/// ordered (log range, log sd, atanh rho, log seasonal precision) with absent
/// entries dropped.
struct ThetaLayout {
  bool spatial = false;
  bool rho = false;
  bool seasonal = false;

  int size() const { return (spatial ? 2 : 0) + (rho ? 1 : 0) + (seasonal ? 1 : 0); }
  Eigen::VectorXd encode(const HyperParams& h) const;
  /// Entries absent from the layout keep the values of `defaults`.
  HyperParams decode(const Eigen::VectorXd& theta, const HyperParams& defaults = {}) const;
  std::vector<std::string> names() const;
};

/// Sum of the log PC prior densities of theta (including the Jacobians of
/// the transforms). Returns -infinity outside the domain.
double log_prior_hyper(const Eigen::VectorXd& theta, const ThetaLayout& layout, const PriorSpec& priors);

/// Stationary AR(1) precision over n time points, scaled so every marginal
/// variance is 1.
SparseMatrix ar1_precision(double rho, int n);

/// Cyclic first-order random walk over n levels restricted to the sum-to-zero
/// subspace: f = basis * u, u ~ N(0, (precision * structure)^{-1}). The
/// structure is scaled to unit generalized variance.
struct CyclicRw1 {
  int levels = 12;
  Eigen::MatrixXd basis;      // levels x (levels - 1), orthonormal columns
  Eigen::MatrixXd structure;  // (levels - 1) x (levels - 1)
  double log_det_structure = 0.0;
  double scale = 1.0;  // factor applied to the raw circulant structure

  static CyclicRw1 make(int levels);
};

struct LikelihoodEval {
  double value = 0.0;
  Eigen::VectorXd gradient;      // d/d eta
  Eigen::VectorXd neg_hessian;   // -d^2/d eta^2 (diagonal, >= 0)
};

enum class Family { poisson, gaussian };

/// Latent vector layout: [fixed effects | seasonal (levels - 1) | spatial].
struct LatentLayout {
  int n_fixed = 0;
  int n_seasonal = 0;  // dimension of the seasonal block (levels - 1), 0 if absent
  int n_mesh = 0;
  int n_years = 0;
  ModelVariant variant = ModelVariant::fixed_only;

  int seasonal_offset() const { return n_fixed; }
  int spatial_offset() const { return n_fixed + n_seasonal; }
  int n_spatial() const;
  int dim() const { return spatial_offset() + n_spatial(); }
};

/// Generic small model: Gaussian fixed effects plus an optional cyclic
/// random walk indexed by `level`. Used for oracles and tests.
struct CustomModelSpec {
  Family family = Family::poisson;
  Eigen::VectorXd response;
  /// Poisson: exposure; Gaussian: observation precision.
  Eigen::VectorXd weight;
  Eigen::MatrixXd fixed_design;  // records x n_fixed
  std::vector<int> level;        // per record, 0-based; empty if no random walk
  int n_levels = 0;              // 0: no random-walk block
  PriorSpec priors;
};

/// Assembled latent Gaussian model. Immutable after construction.
class LatentModel {
 public:
  /// Log-Gaussian Cox process model: fixed effects (intercept, time trend,
  /// all static and non-time dynamic covariates), 12-level cyclic seasonal
  /// effect and the spatial block of `variant`. `covariates` must be
  /// standardized. `mesh` may be null for FIXED_ONLY.
  static LatentModel build(const std::vector<CountRecord>& records, const CovariateTable& covariates,
                           const GridSpec& grid, std::shared_ptr<const Mesh> mesh, ModelVariant variant,
                           const PriorSpec& priors);
  static LatentModel custom(const CustomModelSpec& spec);

  Family family() const { return family_; }
  const LatentLayout& layout() const { return layout_; }
  const ThetaLayout& theta_layout() const { return theta_layout_; }
  const PriorSpec& priors() const { return priors_; }
  const SparseMatrix& design() const { return design_; }
  const SparseMatrix& design_transpose() const { return design_t_; }
  const Eigen::VectorXd& response() const { return response_; }
  const Eigen::VectorXd& weight() const { return weight_; }
  const std::vector<std::string>& fixed_names() const { return fixed_names_; }
  const std::vector<CountRecord>& records() const { return records_; }
  const CyclicRw1* seasonal() const { return seasonal_ ? &*seasonal_ : nullptr; }
  const std::shared_ptr<const Mesh>& mesh() const { return mesh_; }
  std::size_t record_count() const { return static_cast<std::size_t>(response_.size()); }

  /// Prior precision of the full latent vector at theta.
  SparseMatrix prior_precision(const Eigen::VectorXd& theta) const;
  /// log det of prior_precision(theta), computed blockwise.
  double prior_log_determinant(const Eigen::VectorXd& theta) const;
  /// log N(x; 0, Q(theta)^{-1}).
  double log_prior_latent(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const;

  /// Log-likelihood at linear predictor eta = design * x, with derivatives
  /// with respect to eta. Poisson terms include -log(N!).
  LikelihoodEval log_likelihood_eta(const Eigen::VectorXd& eta) const;
  LikelihoodEval log_likelihood(const Eigen::VectorXd& x) const { return log_likelihood_eta(design_ * x); }
  /// Gradient of the log-likelihood with respect to the latent vector.
  Eigen::VectorXd log_likelihood_gradient(const Eigen::VectorXd& x) const;

  /// log p(y | x) + log p(x | theta) + log p(theta).
  double log_joint(const Eigen::VectorXd& x, const Eigen::VectorXd& theta) const;

  /// Predictor rows for (cell_id, month) targets. Throws ConfigError listing
  /// targets without covariates.
  SparseMatrix design_rows(const std::vector<std::pair<int, int>>& targets) const;

  HyperParams hyper_from_theta(const Eigen::VectorXd& theta) const { return theta_layout_.decode(theta); }

 private:
  LatentModel() = default;
  void finalize();

  Family family_ = Family::poisson;
  LatentLayout layout_;
  ThetaLayout theta_layout_;
  PriorSpec priors_;
  SparseMatrix design_;
  SparseMatrix design_t_;
  Eigen::VectorXd response_;
  Eigen::VectorXd weight_;
  Eigen::VectorXd log_factorial_;
  std::vector<std::string> fixed_names_;
  std::vector<CountRecord> records_;
  std::optional<CyclicRw1> seasonal_;
  std::shared_ptr<const Mesh> mesh_;
  std::shared_ptr<const FemMatrices> fem_;
  // covariate access for prediction rows
  std::shared_ptr<const CovariateTable> covariates_;
  std::shared_ptr<const GridSpec> grid_;
  SparseMatrix cell_projector_;  // covariate-table cell index x mesh vertex
  std::vector<int> static_columns_;
  std::vector<int> dynamic_columns_;
  int time_column_ = -1;
};

}  // namespace firelgcp
