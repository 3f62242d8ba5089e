#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "firelgcp/model.hpp"
#include "firelgcp/sparse.hpp"

namespace firelgcp {

struct NewtonOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-6;  // max-norm
  double step_tolerance = 1e-8;      // Euclidean norm
  int max_halvings = 40;
};

/// Mode of p(x | y, theta) and the Gaussian approximation around it.
struct InnerResult {
  Eigen::VectorXd mode;
  SparseMatrix hessian;  // Q(theta) + A' D A at the mode
  std::shared_ptr<SparseCholesky> chol;
  double log_det_hessian = 0.0;
  double log_det_prior = 0.0;
  double log_likelihood = 0.0;
  double quadratic = 0.0;  // x' Q x
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;  // log p(y|x) - x'Qx/2 after each accepted step
};

/// Gradient of log p(y|x) + log p(x|theta) with respect to x.
Eigen::VectorXd latent_gradient(const LatentModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& theta);
/// Negative Hessian of log p(y|x) + log p(x|theta) with respect to x.
SparseMatrix latent_negative_hessian(const LatentModel& model, const Eigen::VectorXd& x, const Eigen::VectorXd& theta);

/// Newton iterations with step halving. Throws NumericalError (with the
/// objective trace in the diagnostics) when it does not converge.
InnerResult inner_mode(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& options = {},
                       const Eigen::VectorXd* start = nullptr);

/// Laplace approximation of log p(y | theta). `inner` receives the mode.
double log_marginal_laplace(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& options = {},
                            const Eigen::VectorXd* start = nullptr, InnerResult* inner = nullptr);

/// Gaussian approximation N(mode, H^{-1}) with marginal variances from the
/// selected inverse.
class GaussianApproximation {
 public:
  explicit GaussianApproximation(InnerResult inner);

  const Eigen::VectorXd& mean() const { return inner_.mode; }
  const Eigen::VectorXd& variance() const { return variance_; }
  const InnerResult& inner() const { return inner_; }
  /// Covariance entry; uses a sparse solve when outside the selected pattern.
  double covariance(int i, int j) const;
  /// Variance of a' x for each row a of `rows`.
  Eigen::VectorXd linear_combination_variance(const SparseMatrix& rows) const;

 private:
  InnerResult inner_;
  std::unique_ptr<SelectedInverse> selected_;
  Eigen::VectorXd variance_;
};

struct FitOptions {
  NewtonOptions newton;
  /// Maximum number of log-marginal evaluations in the outer search.
  int budget = 400;
  int restarts = 3;
  double initial_step = 0.5;
  double f_tolerance = 1e-6;
  double hessian_step = 1e-2;
  bool standard_errors = true;
};

struct HyperEstimate {
  std::string name;
  double theta = 0.0;
  double theta_se = 0.0;
  double value = 0.0;  // natural scale
  double se = 0.0;     // delta method
  double lower = 0.0;  // 95% interval mapped from the theta scale
  double upper = 0.0;
};

struct FixedEffectSummary {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool significant = false;  // interval excludes 0
};

struct FitDiagnostics {
  int outer_evaluations = 0;
  int newton_iterations = 0;  // at the mode
  double gradient_norm = 0.0;  // inner gradient max-norm at the mode
  bool converged = false;
  bool hessian_positive = false;
  std::string message;
};

struct FitResult {
  ModelVariant variant = ModelVariant::fixed_only;
  std::vector<std::string> theta_names;
  Eigen::VectorXd theta_hat;
  Eigen::MatrixXd theta_covariance;
  std::vector<HyperEstimate> hyper;
  Eigen::VectorXd latent_mean;
  Eigen::VectorXd latent_sd;
  std::vector<FixedEffectSummary> fixed_effects;
  /// log p(y) with theta integrated by a Laplace step around theta_hat.
  double log_marginal = 0.0;
  /// log p(y | theta_hat).
  double log_marginal_at_mode = 0.0;
  /// log p(y | theta_hat) + log p(theta_hat).
  double log_posterior_mode = 0.0;
  FitDiagnostics diagnostics;
  std::shared_ptr<const GaussianApproximation> approximation;
};

/// Empirical-Bayes fit: maximizes log p(y|theta) + log p(theta) by
/// Nelder-Mead within the evaluation budget.
FitResult fit(const LatentModel& model, const Eigen::VectorXd& theta_init, const FitOptions& options = {});

/// Summaries at a given theta without outer optimization.
FitResult summarize_at(const LatentModel& model, const Eigen::VectorXd& theta, const NewtonOptions& newton = {});

struct IntensityPrediction {
  std::vector<std::pair<int, int>> targets;  // (cell_id, month)
  Eigen::VectorXd mean;  // posterior mean of log intensity per km^2 and month
  Eigen::VectorXd sd;
};

IntensityPrediction predict_intensity(const FitResult& fit, const LatentModel& model,
                                      const std::vector<std::pair<int, int>>& targets);
/// Same from explicit predictor rows.
IntensityPrediction predict_rows(const GaussianApproximation& approx, const SparseMatrix& rows);

struct OddsRatio {
  int month = 1;
  double ratio = 1.0;
  double lower = 1.0;
  double upper = 1.0;
};

/// exp(f(m) - f(reference)) for m = 1..levels with 95% bands.
std::vector<OddsRatio> seasonal_odds_ratio(const FitResult& fit, const LatentModel& model, int reference_month);

}  // namespace firelgcp
