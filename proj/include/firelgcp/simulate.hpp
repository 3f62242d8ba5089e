#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "firelgcp/grid.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/model.hpp"
#include "firelgcp/sparse.hpp"
#include "firelgcp/variogram.hpp"

namespace firelgcp {

/// n x n_samples matrix of draws from N(0, Q^{-1}). Column s uses RNG
/// stream s of `seed`.
Eigen::MatrixXd sample_gmrf(const SparseMatrix& precision, int n_samples, std::uint64_t seed);

enum class CovariateKind { white_noise, smooth_field, constant };

struct CovariateGenerator {
  std::string name;
  CovariateKind kind = CovariateKind::white_noise;
  bool dynamic = false;  // varies by month
  double value = 0.0;    // constant kind
  double range = 20.0;   // smooth kind, km
};

struct SimConfig {
  int n_rows = 10;
  int n_cols = 10;
  double cell_size = 2.0;  // km
  Point2 origin{0.0, 0.0};
  int years = 2;
  int months_per_year = 12;
  /// Intercept first, then the time trend when include_time, then the
  /// static generators, then the dynamic ones (the model's column order).
  std::vector<double> beta{-3.0};
  bool include_time = false;
  std::vector<double> seasonal = std::vector<double>(12, 0.0);
  ModelVariant variant = ModelVariant::fixed_only;
  HyperParams hyper{20.0, 1.36, 0.89, 4.0};
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<CovariateGenerator> covariates;
  MeshOptions mesh{4.0, 10.0, 20.0};
  double exposure = 4.0;  // km^2 per cell-month

  void validate() const;
  int month_count() const { return years * months_per_year; }
};

struct SimTruth {
  std::vector<std::string> beta_names;
  std::vector<double> beta;
  std::vector<double> seasonal;
  HyperParams hyper;
  ModelVariant variant = ModelVariant::fixed_only;
  /// cells x (1 or years) spatial effect at the cell centres.
  Eigen::MatrixXd spatial;
  /// Mesh-vertex field, n_mesh x (1 or years).
  Eigen::MatrixXd mesh_field;
  /// Linear predictor per record (same order as the records).
  Eigen::VectorXd eta;
};

struct SimDataset {
  GridSpec grid;
  std::vector<CountRecord> records;  // every active cell x month, sorted by (cell, month)
  CovariateTable covariates;
  std::shared_ptr<const Mesh> mesh;
  SimTruth truth;
};

/// Draws covariates, latent effects and Poisson(exposure * exp(eta)) counts.
/// Throws DomainError when some eta exceeds 30.
SimDataset simulate_dataset(const SimConfig& config);

/// Centred seasonal effect with cyclic Gaussian bumps at two calendar
/// months; the first peak is the higher one.
std::vector<double> two_peak_seasonal(int first_peak, int second_peak, double amplitude);

/// Intercept shift s such that the mean of exp(-exposure * exp(eta + s))
/// equals `zero_fraction` (bisection).
double intercept_shift_for_zero_fraction(const Eigen::VectorXd& eta, double exposure, double zero_fraction);

/// Station series from a space-time variogram model plus a constant mean.
StationData simulate_stations(const VariogramModel& model, const std::vector<Point2>& locations, int months,
                              double mean, std::uint64_t seed, const std::string& variable = "SIM");

struct LatentAxis {
  double lower = -5.0;
  double upper = 5.0;
  int points = 201;
};

struct BruteForcePosterior {
  std::vector<Eigen::VectorXd> thetas;
  /// log p(y | theta) by trapezoidal integration over the latent grid.
  std::vector<double> log_marginal;
  /// p(theta | y) over the supplied theta values, summing to 1.
  std::vector<double> theta_posterior;
  /// Normalized latent density on the grid for each theta (row-major over
  /// the axes, first axis slowest).
  std::vector<std::vector<double>> latent_density;
  std::vector<LatentAxis> axes;
};

/// Direct quadrature oracle for models with latent dimension <= 3.
BruteForcePosterior brute_force_posterior(const LatentModel& model, const std::vector<Eigen::VectorXd>& thetas,
                                          const std::vector<LatentAxis>& axes);

/// Trapezoid integral of a density table produced by brute_force_posterior.
double integrate_grid(const std::vector<double>& values, const std::vector<LatentAxis>& axes);

}  // namespace firelgcp
