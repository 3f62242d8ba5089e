#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace firelgcp {

struct NelderMeadOptions {
  int max_evaluations = 2000;
  /// Stop when the spread of objective values over the simplex falls below this.
  double f_tolerance = 1e-8;
  /// Stop when the simplex diameter falls below this.
  double x_tolerance = 1e-10;
  double initial_step = 0.2;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Minimizes `f` starting from `x0`. Non-finite objective values are treated
/// as +infinity so callers can encode constraints by returning NaN/inf.
NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0, const NelderMeadOptions& options);

/// Central-difference Hessian of `f` at `x` with per-coordinate step `h`.
Eigen::MatrixXd finite_difference_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                                          const Eigen::VectorXd& x, double h);

}  // namespace firelgcp
