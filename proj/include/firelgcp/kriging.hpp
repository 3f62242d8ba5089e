#pragma once

#include <vector>

#include <Eigen/Dense>

#include "firelgcp/variogram.hpp"

namespace firelgcp {

struct SpaceTimeObservation {
  Point2 location;
  int month = 0;
  double value = 0.0;
};

/// Ordinary kriging system for a fixed set of observations, using the
/// covariance C(h, u) = gamma(inf, inf) - gamma(h, u).
class OrdinaryKrigingSystem {
 public:
  OrdinaryKrigingSystem(const VariogramModel& model, std::vector<SpaceTimeObservation> observations);

  struct Solution {
    Eigen::VectorXd weights;
    double lagrange = 0.0;
    double prediction = 0.0;
    double variance = 0.0;
  };
  Solution solve(const Point2& target, int month) const;
  const std::vector<SpaceTimeObservation>& observations() const { return obs_; }
  /// Diagonal jitter added to make the system solvable (0 if none was needed).
  double jitter() const { return jitter_; }

 private:
  VariogramModel model_;
  std::vector<SpaceTimeObservation> obs_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd values_;
  double jitter_ = 0.0;
};

struct KrigingOptions {
  /// Observations within +- time_window months of the target month are used.
  int time_window = 6;
  int threads = 1;
};

struct KrigingResult {
  std::vector<int> months;
  Eigen::MatrixXd prediction;  // targets x months
  Eigen::MatrixXd variance;    // targets x months
};

/// Ordinary kriging of station data at each (target, month). Missing
/// station-months are dropped from the systems.
KrigingResult krige(const VariogramModel& model, const StationData& data, const std::vector<Point2>& targets,
                    const std::vector<int>& months, const KrigingOptions& options = {});

/// Squares predictions back after kriging on the square-root scale.
/// Variances are left on the square-root scale.
void square_back_transform(KrigingResult& result);

}  // namespace firelgcp
