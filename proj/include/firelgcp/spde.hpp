#pragma once

#include "firelgcp/mesh.hpp"
#include "firelgcp/sparse.hpp"

namespace firelgcp {

/// Matern hyperparameters with smoothness fixed to 1. `range` is the
/// distance sqrt(8) / kappa at which the correlation has decayed to roughly 0.1.
struct MaternHyper {
  static constexpr double smoothness = 1.0;
  double range = 50.0;  // km
  double sd = 1.0;

  double kappa() const;
  void validate() const;
};

struct FemMatrices {
  SparseMatrix c;  // lumped mass (diagonal)
  SparseMatrix g;  // stiffness
  Eigen::VectorXd c_diagonal;
};

/// Piecewise-linear finite element matrices on the mesh.
FemMatrices fem_matrices(const Mesh& mesh);

/// tau^2 (kappa^4 C + 2 kappa^2 G + G C^{-1} G), with tau chosen so the
/// stationary marginal variance equals sd^2.
SparseMatrix matern_precision(const MaternHyper& hyper, const FemMatrices& fem);

/// Smoothness-1 Matern correlation kappa d K_1(kappa d) at distance d.
double matern_correlation(double distance, double range);

}  // namespace firelgcp
