#include "firelgcp/spde.hpp"

#include <cmath>

#include "firelgcp/error.hpp"

namespace firelgcp {

double MaternHyper::kappa() const { return std::sqrt(8.0 * smoothness) / range; }

void MaternHyper::validate() const {
  if (!std::isfinite(range) || !(range > 0.0)) throw ConfigError("Matern range must be finite and > 0");
  if (!std::isfinite(sd) || !(sd > 0.0)) throw ConfigError("Matern sd must be finite and > 0");
}

FemMatrices fem_matrices(const Mesh& mesh) {
  mesh.validate();
  const auto n = static_cast<Eigen::Index>(mesh.vertex_count());
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(n);
  std::vector<Triplet> g_triplets;
  g_triplets.reserve(mesh.triangles.size() * 9);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& v = mesh.triangles[t];
    const double area = mesh.triangle_area(t);
    // edge vectors opposite each vertex; grad phi_i = perp(e_i) / (2 area)
    std::array<Point2, 3> e;
    for (int k = 0; k < 3; ++k) {
      const Point2& a = mesh.vertices[v[(k + 1) % 3]];
      const Point2& b = mesh.vertices[v[(k + 2) % 3]];
      e[k] = {b.x - a.x, b.y - a.y};
    }
    for (int i = 0; i < 3; ++i) {
      mass[v[i]] += area / 3.0;
      for (int j = 0; j < 3; ++j)
        g_triplets.emplace_back(v[i], v[j], (e[i].x * e[j].x + e[i].y * e[j].y) / (4.0 * area));
    }
  }
  FemMatrices fem;
  fem.c_diagonal = mass;
  fem.c.resize(n, n);
  std::vector<Triplet> c_triplets;
  for (Eigen::Index i = 0; i < n; ++i) c_triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), mass[i]);
  fem.c.setFromTriplets(c_triplets.begin(), c_triplets.end());
  fem.g.resize(n, n);
  fem.g.setFromTriplets(g_triplets.begin(), g_triplets.end());
  return fem;
}

SparseMatrix matern_precision(const MaternHyper& hyper, const FemMatrices& fem) {
  hyper.validate();
  const double kappa = hyper.kappa();
  const double k2 = kappa * kappa;
  // stationary variance Gamma(nu) / (Gamma(nu + 1) 4 pi kappa^(2 nu) tau^2), nu = 1
  const double tau2 = 1.0 / (4.0 * M_PI * k2 * hyper.sd * hyper.sd);
  const Eigen::VectorXd c_inv = fem.c_diagonal.cwiseInverse();
  const SparseMatrix gcg = fem.g * c_inv.asDiagonal() * fem.g;
  SparseMatrix q = k2 * k2 * fem.c + 2.0 * k2 * fem.g + gcg;
  q *= tau2;
  // exact symmetry against rounding in the triple product
  SparseMatrix qt = q.transpose();
  q = 0.5 * (q + qt);
  q.makeCompressed();
  return q;
}

double matern_correlation(double distance, double range) {
  if (distance <= 0.0) return 1.0;
  const double x = std::sqrt(8.0) / range * distance;
  return x * std::cyl_bessel_k(1.0, x);
}

}  // namespace firelgcp
