#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "firelgcp/error.hpp"
#include "firelgcp/mesh.hpp"
#include "firelgcp/rng.hpp"
#include "firelgcp/spde.hpp"

using namespace firelgcp;

namespace {

Mesh unit_right_triangle() {
  Mesh m;
  m.vertices = {{0, 0}, {1, 0}, {0, 1}};
  m.triangles = {{0, 1, 2}};
  return m;
}

int nearest_vertex(const Mesh& m, const Point2& p) {
  int best = 0;
  double bd = 1e300;
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const double d = std::hypot(m.vertices[i].x - p.x, m.vertices[i].y - p.y);
    if (d < bd) {
      bd = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

TEST(Mesh, CoarseSquareHasAtLeastTwoTriangles) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 5, 5);
  const Mesh m = build_mesh(g, {100.0, 100.0, 1.0});
  EXPECT_GE(m.triangles.size(), 2u);
  EXPECT_NO_THROW(m.validate());
}

TEST(Mesh, EdgeBoundsAndCoverage) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 15, 20);
  const MeshOptions o{4.0, 10.0, 15.0};
  const Mesh m = build_mesh(g, o);
  m.validate();
  EXPECT_LE(m.max_edge_length(), o.max_edge_outer + 1e-9);
  const auto ext = g.active_extent();
  const double box = (ext[1].x - ext[0].x + 2 * o.margin) * (ext[1].y - ext[0].y + 2 * o.margin);
  EXPECT_NEAR(m.total_area(), box, 1e-6 * box);
  for (std::size_t t = 0; t < m.triangles.size(); ++t) EXPECT_GT(m.triangle_area(t), 0.0);
}

TEST(Mesh, RegionalExtentGivesHundredsOfNodes) {
  // 200 km x 200 km region of 2 km cells, 12.5 km inner edges
  const GridSpec g = GridSpec::full(0, 0, 2.0, 100, 100);
  const Mesh m = build_mesh(g, {12.5, 25.0, 75.0});
  EXPECT_GE(m.vertex_count(), 100u);
  EXPECT_LE(m.vertex_count(), 5000u);
}

TEST(Mesh, EveryCellCentreInExactlyOneTriangle) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 8, 9);
  const Mesh m = build_mesh(g, {3.0, 8.0, 6.0});
  for (int id : g.active_cells()) {
    const Point2 p = g.cell_center(id);
    int inside = 0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
      const auto b = barycentric(m, t, p);
      if (b[0] > 1e-12 && b[1] > 1e-12 && b[2] > 1e-12) ++inside;
    }
    int on_edge = 0;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
      const auto b = barycentric(m, t, p);
      if (b[0] >= -1e-12 && b[1] >= -1e-12 && b[2] >= -1e-12) ++on_edge;
    }
    // strictly inside one triangle, or on a shared edge or vertex
    EXPECT_TRUE(inside == 1 || (inside == 0 && on_edge >= 2)) << id;
    const auto hit = TriangleLocator(m).locate(p);
    ASSERT_TRUE(hit.has_value());
  }
}

TEST(Fem, UnitRightTriangle) {
  const FemMatrices f = fem_matrices(unit_right_triangle());
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(f.c_diagonal[i], 1.0 / 6.0, 1e-15);
  const Eigen::MatrixXd g = f.g;
  Eigen::Matrix3d expect;
  expect << 1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5;
  EXPECT_LT((g - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Fem, RowSumsAndTotalArea) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 6, 7);
  const Mesh m = build_mesh(g, {3.0, 6.0, 5.0});
  const FemMatrices f = fem_matrices(m);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(m.vertex_count()));
  EXPECT_LT((f.g * ones).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(f.c_diagonal.sum(), m.total_area(), 1e-10 * m.total_area());
  EXPECT_LT(max_asymmetry(f.g), 1e-14);
  const Eigen::MatrixXd gd = f.g;
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gd).eigenvalues().minCoeff(), -1e-10);
}

TEST(MaternPrecision, ScalingSdScalesPrecision) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 5, 5);
  const FemMatrices f = fem_matrices(build_mesh(g, {3.0, 6.0, 5.0}));
  const SparseMatrix q1 = matern_precision({20.0, 1.0}, f);
  const SparseMatrix q3 = matern_precision({20.0, 3.0}, f);
  EXPECT_LT(Eigen::MatrixXd(q1 / 9.0 - q3).cwiseAbs().maxCoeff(), 1e-12 * Eigen::MatrixXd(q3).cwiseAbs().maxCoeff());
  EXPECT_LT(max_asymmetry(q1), 1e-12 * Eigen::MatrixXd(q1).cwiseAbs().maxCoeff());
  EXPECT_THROW(matern_precision({-1.0, 1.0}, f), ConfigError);
  EXPECT_THROW(matern_precision({std::nan(""), 1.0}, f), ConfigError);
}

TEST(MaternPrecision, PatternWithinTwoHops) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 6, 6);
  const Mesh m = build_mesh(g, {3.0, 6.0, 5.0});
  const SparseMatrix q = matern_precision({15.0, 1.0}, fem_matrices(m));
  std::vector<std::set<int>> nb(m.vertex_count());
  for (const auto& t : m.triangles)
    for (int a : t)
      for (int b : t) nb[static_cast<std::size_t>(a)].insert(b);
  for (int k = 0; k < q.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(q, k); it; ++it) {
      const int i = static_cast<int>(it.row()), j = static_cast<int>(it.col());
      bool ok = nb[static_cast<std::size_t>(i)].count(j) > 0;
      for (int mid : nb[static_cast<std::size_t>(i)]) ok = ok || nb[static_cast<std::size_t>(mid)].count(j) > 0;
      EXPECT_TRUE(ok) << i << "," << j;
    }
}

TEST(MaternPrecision, CholeskySucceedsAcrossHyperparameters) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 6, 6);
  const FemMatrices f = fem_matrices(build_mesh(g, {3.0, 6.0, 5.0}));
  for (double range : {0.5, 5.0, 50.0, 500.0})
    for (double sd : {0.01, 1.0, 100.0}) EXPECT_NO_THROW(SparseCholesky c(matern_precision({range, sd}, f)));
}

TEST(MaternPrecision, InteriorVarianceAndBoundaryInflation) {
  // exact marginal variances by selected inversion instead of sampling
  const double range = 10.0, sd = 1.5;
  const GridSpec g = GridSpec::full(0, 0, 2.0, 20, 20);
  const Mesh m = build_mesh(g, {1.5, 4.0, range});
  const SparseMatrix q = matern_precision({range, sd}, fem_matrices(m));
  const SparseCholesky c(q);
  const Eigen::VectorXd v = SelectedInverse(c).diagonal();
  const double centre = v[nearest_vertex(m, {20.0, 20.0})];
  EXPECT_NEAR(centre, sd * sd, 0.15 * sd * sd);
  for (const Point2 corner : {Point2{0, 0}, Point2{40, 0}, Point2{0, 40}, Point2{40, 40}, Point2{20, 0}}) {
    const double b = v[nearest_vertex(m, corner)];
    EXPECT_LE(b / centre, 1.15) << corner.x << "," << corner.y;
  }
}

TEST(MaternCorrelation, Values) {
  EXPECT_DOUBLE_EQ(matern_correlation(0.0, 10.0), 1.0);
  EXPECT_NEAR(matern_correlation(10.0, 10.0), 0.1397, 1e-3);
  EXPECT_GT(matern_correlation(5.0, 10.0), matern_correlation(6.0, 10.0));
}

TEST(Projector, VertexCentroidAndLinearReproduction) {
  const GridSpec g = GridSpec::full(0, 0, 2.0, 5, 5);
  const Mesh m = build_mesh(g, {3.0, 6.0, 5.0});
  const auto& t = m.triangles[3];
  const Point2 a = m.vertices[static_cast<std::size_t>(t[0])], b = m.vertices[static_cast<std::size_t>(t[1])],
               c = m.vertices[static_cast<std::size_t>(t[2])];
  const Point2 centroid{(a.x + b.x + c.x) / 3.0, (a.y + b.y + c.y) / 3.0};
  const Eigen::MatrixXd at_vertex = projector(m, {a});
  EXPECT_NEAR(at_vertex(0, t[0]), 1.0, 1e-12);
  EXPECT_NEAR(at_vertex.sum(), 1.0, 1e-12);
  const Eigen::MatrixXd at_centroid = projector(m, {centroid});
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(at_centroid(0, t[static_cast<std::size_t>(k)]), 1.0 / 3.0, 1e-12);

  CounterRng r(12);
  std::vector<Point2> pts;
  for (int i = 0; i < 200; ++i) pts.push_back({10.0 * r.uniform(), 10.0 * r.uniform()});
  const SparseMatrix p = projector(m, pts);
  Eigen::VectorXd f(static_cast<Eigen::Index>(m.vertex_count()));
  for (std::size_t i = 0; i < m.vertex_count(); ++i) f[static_cast<Eigen::Index>(i)] = 2.0 + 0.3 * m.vertices[i].x - 1.7 * m.vertices[i].y;
  const Eigen::VectorXd got = p * f;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(got[static_cast<Eigen::Index>(i)], 2.0 + 0.3 * pts[i].x - 1.7 * pts[i].y, 1e-12);
    const Eigen::RowVectorXd row = Eigen::MatrixXd(p).row(static_cast<Eigen::Index>(i));
    EXPECT_NEAR(row.sum(), 1.0, 1e-12);
    EXPECT_LE((row.array() != 0.0).count(), 3);
  }
}

TEST(Projector, OutsidePointNamed) {
  const Mesh m = unit_right_triangle();
  try {
    projector(m, {{0.2, 0.2}, {5.0, 5.0}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos);
  }
}
