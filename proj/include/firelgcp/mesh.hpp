#pragma once

#include <array>
#include <optional>
#include <vector>

#include "firelgcp/grid.hpp"
#include "firelgcp/sparse.hpp"

namespace firelgcp {

/// Planar triangulation. Triangles are counter-clockwise vertex triples.
struct Mesh {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 3>> triangles;
  double boundary_extension = 0.0;  // km beyond the study region

  std::size_t vertex_count() const { return vertices.size(); }
  double triangle_area(std::size_t t) const;
  double total_area() const;
  double max_edge_length() const;
  /// Throws ConfigError on degenerate or non-conforming triangles.
  void validate() const;
};

struct MeshOptions {
  double max_edge_inner = 12.5;  // km
  double max_edge_outer = 25.0;  // km
  double margin = 75.0;          // km; 1.5 x the 50 km prior median range
};

/// Delaunay triangulation of the bounding box of the active cells extended
/// by `margin` on every side. Triangles touching the inner box have edges
/// <= max_edge_inner, all others <= max_edge_outer.
Mesh build_mesh(const GridSpec& grid, const MeshOptions& options);

/// Point location through a uniform bucket grid.
class TriangleLocator {
 public:
  explicit TriangleLocator(const Mesh& mesh);

  struct Hit {
    int triangle = -1;
    std::array<double, 3> weights{};  // barycentric, sum to 1
  };
  std::optional<Hit> locate(const Point2& p) const;

 private:
  const Mesh* mesh_;
  double x0_ = 0.0, y0_ = 0.0, dx_ = 1.0, dy_ = 1.0;
  int nx_ = 1, ny_ = 1;
  std::vector<std::vector<int>> buckets_;
};

/// Barycentric coordinates of p in triangle t (unnormalized sign preserved).
std::array<double, 3> barycentric(const Mesh& mesh, std::size_t t, const Point2& p);

/// Observation matrix: row i holds the barycentric weights of points[i] in
/// its containing triangle. Throws ConfigError naming the first point that
/// lies outside the mesh.
SparseMatrix projector(const Mesh& mesh, const std::vector<Point2>& points);

}  // namespace firelgcp
