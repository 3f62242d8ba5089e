#include "firelgcp/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <unordered_map>

#include "firelgcp/error.hpp"

namespace firelgcp {

namespace {

double orient(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

// > 0 when d lies inside the circumcircle of the counter-clockwise triangle abc.
double incircle(const Point2& a, const Point2& b, const Point2& c, const Point2& d) {
  const double adx = a.x - d.x, ady = a.y - d.y;
  const double bdx = b.x - d.x, bdy = b.y - d.y;
  const double cdx = c.x - d.x, cdy = c.y - d.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

double dist(const Point2& a, const Point2& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Incremental Bowyer-Watson triangulation of a rectangle. The rectangle
// corners are the first four vertices; every inserted point must lie in it.
class Delaunay {
 public:
  Delaunay(Point2 lo, Point2 hi) {
    const double scale = std::max(hi.x - lo.x, hi.y - lo.y);
    eps_orient_ = 1e-12 * scale * scale;
    eps_circle_ = 1e-12 * scale * scale * scale * scale;
    eps_point_ = 1e-9 * scale;
    pts_ = {lo, {hi.x, lo.y}, hi, {lo.x, hi.y}};
    tri_ = {{0, 1, 2}, {0, 2, 3}};
    nb_ = {{-1, 1, -1}, {-1, -1, 0}};
    alive_ = {1, 1};
  }

  int insert(const Point2& p) {
    int t0 = locate(p);
    if (t0 < 0) throw ConfigError("mesh: point outside the triangulation domain");
    for (int v : tri_[t0])
      if (dist(pts_[v], p) < eps_point_) return v;

    const int vp = static_cast<int>(pts_.size());
    pts_.push_back(p);

    std::vector<int> cavity{t0};
    std::vector<char> in_cavity(tri_.size(), 0);
    in_cavity[t0] = 1;
    // p on an interior edge of t0: the neighbor must be re-triangulated too
    for (int k = 0; k < 3; ++k) {
      const int n = nb_[t0][k];
      if (n >= 0 && std::fabs(orient(pts_[tri_[t0][(k + 1) % 3]], pts_[tri_[t0][(k + 2) % 3]], p)) <= eps_orient_ &&
          !in_cavity[n]) {
        in_cavity[n] = 1;
        cavity.push_back(n);
      }
    }
    for (std::size_t i = 0; i < cavity.size(); ++i) {
      const int t = cavity[i];
      for (int k = 0; k < 3; ++k) {
        const int n = nb_[t][k];
        if (n < 0 || in_cavity[n]) continue;
        const auto& v = tri_[n];
        if (incircle(pts_[v[0]], pts_[v[1]], pts_[v[2]], p) > eps_circle_) {
          in_cavity[n] = 1;
          cavity.push_back(n);
        }
      }
    }

    struct Edge {
      int a, b, outside, from;
    };
    std::vector<Edge> boundary;
    while (true) {
      boundary.clear();
      int offending = -1;
      for (int t : cavity) {
        if (!in_cavity[t]) continue;
        for (int k = 0; k < 3; ++k) {
          const int n = nb_[t][k];
          if (n >= 0 && in_cavity[n]) continue;
          const int a = tri_[t][(k + 1) % 3];
          const int b = tri_[t][(k + 2) % 3];
          const double o = orient(pts_[a], pts_[b], p);
          if (n < 0 && std::fabs(o) <= eps_orient_) continue;  // p on the hull edge: edge is split
          if (o <= eps_orient_) offending = t;
          boundary.push_back({a, b, n, t});
        }
      }
      if (offending < 0) break;
      if (offending == t0) throw NumericalError("mesh: cannot insert point, degenerate cavity");
      in_cavity[offending] = 0;
    }

    std::map<int, int> by_a, by_b;  // vertex -> new triangle with that vertex as a / b
    std::vector<int> created;
    for (const auto& e : boundary) {
      const int nt = static_cast<int>(tri_.size());
      tri_.push_back({e.a, e.b, vp});
      nb_.push_back({-1, -1, e.outside});
      alive_.push_back(1);
      if (e.outside >= 0)
        for (int k = 0; k < 3; ++k)
          if (nb_[e.outside][k] == e.from) nb_[e.outside][k] = nt;
      by_a[e.a] = nt;
      by_b[e.b] = nt;
      created.push_back(nt);
    }
    for (int nt : created) {
      const int a = tri_[nt][0];
      const int b = tri_[nt][1];
      // edge (b, p) opposite a is shared with the triangle whose a == b
      if (auto it = by_a.find(b); it != by_a.end()) nb_[nt][0] = it->second;
      // edge (p, a) opposite b is shared with the triangle whose b == a
      if (auto it = by_b.find(a); it != by_b.end()) nb_[nt][1] = it->second;
    }
    for (int t : cavity)
      if (in_cavity[t]) alive_[t] = 0;
    if (!created.empty()) hint_ = created.front();
    return vp;
  }

  int locate(const Point2& p) const {
    int t = hint_;
    if (t < 0 || !alive_[t]) t = first_alive();
    for (std::size_t steps = 0; steps < 4 * tri_.size() + 16; ++steps) {
      bool moved = false;
      for (int k = 0; k < 3; ++k) {
        const auto& v = tri_[t];
        if (orient(pts_[v[(k + 1) % 3]], pts_[v[(k + 2) % 3]], p) < -eps_orient_) {
          const int n = nb_[t][k];
          if (n < 0) return -1;
          t = n;
          moved = true;
          break;
        }
      }
      if (!moved) return t;
    }
    // walking can cycle only in pathological cases; fall back to a scan
    for (std::size_t i = 0; i < tri_.size(); ++i) {
      if (!alive_[i]) continue;
      const auto& v = tri_[i];
      if (orient(pts_[v[0]], pts_[v[1]], p) >= -eps_orient_ && orient(pts_[v[1]], pts_[v[2]], p) >= -eps_orient_ &&
          orient(pts_[v[2]], pts_[v[0]], p) >= -eps_orient_)
        return static_cast<int>(i);
    }
    return -1;
  }

  Mesh to_mesh() const {
    Mesh m;
    m.vertices = pts_;
    for (std::size_t i = 0; i < tri_.size(); ++i)
      if (alive_[i]) m.triangles.push_back(tri_[i]);
    return m;
  }

  std::vector<int> alive_triangles() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < tri_.size(); ++i)
      if (alive_[i]) out.push_back(static_cast<int>(i));
    return out;
  }
  bool alive(int t) const { return alive_[t] != 0; }
  const std::array<int, 3>& triangle(int t) const { return tri_[t]; }
  const Point2& point(int v) const { return pts_[v]; }

 private:
  int first_alive() const {
    for (std::size_t i = 0; i < alive_.size(); ++i)
      if (alive_[i]) return static_cast<int>(i);
    return -1;
  }

  std::vector<Point2> pts_;
  std::vector<std::array<int, 3>> tri_;
  std::vector<std::array<int, 3>> nb_;
  std::vector<char> alive_;
  int hint_ = 0;
  double eps_orient_ = 0.0;
  double eps_circle_ = 0.0;
  double eps_point_ = 0.0;
};

// Triangular lattice with spacing h over [lo, hi]; rows in boustrophedon order.
std::vector<Point2> lattice(Point2 lo, Point2 hi, double h, Point2 offset) {
  std::vector<Point2> out;
  const double dy = h * std::sqrt(3.0) / 2.0;
  const int rows = static_cast<int>(std::floor((hi.y - lo.y - offset.y) / dy)) + 1;
  for (int r = 0; r < rows; ++r) {
    const double y = lo.y + offset.y + r * dy;
    const double shift = (r % 2 == 0 ? 0.0 : 0.5 * h) + offset.x;
    std::vector<Point2> row;
    for (double x = lo.x + shift; x <= hi.x + 1e-9 * h; x += h) row.push_back({x, y});
    if (r % 2 == 1) std::reverse(row.begin(), row.end());
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

}  // namespace

double Mesh::triangle_area(std::size_t t) const {
  const auto& v = triangles[t];
  return 0.5 * orient(vertices[v[0]], vertices[v[1]], vertices[v[2]]);
}

double Mesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles.size(); ++t) a += triangle_area(t);
  return a;
}

double Mesh::max_edge_length() const {
  double m = 0.0;
  for (const auto& v : triangles)
    for (int k = 0; k < 3; ++k) m = std::max(m, dist(vertices[v[k]], vertices[v[(k + 1) % 3]]));
  return m;
}

void Mesh::validate() const {
  if (triangles.empty()) throw ConfigError("mesh: no triangles");
  std::map<std::pair<int, int>, int> directed;
  const auto nv = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& v = triangles[t];
    for (int k = 0; k < 3; ++k)
      if (v[k] < 0 || v[k] >= nv) throw ConfigError("mesh: triangle " + std::to_string(t) + " has invalid vertex index");
    if (!(triangle_area(t) > 0.0)) throw ConfigError("mesh: triangle " + std::to_string(t) + " is degenerate or clockwise");
    for (int k = 0; k < 3; ++k)
      if (++directed[{v[k], v[(k + 1) % 3]}] > 1)
        throw ConfigError("mesh: edge shared inconsistently at triangle " + std::to_string(t));
  }
}

Mesh build_mesh(const GridSpec& grid, const MeshOptions& options) {
  if (!(options.margin > 0.0)) throw ConfigError("build_mesh: margin must be > 0");
  if (!(options.max_edge_inner > 0.0) || !(options.max_edge_outer >= options.max_edge_inner))
    throw ConfigError("build_mesh: need 0 < max_edge_inner <= max_edge_outer");
  const auto [inner_lo, inner_hi] = grid.active_extent();
  const Point2 lo{inner_lo.x - options.margin, inner_lo.y - options.margin};
  const Point2 hi{inner_hi.x + options.margin, inner_hi.y + options.margin};
  const double h_in = options.max_edge_inner;
  const double h_out = options.max_edge_outer;
  const double span = std::max(hi.x - lo.x, hi.y - lo.y);
  if (span / h_in > 4000.0) throw ConfigError("build_mesh: max_edge_inner too small for the region");

  Delaunay dt(lo, hi);

  // outer rectangle boundary
  for (int side = 0; side < 4; ++side) {
    const Point2 a = side == 0 ? lo : side == 1 ? Point2{hi.x, lo.y} : side == 2 ? hi : Point2{lo.x, hi.y};
    const Point2 b = side == 0 ? Point2{hi.x, lo.y} : side == 1 ? hi : side == 2 ? Point2{lo.x, hi.y} : lo;
    const int n = static_cast<int>(std::ceil(dist(a, b) / h_out));
    for (int i = 1; i < n; ++i) dt.insert({a.x + (b.x - a.x) * i / n, a.y + (b.y - a.y) * i / n});
  }
  // coarse lattice in the extension band
  const double guard = 0.5 * h_out;
  for (const auto& p : lattice(lo, hi, h_out, {0.5 * h_out, 0.5 * h_out})) {
    if (p.x <= lo.x + 0.25 * h_out || p.x >= hi.x - 0.25 * h_out || p.y <= lo.y + 0.25 * h_out ||
        p.y >= hi.y - 0.25 * h_out)
      continue;
    if (p.x > inner_lo.x - guard && p.x < inner_hi.x + guard && p.y > inner_lo.y - guard && p.y < inner_hi.y + guard)
      continue;
    dt.insert(p);
  }
  // fine lattice over the study region; the offset keeps lattice lines off cell centers
  const Point2 inner_pad_lo{inner_lo.x - 0.5 * h_in, inner_lo.y - 0.5 * h_in};
  const Point2 inner_pad_hi{inner_hi.x + 0.5 * h_in, inner_hi.y + 0.5 * h_in};
  for (const auto& p : lattice(inner_pad_lo, inner_pad_hi, h_in, {0.1372 * h_in, 0.2913 * h_in}))
    if (p.x > lo.x && p.x < hi.x && p.y > lo.y && p.y < hi.y) dt.insert(p);

  auto limit_for = [&](const std::array<int, 3>& v) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (int k = 0; k < 3; ++k) {
      const auto& p = dt.point(v[k]);
      x0 = std::min(x0, p.x);
      x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y);
      y1 = std::max(y1, p.y);
    }
    const bool touches_inner = x1 >= inner_lo.x && x0 <= inner_hi.x && y1 >= inner_lo.y && y0 <= inner_hi.y;
    return touches_inner ? h_in : h_out;
  };

  // refine: split the longest edge of any triangle that is too long
  for (int pass = 0; pass < 200; ++pass) {
    bool changed = false;
    for (int t : dt.alive_triangles()) {
      if (!dt.alive(t)) continue;
      const auto v = dt.triangle(t);
      int worst = -1;
      double worst_len = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double len = dist(dt.point(v[k]), dt.point(v[(k + 1) % 3]));
        if (len > worst_len) {
          worst_len = len;
          worst = k;
        }
      }
      if (worst_len <= limit_for(v) * (1.0 + 1e-9)) continue;
      const Point2& a = dt.point(v[worst]);
      const Point2& b = dt.point(v[(worst + 1) % 3]);
      dt.insert({0.5 * (a.x + b.x), 0.5 * (a.y + b.y)});
      changed = true;
    }
    if (!changed) break;
    if (pass == 199) throw NumericalError("build_mesh: refinement did not terminate");
  }

  Mesh mesh = dt.to_mesh();
  // drop vertices not referenced by any triangle (none expected) and renumber densely
  std::vector<int> remap(mesh.vertices.size(), -1);
  std::vector<Point2> used;
  for (auto& tri : mesh.triangles)
    for (int& v : tri) {
      if (remap[static_cast<std::size_t>(v)] < 0) {
        remap[static_cast<std::size_t>(v)] = static_cast<int>(used.size());
        used.push_back(mesh.vertices[static_cast<std::size_t>(v)]);
      }
      v = remap[static_cast<std::size_t>(v)];
    }
  mesh.vertices = std::move(used);
  mesh.boundary_extension = options.margin;
  mesh.validate();
  return mesh;
}

std::array<double, 3> barycentric(const Mesh& mesh, std::size_t t, const Point2& p) {
  const auto& v = mesh.triangles[t];
  const Point2& a = mesh.vertices[v[0]];
  const Point2& b = mesh.vertices[v[1]];
  const Point2& c = mesh.vertices[v[2]];
  const double area2 = orient(a, b, c);
  return {orient(b, c, p) / area2, orient(c, a, p) / area2, orient(a, b, p) / area2};
}

TriangleLocator::TriangleLocator(const Mesh& mesh) : mesh_(&mesh) {
  if (mesh.triangles.empty()) throw ConfigError("TriangleLocator: empty mesh");
  double x1 = -1e300, y1 = -1e300;
  x0_ = y0_ = 1e300;
  for (const auto& p : mesh.vertices) {
    x0_ = std::min(x0_, p.x);
    y0_ = std::min(y0_, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  }
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.triangles.size()))));
  nx_ = ny_ = side;
  dx_ = std::max((x1 - x0_) / nx_, 1e-12);
  dy_ = std::max((y1 - y0_) / ny_, 1e-12);
  buckets_.assign(static_cast<std::size_t>(nx_) * ny_, {});
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    double bx0 = 1e300, bx1 = -1e300, by0 = 1e300, by1 = -1e300;
    for (int v : mesh.triangles[t]) {
      bx0 = std::min(bx0, mesh.vertices[v].x);
      bx1 = std::max(bx1, mesh.vertices[v].x);
      by0 = std::min(by0, mesh.vertices[v].y);
      by1 = std::max(by1, mesh.vertices[v].y);
    }
    const int i0 = std::clamp(static_cast<int>((bx0 - x0_) / dx_), 0, nx_ - 1);
    const int i1 = std::clamp(static_cast<int>((bx1 - x0_) / dx_), 0, nx_ - 1);
    const int j0 = std::clamp(static_cast<int>((by0 - y0_) / dy_), 0, ny_ - 1);
    const int j1 = std::clamp(static_cast<int>((by1 - y0_) / dy_), 0, ny_ - 1);
    for (int j = j0; j <= j1; ++j)
      for (int i = i0; i <= i1; ++i) buckets_[static_cast<std::size_t>(j) * nx_ + i].push_back(static_cast<int>(t));
  }
}

std::optional<TriangleLocator::Hit> TriangleLocator::locate(const Point2& p) const {
  const double fx = (p.x - x0_) / dx_;
  const double fy = (p.y - y0_) / dy_;
  if (fx < -1e-9 || fy < -1e-9 || fx > nx_ + 1e-9 || fy > ny_ + 1e-9) return std::nullopt;
  const int i = std::clamp(static_cast<int>(fx), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(fy), 0, ny_ - 1);
  Hit best;
  double best_min = -1e-10;
  for (int t : buckets_[static_cast<std::size_t>(j) * nx_ + i]) {
    const auto w = barycentric(*mesh_, static_cast<std::size_t>(t), p);
    const double m = std::min({w[0], w[1], w[2]});
    if (m >= best_min) {
      best_min = m;
      best.triangle = t;
      best.weights = w;
    }
  }
  if (best.triangle < 0) return std::nullopt;
  for (double& w : best.weights) w = std::max(w, 0.0);
  const double s = best.weights[0] + best.weights[1] + best.weights[2];
  for (double& w : best.weights) w /= s;
  return best;
}

SparseMatrix projector(const Mesh& mesh, const std::vector<Point2>& points) {
  const TriangleLocator locator(mesh);
  std::vector<Triplet> triplets;
  triplets.reserve(points.size() * 3);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto hit = locator.locate(points[i]);
    if (!hit) {
      std::ostringstream msg;
      msg << "projector: point " << i << " (" << points[i].x << ", " << points[i].y << ") lies outside the mesh";
      throw ConfigError(msg.str());
    }
    const auto& v = mesh.triangles[static_cast<std::size_t>(hit->triangle)];
    for (int k = 0; k < 3; ++k)
      if (hit->weights[k] != 0.0) triplets.emplace_back(static_cast<int>(i), v[k], hit->weights[k]);
  }
  SparseMatrix a(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(mesh.vertex_count()));
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

}  // namespace firelgcp
