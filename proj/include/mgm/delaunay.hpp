#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mgm {

using Point2 = Eigen::Vector2d;

// Undirected Delaunay edges (i < j) of a planar point set, Bowyer-Watson.
// Inputs are assumed to be in general position; fewer than three
// non-collinear points throws.
inline std::vector<std::pair<int, int>> delaunay_edges(const Eigen::MatrixX2d& pts) {
  const int n = static_cast<int>(pts.rows());
  auto cross = [&](const Point2& o, const Point2& a, const Point2& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };

  const Point2 lo = pts.colwise().minCoeff().transpose();
  const Point2 hi = pts.colwise().maxCoeff().transpose();
  const double span = std::max((hi - lo).maxCoeff(), 1e-12);
  {
    bool found = false;
    for (int i = 2; i < n && !found; ++i) {
      for (int j = 1; j < i && !found; ++j) {
        const Point2 a = pts.row(0), b = pts.row(j), c = pts.row(i);
        found = std::abs(cross(a, b, c)) > 1e-12 * span * span;
      }
    }
    if (!found) throw std::invalid_argument("delaunay: need at least 3 non-collinear points");
  }

  std::vector<Point2> v(n + 3);
  for (int i = 0; i < n; ++i) v[i] = pts.row(i);
  const Point2 mid = (lo + hi) / 2.0;
  v[n] = mid + Point2(-20.0 * span, -20.0 * span);
  v[n + 1] = mid + Point2(20.0 * span, -20.0 * span);
  v[n + 2] = mid + Point2(0.0, 20.0 * span);

  using Tri = std::array<int, 3>;
  std::vector<Tri> tris{{n, n + 1, n + 2}};

  auto in_circumcircle = [&](const Tri& t, const Point2& p) {
    Point2 a = v[t[0]], b = v[t[1]], c = v[t[2]];
    if (cross(a, b, c) < 0) std::swap(b, c);
    const double ax = a.x() - p.x(), ay = a.y() - p.y();
    const double bx = b.x() - p.x(), by = b.y() - p.y();
    const double cx = c.x() - p.x(), cy = c.y() - p.y();
    const double det = (ax * ax + ay * ay) * (bx * cy - cx * by) - (bx * bx + by * by) * (ax * cy - cx * ay) +
                       (cx * cx + cy * cy) * (ax * by - bx * ay);
    return det > 0.0;
  };

  for (int p = 0; p < n; ++p) {
    std::vector<Tri> keep;
    std::vector<std::pair<int, int>> edges;
    for (const auto& t : tris) {
      if (in_circumcircle(t, v[p])) {
        for (int e = 0; e < 3; ++e) {
          int a = t[e], b = t[(e + 1) % 3];
          if (a > b) std::swap(a, b);
          edges.emplace_back(a, b);
        }
      } else {
        keep.push_back(t);
      }
    }
    std::sort(edges.begin(), edges.end());
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const bool dup = (e + 1 < edges.size() && edges[e] == edges[e + 1]) || (e > 0 && edges[e] == edges[e - 1]);
      if (!dup) keep.push_back({edges[e].first, edges[e].second, p});
    }
    tris = std::move(keep);
  }

  std::set<std::pair<int, int>> out;
  for (const auto& t : tris) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) continue;
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      out.emplace(a, b);
    }
  }
  return {out.begin(), out.end()};
}

}  // namespace mgm
