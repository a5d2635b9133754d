#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sandpile/vec2.hpp"

namespace sandpile {

namespace tol {
/// Half-plane and collinearity tolerance for polygon predicates.
inline constexpr double kGeometry = 1e-12;
/// Two candidate minimizers are considered tied when their values differ by
/// less than this.
inline constexpr double kTie = 1e-9;
}  // namespace tol

/// A point on the polygon boundary, parameterized by the edge it lies on.
/// Vertices are always represented with edge_parameter == 0 on the edge that
/// starts at them.
struct BoundaryPoint {
  std::size_t edge_index = 0;
  double edge_parameter = 0.0;
  Vec2 position;
};

/// Result of the wall-taxed escape query.
struct EscapeCost {
  double value = 0.0;
  std::vector<BoundaryPoint> minimizers;
};

/// Convex polygon (counter-clockwise) carrying a non-negative wall height at
/// each vertex, interpolated linearly along the edges.
class ConvexDomain {
 public:
  /// Throws std::invalid_argument when the polygon is not a strictly convex
  /// counter-clockwise polygon with at least three vertices, or when a wall
  /// value is negative or not finite.
  ConvexDomain(std::vector<Vec2> vertices, std::vector<double> wall_values);

  /// Convenience: constant wall height on every vertex.
  static ConvexDomain with_constant_wall(std::vector<Vec2> vertices, double g);

  std::span<const Vec2> vertices() const { return vertices_; }
  std::span<const double> wall_values() const { return wall_values_; }
  std::size_t edge_count() const { return vertices_.size(); }
  Vec2 edge_start(std::size_t i) const { return vertices_[i]; }
  Vec2 edge_end(std::size_t i) const {
    return vertices_[(i + 1) % vertices_.size()];
  }
  double edge_length(std::size_t i) const {
    return distance(edge_start(i), edge_end(i));
  }

  double area() const { return area_; }
  double perimeter() const { return perimeter_; }
  double diameter() const { return diameter_; }
  Vec2 bbox_min() const { return bbox_min_; }
  Vec2 bbox_max() const { return bbox_max_; }

  /// Closed-polygon membership.
  bool contains(Vec2 x) const;

  /// Euclidean distance from x to the boundary (x inside).
  double boundary_distance(Vec2 x) const;

  /// Nearest boundary points of x, all ties, sorted by (edge, parameter).
  std::vector<BoundaryPoint> p_minus(Vec2 x) const;

  /// min over the boundary of g(b) + |b - y|, together with all its
  /// minimizers (ties within tol::kTie).
  EscapeCost d_g_plus(Vec2 y) const;

  double wall_height(const BoundaryPoint& b) const;
  double wall_height(std::size_t edge, double s) const;

  /// Builds a BoundaryPoint from (edge, parameter), normalizing s == 1 to the
  /// start of the next edge.
  BoundaryPoint boundary_point(std::size_t edge, double s) const;

  /// Arc-length subdivision of every edge into pieces no longer than
  /// spacing. Vertices are always included.
  std::vector<BoundaryPoint> boundary_nodes(double spacing) const;

  /// Largest wall value on the boundary.
  double max_wall() const;

 private:
  std::vector<Vec2> vertices_;
  std::vector<double> wall_values_;
  double area_ = 0.0;
  double perimeter_ = 0.0;
  double diameter_ = 0.0;
  Vec2 bbox_min_;
  Vec2 bbox_max_;
};

/// Sort key used for canonical ordering of boundary points.
bool boundary_less(const BoundaryPoint& a, const BoundaryPoint& b);

}  // namespace sandpile
