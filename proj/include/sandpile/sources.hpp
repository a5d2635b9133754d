#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sandpile/geometry.hpp"

namespace sandpile {

struct PointSource {
  Vec2 location;
  double rate = 0.0;
};

/// Finite set of point sources f = sum_j c_j delta_{y_j} strictly inside a
/// domain. Locations are pairwise distinct and rates positive.
class SourceSet {
 public:
  /// Throws std::invalid_argument on an empty list, a non-positive rate, a
  /// location not strictly inside the domain, or repeated locations.
  SourceSet(std::vector<PointSource> points, const ConvexDomain& domain);

  /// Same as the constructor, but sources sharing a location are merged by
  /// summing their rates (in first-occurrence order).
  static SourceSet merged(std::vector<PointSource> points,
                          const ConvexDomain& domain);

  std::span<const PointSource> points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  const PointSource& operator[](std::size_t j) const { return points_[j]; }
  double total_rate() const { return total_rate_; }
  double max_rate() const;

  /// Copy with every rate multiplied by factor (> 0).
  SourceSet scaled(double factor, const ConvexDomain& domain) const;

 private:
  std::vector<PointSource> points_;
  double total_rate_ = 0.0;
};

/// A non-negative measure to be approximated by point sources.
struct DensitySpec {
  enum class Kind { UniformPolygon, GaussianTruncated, PointList };

  Kind kind = Kind::PointList;
  double total_mass = 0.0;
  /// UniformPolygon: convex counter-clockwise support polygon.
  std::vector<Vec2> polygon;
  /// GaussianTruncated: exp(-|x-center|^2 / (2 sigma^2)) restricted to the
  /// disc of the given radius.
  Vec2 center;
  double sigma = 0.0;
  double radius = 0.0;
  /// PointList: the atoms themselves (total_mass is their sum).
  std::vector<PointSource> points;

  static DensitySpec uniform(std::vector<Vec2> polygon, double total_mass);
  static DensitySpec gaussian(Vec2 center, double sigma, double radius,
                              double total_mass);
  static DensitySpec point_list(std::vector<PointSource> points);

  /// Unnormalized density at x (zero outside the support). Point lists have
  /// no density and return 0.
  double shape(Vec2 x) const;
  bool in_support(Vec2 x) const;
  Vec2 support_min() const;
  Vec2 support_max() const;
};

/// Centroidal binning of f on a ceil(sqrt(n)) x ceil(sqrt(n)) grid over the
/// support's bounding box: one source per nonempty cell, at the cell's mass
/// centroid, carrying the cell's mass. A point list with n >= its size is
/// returned unchanged. Throws std::invalid_argument when n < 1 or when the
/// support is not strictly inside the domain.
SourceSet discretize(const DensitySpec& f, int n, const ConvexDomain& domain);

/// Midpoint-rule atoms of f on a per_axis x per_axis grid over its support
/// box (point lists are returned as-is). Total mass equals f's total mass.
std::vector<PointSource> quadrature_atoms(const DensitySpec& f, int per_axis);

struct Separation {
  double pairwise;  ///< min_{i != j} |y_i - y_j|, +inf for a single source
  double boundary;  ///< min_i dist(y_i, boundary)
  double min() const { return pairwise < boundary ? pairwise : boundary; }
};

Separation min_separation(const SourceSet& s, const ConvexDomain& domain);

/// Sutherland-Hodgman clip of a polygon by a convex counter-clockwise
/// polygon.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject,
                              std::span<const Vec2> clip);

/// Signed area and centroid of a simple polygon.
struct PolygonMoments {
  double area = 0.0;
  Vec2 centroid;
};
PolygonMoments polygon_moments(std::span<const Vec2> poly);

}  // namespace sandpile
