#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sandpile/geometry.hpp"
#include "sandpile/sources.hpp"

namespace sandpile {

/// Uniform cell grid over the bounding box of a domain. A cell is "inside"
/// when its center lies in the closed domain.
class Grid {
 public:
  Grid() = default;
  static Grid cover(const ConvexDomain& domain, double h);

  Vec2 origin() const { return origin_; }
  double spacing() const { return h_; }
  double cell_area() const { return h_ * h_; }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t cell_count() const { return inside_.size(); }
  std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(nx_) +
           static_cast<std::size_t>(i);
  }
  Vec2 center(int i, int j) const {
    return {origin_.x + (i + 0.5) * h_, origin_.y + (j + 0.5) * h_};
  }
  Vec2 center(std::size_t cell) const {
    return center(static_cast<int>(cell % static_cast<std::size_t>(nx_)),
                  static_cast<int>(cell / static_cast<std::size_t>(nx_)));
  }
  bool inside(std::size_t cell) const { return inside_[cell] != 0; }
  std::size_t inside_count() const { return inside_count_; }

  /// Cell containing x, clamped to the grid.
  std::size_t locate(Vec2 x) const;

 private:
  Vec2 origin_;
  double h_ = 0.0;
  int nx_ = 0;
  int ny_ = 0;
  std::vector<std::uint8_t> inside_;
  std::size_t inside_count_ = 0;
};

inline constexpr int kNoLabel = -1;

/// Cells A_j: each inside cell is labeled with the cone that dominates its
/// center, or kNoLabel where every cone is at or below zero height.
struct Partition {
  std::vector<int> label;               ///< per grid cell
  std::vector<std::int64_t> counts;     ///< labeled cells per source
  std::vector<double> areas;            ///< counts * h^2
  double total_area() const;
};

/// Thrown when an active cone has no grid cell even after one refinement.
class AreaFloorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Labels every inside cell center x with argmax_j (r_j - |x - y_j|) when the
/// max is positive (lowest index wins ties). Rows are split across `threads`
/// workers; the result does not depend on the worker count.
Partition partition(const Grid& grid, const SourceSet& sources,
                    std::span<const double> radii, int threads = 1);

/// Label of a single point, using the same rule as partition().
int dominant_cone(const SourceSet& sources, std::span<const double> radii,
                  Vec2 x);

/// Refines the grid by halving h until every cone with r_j > 0 changes area by
/// less than target_rel_err relatively between successive levels. Throws
/// std::runtime_error if h would drop below floor_fraction * diam without
/// converging. The default start is 1/32 of the longer bounding-box side, so
/// every level tiles the box exactly.
std::vector<double> area_refined(const ConvexDomain& domain,
                                 const SourceSet& sources,
                                 std::span<const double> radii,
                                 double target_rel_err,
                                 std::optional<double> initial_h = {},
                                 double floor_fraction = 1e-5);

}  // namespace sandpile
