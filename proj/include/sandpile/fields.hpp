#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sandpile/geometry.hpp"
#include "sandpile/integrator.hpp"
#include "sandpile/partition.hpp"
#include "sandpile/sources.hpp"

namespace sandpile {

/// Scalar samples at cell centers. Cells outside the domain hold 0.
struct GridField {
  Grid grid;
  std::vector<double> values;

  double sup_abs() const;
  /// h^2 * sum of inside values.
  double integral() const;
};

struct BoundaryAtom {
  BoundaryPoint point;
  double mass = 0.0;
  std::size_t source = 0;
};

/// Spill measure: finitely many non-negative atoms on the boundary.
struct BoundaryMeasure {
  std::vector<BoundaryAtom> atoms;
  double total_mass() const;
};

/// Rolling-layer measure binned on a grid. `flux` holds, per cell, the sum of
/// deposited mass times the unit ray direction (toward the source).
struct PathMeasure {
  Grid grid;
  std::vector<double> density;
  std::vector<Vec2> flux;
  double total_mass = 0.0;

  double cell_mass(std::size_t cell) const {
    return density[cell] * grid.cell_area();
  }
};

/// Which element of a tied p_g^+ set carries a frozen source's spill.
enum class SpillSelection { First, Last };

/// u(x) = max_j (r_j - |x - y_j|)^+.
double eval_u(const ConeState& state, const SourceSet& sources, Vec2 x);

/// du/dt(x) = c_j / |A_j| on cells of active cone j, else 0.
double eval_dudt(const ConeState& state, const SourceSet& sources,
                 std::span<const double> areas, Vec2 x);

GridField sample_u(const Grid& grid, const ConeState& state,
                   const SourceSet& sources);
GridField sample_dudt(const Grid& grid, const ConeState& state,
                      const SourceSet& sources, std::span<const double> areas);

/// One atom of mass c_j per frozen source, placed on a minimizer of
/// g(b) + |b - y_j| (the first in boundary order by default).
BoundaryMeasure spill_measure(const ConeState& state, const SourceSet& sources,
                              const ConvexDomain& domain,
                              SpillSelection selection = SpillSelection::First);

/// Discretized mu: every labeled cell of an active cone and every spill atom
/// is a point mass w transported to its source; w |x - y| is spread over
/// ceil(|x - y| / h) equal pieces along the segment and binned to cells.
PathMeasure rolling_measure(const ConeState& state, const SourceSet& sources,
                            std::span<const double> areas,
                            const ConvexDomain& domain, const Grid& grid);

/// Stationary profile after every source froze:
/// max_j (d_g^+(y_j) - |x - y_j|)^+.
double equilibrium_field(const SourceSet& sources, const ConvexDomain& domain,
                         Vec2 x);

/// Same, with precomputed thresholds.
double equilibrium_field(const SourceSet& sources,
                         std::span<const double> thresholds, Vec2 x);

}  // namespace sandpile
