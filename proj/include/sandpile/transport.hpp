#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sandpile/fields.hpp"
#include "sandpile/geometry.hpp"
#include "sandpile/integrator.hpp"
#include "sandpile/partition.hpp"
#include "sandpile/sources.hpp"

namespace sandpile {

struct MassNode {
  Vec2 location;
  double mass = 0.0;
};

/// A boundary sink with unlimited capacity; shipping into it costs
/// |y - b| + wall.
struct BoundaryNode {
  BoundaryPoint point;
  double wall = 0.0;
  Vec2 position() const { return point.position; }
};

/// Boundary-taxed transportation problem: every supply atom ships all of its
/// mass either to demand nodes (which must be filled exactly) or over the
/// wall at a boundary node. Nodes are indexed supplies first, then demands,
/// then boundary nodes.
struct DiscreteProblem {
  std::vector<MassNode> supplies;
  std::vector<MassNode> demands;
  std::vector<BoundaryNode> boundary;
  /// Factor applied to the demand masses to absorb quadrature imbalance.
  double demand_rescale = 1.0;

  std::size_t node_count() const {
    return supplies.size() + demands.size() + boundary.size();
  }
  Vec2 node_position(std::size_t node) const;
  /// rho = f - du/dt at each node (boundary nodes carry 0).
  double node_charge(std::size_t node) const;
  double supply_total() const;
  double demand_total() const;
  double spill_total() const { return supply_total() - demand_total(); }
};

/// Throws std::invalid_argument on negative masses, or when demand exceeds
/// supply by more than 1e-12 relatively (or, without boundary nodes, when the
/// two totals are not balanced to that precision).
DiscreteProblem make_problem(std::vector<MassNode> supplies,
                             std::vector<MassNode> demands,
                             std::vector<BoundaryNode> boundary);

struct PlanEntry {
  std::size_t supply = 0;
  /// Index into demands, or demands.size() + boundary index.
  std::size_t sink = 0;
  double mass = 0.0;
};

/// Mass entering at a boundary node and delivered to a demand node.
struct ImportEntry {
  std::size_t boundary = 0;
  std::size_t demand = 0;
  double mass = 0.0;
};

struct TransportSolution {
  std::vector<PlanEntry> plan;
  std::vector<double> spill;      ///< mass per boundary node
  std::vector<ImportEntry> imports;  ///< empty unless imports are allowed
  std::vector<double> potential;  ///< per node, from the solved dual
  double primal_value = 0.0;
  double dual_value = std::numeric_limits<double>::quiet_NaN();
  double min_reduced_cost = 0.0;  ///< simplex optimality certificate
  double marginal_error = 0.0;
  std::size_t pivots = 0;
};

struct DualSolution {
  std::vector<double> potential;  ///< per node
  double value = 0.0;
  /// Largest violation of v(a) - v(b) <= |a - b| or 0 <= v <= g.
  double max_violation = 0.0;
  std::size_t augmentations = 0;
};

/// Builds the problem certifying one simulator snapshot: supplies are the
/// sources, demands are the grid cells of active cones carrying
/// (c_j / |A_j|) h^2 (an active cone covering no cell center puts c_j on its
/// apex), boundary sinks are arc-length nodes plus every source's p_g^+
/// minimizers. Throws std::invalid_argument when demand plus frozen
/// spill misses the supply by more than 1%.
DiscreteProblem build_problem(const ConeState& snapshot,
                              const SourceSet& sources,
                              const ConvexDomain& domain, const Grid& grid,
                              double boundary_spacing);

struct PrimalOptions {
  /// Also let demand be served from boundary nodes at cost |b - x| (the wall
  /// then acts as a free source). This is the exact LP dual of solve_dual;
  /// when a non-negative optimal potential exists no import is needed.
  bool allow_import = false;
};

/// Exact optimum by network simplex. Throws std::runtime_error when the
/// solver reports infeasibility or hits its pivot limit.
TransportSolution solve_primal(const DiscreteProblem& problem,
                               const PrimalOptions& options = {});

/// max sum rho(a) v(a) over v with v(a) - v(b) <= |a - b| for all node pairs
/// and 0 <= v(b) <= g(b) on boundary nodes. Solved as a min-cost flow on the
/// complete node graph by successive shortest augmenting paths, whose node
/// prices are the optimal v.
DualSolution solve_dual(const DiscreteProblem& problem);

/// Aggregates demand nodes on a doubling bin grid until the problem has at
/// most max_nodes nodes. `radius` is the largest distance a demand atom
/// moved.
struct CoarseProblem {
  DiscreteProblem problem;
  double radius = 0.0;
};
CoarseProblem coarsen(const DiscreteProblem& problem, std::size_t max_nodes,
                      double initial_bin);

/// W1 between two balanced atomic measures (no boundary).
double wasserstein1(std::span<const PointSource> a,
                    std::span<const PointSource> b);

struct CertificateReport {
  double time = 0.0;
  double primal_value = 0.0;
  double u_value = 0.0;         ///< <rho, u>
  double duality_gap = 0.0;     ///< |<rho, u> - primal|
  double slackness_max = 0.0;   ///< over plan support
  double spill_max = 0.0;       ///< |u(b) - g(b)| where spill is carried
  double admissibility = 0.0;   ///< largest Lipschitz/bound violation of u
  double dual_value = std::numeric_limits<double>::quiet_NaN();
  double dual_primal_gap = std::numeric_limits<double>::quiet_NaN();
  double coarsening_radius = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Default certification tolerance 1e-6 + 2h.
inline double certification_tolerance(double h) { return 1e-6 + 2.0 * h; }

/// Checks the primal-dual optimality conditions between u (values at the
/// problem nodes) and the plan: u(y) - u(x) = |x - y| on the plan support,
/// u(b) = g(b) where spill occurs, <rho, u> equal to the primal value, and
/// u admissible for the dual. PASS iff every residual is <= tolerance.
CertificateReport certify(std::span<const double> u_at_nodes,
                          const TransportSolution& solution,
                          const DiscreteProblem& problem, double tolerance);

/// u evaluated at every node of the problem.
std::vector<double> node_values(const DiscreteProblem& problem,
                                const std::function<double(Vec2)>& u);

struct SnapshotCertification {
  CertificateReport report;
  TransportSolution solution;
  DualSolution dual;
  double coarse_primal = 0.0;
};

struct VerifyOptions {
  double boundary_spacing = 0.05;
  std::size_t dual_max_nodes = 2000;
  /// Solve the independent dual LP (can be disabled for large instances).
  bool solve_dual = true;
  /// Overrides certification_tolerance(h).
  std::optional<double> tolerance;
};

/// build_problem + solve_primal + certify against the simulator's u, plus the
/// dual LP on a coarsened copy. The tolerance widens by the coarsening
/// radius for the dual comparison only.
SnapshotCertification certify_snapshot(const ConeState& snapshot,
                                       const SourceSet& sources,
                                       const ConvexDomain& domain,
                                       const Grid& grid,
                                       const VerifyOptions& options = {});

void write_report(std::ostream& os, const CertificateReport& r);

}  // namespace sandpile
