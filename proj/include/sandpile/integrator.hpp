#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sandpile/geometry.hpp"
#include "sandpile/partition.hpp"
#include "sandpile/sources.hpp"

namespace sandpile {

/// Cone apex heights r_j(t). A source is frozen once its radius has reached
/// its escape cost d_g^+(y_j); frozen radii never move again.
struct ConeState {
  double time = 0.0;
  std::vector<double> radii;
  std::vector<std::uint8_t> frozen;
  std::vector<double> thresholds;

  bool is_frozen(std::size_t j) const { return frozen[j] != 0; }
  bool all_frozen() const;
  std::size_t active_count() const;
};

struct FreezeEvent {
  std::size_t source = 0;
  double time = 0.0;
};

/// Everything the integrator knows about one RK2 step.
struct StepRecord {
  double time = 0.0;  ///< start of the step
  double dt = 0.0;
  std::vector<double> radii_before;
  std::vector<double> radii_after;
  std::vector<double> areas_start;
  std::vector<double> areas_mid;
  std::vector<double> rates_mid;  ///< dr_j/dt used for the full step
  /// Time each source actually advanced during the step (dt, the partial time
  /// up to its freeze, or 0 when frozen at the start).
  std::vector<double> advance_time;
  std::vector<std::uint8_t> active_start;
};

struct Trajectory {
  std::vector<ConeState> snapshots;
  std::vector<FreezeEvent> freezes;
  std::vector<StepRecord> steps;
  double analytic_end = 0.0;
  ConeState final_state;
};

/// Closed-form growth of isolated cones: r_j(t) = (3 c_j t / pi)^(1/3),
/// valid while no cone touches another or the boundary.
struct AnalyticPhase {
  double t0 = 0.0;
  /// First time a cone touches another cone or the wall (>= t0). The closed
  /// form is exact up to here.
  double contact = 0.0;
  std::vector<double> rates;
  std::vector<double> radii(double t) const;
};

AnalyticPhase analytic_phase(const SourceSet& sources,
                             const ConvexDomain& domain);

struct GridControl {
  double h = 1.0 / 128.0;
  int threads = 1;
  /// Largest radius advance per step, as a fraction of h.
  double advance_fraction = 0.25;
};

struct RunOptions {
  /// Keep the closed form until the first contact instead of stopping at t0.
  bool until_contact = true;
  /// Switch from the closed form to stepping at this fraction of the
  /// closed-form window.
  double analytic_handoff = 1.0;
  bool record_steps = true;
  std::size_t max_steps = 5'000'000;
};

class ConeIntegrator {
 public:
  ConeIntegrator(const SourceSet& sources, const ConvexDomain& domain,
                 GridControl control);

  const SourceSet& sources() const { return sources_; }
  const ConvexDomain& domain() const { return domain_; }
  const Grid& grid() const { return grid_; }
  const GridControl& control() const { return control_; }
  std::span<const double> thresholds() const { return thresholds_; }
  const AnalyticPhase& analytic() const { return analytic_; }

  /// State given by the closed form at time t (t <= analytic().contact).
  ConeState analytic_state(double t) const;

  /// Grid partition at the given radii. An active cone (radius below its
  /// threshold) without any cell triggers one evaluation on a grid of half
  /// the spacing; if that still has no cell, AreaFloorError is thrown.
  std::vector<double> areas(std::span<const double> radii) const;

  /// One explicit midpoint step of dr_j/dt = c_j / |A_j|, no longer than
  /// max_dt. With every source frozen only the clock moves (by max_dt when
  /// it is finite).
  ConeState step(const ConeState& state,
                 double max_dt = std::numeric_limits<double>::infinity(),
                 StepRecord* record = nullptr) const;

  /// Closed form up to the first contact (or t0), then stepping up to T or
  /// until every source is frozen. Snapshot times must lie in [0, T].
  Trajectory run(double horizon, std::span<const double> snapshot_times,
                 const RunOptions& options = {}) const;

 private:
  ConeState make_state(double t, std::vector<double> radii) const;

  SourceSet sources_;
  ConvexDomain domain_;
  GridControl control_;
  Grid grid_;
  std::vector<double> thresholds_;
  AnalyticPhase analytic_;
};

/// Convenience wrapper: ConeIntegrator(sources, domain, control).run(...).
Trajectory run(const SourceSet& sources, const ConvexDomain& domain,
               double horizon, std::span<const double> snapshot_times,
               GridControl control = {}, const RunOptions& options = {});

}  // namespace sandpile
