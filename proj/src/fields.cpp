#include "sandpile/fields.hpp"

#include <algorithm>
#include <cmath>

namespace sandpile {

double GridField::sup_abs() const {
  double s = 0.0;
  for (double v : values) s = std::max(s, std::abs(v));
  return s;
}

double GridField::integral() const {
  double acc = 0.0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (grid.inside(c)) acc += values[c];
  }
  return acc * grid.cell_area();
}

double BoundaryMeasure::total_mass() const {
  double m = 0.0;
  for (const auto& a : atoms) m += a.mass;
  return m;
}

double eval_u(const ConeState& state, const SourceSet& sources, Vec2 x) {
  double u = 0.0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    u = std::max(u, state.radii[j] - distance(x, sources[j].location));
  }
  return u;
}

double eval_dudt(const ConeState& state, const SourceSet& sources,
                 std::span<const double> areas, Vec2 x) {
  const int l = dominant_cone(sources, state.radii, x);
  if (l == kNoLabel) return 0.0;
  const auto j = static_cast<std::size_t>(l);
  if (state.is_frozen(j) || !(areas[j] > 0.0)) return 0.0;
  return sources[j].rate / areas[j];
}

GridField sample_u(const Grid& grid, const ConeState& state,
                   const SourceSet& sources) {
  GridField f{grid, std::vector<double>(grid.cell_count(), 0.0)};
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    if (grid.inside(c)) f.values[c] = eval_u(state, sources, grid.center(c));
  }
  return f;
}

GridField sample_dudt(const Grid& grid, const ConeState& state,
                      const SourceSet& sources, std::span<const double> areas) {
  GridField f{grid, std::vector<double>(grid.cell_count(), 0.0)};
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    if (grid.inside(c)) {
      f.values[c] = eval_dudt(state, sources, areas, grid.center(c));
    }
  }
  return f;
}

BoundaryMeasure spill_measure(const ConeState& state, const SourceSet& sources,
                              const ConvexDomain& domain,
                              SpillSelection selection) {
  BoundaryMeasure nu;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (!state.is_frozen(j)) continue;
    const auto escape = domain.d_g_plus(sources[j].location);
    const BoundaryPoint& b = selection == SpillSelection::First
                                 ? escape.minimizers.front()
                                 : escape.minimizers.back();
    nu.atoms.push_back({b, sources[j].rate, j});
  }
  return nu;
}

namespace {

void deposit_segment(PathMeasure& mu, Vec2 from, Vec2 to, double weight) {
  const double length = distance(from, to);
  if (!(length > 0.0) || !(weight > 0.0)) return;
  const double h = mu.grid.spacing();
  const auto pieces = static_cast<int>(std::max(1.0, std::ceil(length / h)));
  const double piece_mass = weight * length / pieces;
  const Vec2 dir = (to - from) * (1.0 / length);
  const double inv_area = 1.0 / mu.grid.cell_area();
  for (int i = 0; i < pieces; ++i) {
    const Vec2 p = lerp(from, to, (i + 0.5) / pieces);
    const std::size_t cell = mu.grid.locate(p);
    mu.density[cell] += piece_mass * inv_area;
    mu.flux[cell] += dir * piece_mass;
  }
  mu.total_mass += weight * length;
}

}  // namespace

PathMeasure rolling_measure(const ConeState& state, const SourceSet& sources,
                            std::span<const double> areas,
                            const ConvexDomain& domain, const Grid& grid) {
  PathMeasure mu{grid, std::vector<double>(grid.cell_count(), 0.0),
                 std::vector<Vec2>(grid.cell_count()), 0.0};
  const auto part = partition(grid, sources, state.radii);
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const int l = part.label[c];
    if (l == kNoLabel) continue;
    const auto j = static_cast<std::size_t>(l);
    if (state.is_frozen(j) || !(areas[j] > 0.0)) continue;
    const double w = sources[j].rate / areas[j] * grid.cell_area();
    deposit_segment(mu, grid.center(c), sources[j].location, w);
  }
  for (const auto& atom : spill_measure(state, sources, domain).atoms) {
    deposit_segment(mu, atom.point.position, sources[atom.source].location,
                    atom.mass);
  }
  return mu;
}

double equilibrium_field(const SourceSet& sources,
                         std::span<const double> thresholds, Vec2 x) {
  double u = 0.0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    u = std::max(u, thresholds[j] - distance(x, sources[j].location));
  }
  return u;
}

double equilibrium_field(const SourceSet& sources, const ConvexDomain& domain,
                         Vec2 x) {
  std::vector<double> thresholds;
  for (const auto& p : sources.points()) {
    thresholds.push_back(domain.d_g_plus(p.location).value);
  }
  return equilibrium_field(sources, thresholds, x);
}

}  // namespace sandpile
