#include "sandpile/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace sandpile {

bool ConeState::all_frozen() const {
  return std::all_of(frozen.begin(), frozen.end(),
                     [](std::uint8_t f) { return f != 0; });
}

std::size_t ConeState::active_count() const {
  return static_cast<std::size_t>(
      std::count(frozen.begin(), frozen.end(), std::uint8_t{0}));
}

std::vector<double> AnalyticPhase::radii(double t) const {
  std::vector<double> r(rates.size());
  for (std::size_t j = 0; j < rates.size(); ++j) {
    r[j] = std::cbrt(3.0 * rates[j] * t / std::numbers::pi);
  }
  return r;
}

AnalyticPhase analytic_phase(const SourceSet& sources,
                             const ConvexDomain& domain) {
  AnalyticPhase phase;
  for (const auto& p : sources.points()) phase.rates.push_back(p.rate);
  const double m = min_separation(sources, domain).min();
  const double half = 0.5 * m;
  phase.t0 = std::numbers::pi / (3.0 * sources.max_rate()) * half * half * half;

  // Cone j meets the wall when r_j = dist(y_j, boundary); cones i and j meet
  // when r_i + r_j = |y_i - y_j|.
  phase.contact = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const double b = domain.boundary_distance(sources[j].location);
    phase.contact = std::min(
        phase.contact, std::numbers::pi / (3.0 * sources[j].rate) * b * b * b);
    for (std::size_t i = 0; i < j; ++i) {
      const double q = distance(sources[i].location, sources[j].location) /
                       (std::cbrt(sources[i].rate) + std::cbrt(sources[j].rate));
      phase.contact = std::min(phase.contact, std::numbers::pi / 3.0 * q * q * q);
    }
  }
  phase.contact = std::max(phase.contact, phase.t0);
  return phase;
}

ConeIntegrator::ConeIntegrator(const SourceSet& sources,
                               const ConvexDomain& domain, GridControl control)
    : sources_(sources),
      domain_(domain),
      control_(control),
      grid_(Grid::cover(domain, control.h)),
      analytic_(analytic_phase(sources, domain)) {
  if (!(control.advance_fraction > 0.0)) {
    throw std::invalid_argument("advance fraction must be positive");
  }
  for (const auto& p : sources_.points()) {
    thresholds_.push_back(domain_.d_g_plus(p.location).value);
  }
}

ConeState ConeIntegrator::make_state(double t, std::vector<double> radii) const {
  ConeState s;
  s.time = t;
  s.thresholds = thresholds_;
  s.frozen.assign(radii.size(), 0);
  for (std::size_t j = 0; j < radii.size(); ++j) {
    if (radii[j] >= thresholds_[j]) {
      radii[j] = thresholds_[j];
      s.frozen[j] = 1;
    }
  }
  s.radii = std::move(radii);
  return s;
}

ConeState ConeIntegrator::analytic_state(double t) const {
  return make_state(t, analytic_.radii(t));
}

std::vector<double> ConeIntegrator::areas(std::span<const double> radii) const {
  auto starved = [&](const std::vector<double>& a) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      if (radii[j] < thresholds_[j] && !(a[j] > 0.0)) return true;
    }
    return false;
  };
  auto a = partition(grid_, sources_, radii, control_.threads).areas;
  if (!starved(a)) return a;
  const Grid fine = Grid::cover(domain_, 0.5 * control_.h);
  a = partition(fine, sources_, radii, control_.threads).areas;
  if (starved(a)) {
    std::ostringstream msg;
    msg << "active cone has zero area at h = " << 0.5 * control_.h
        << "; grid too coarse for radii [";
    for (std::size_t j = 0; j < radii.size(); ++j) {
      msg << (j ? ", " : "") << radii[j];
    }
    msg << "]";
    throw AreaFloorError(msg.str());
  }
  return a;
}

ConeState ConeIntegrator::step(const ConeState& state, double max_dt,
                               StepRecord* record) const {
  const std::size_t k = sources_.size();
  ConeState next = state;
  if (state.all_frozen()) {
    if (std::isfinite(max_dt)) next.time += max_dt;
    return next;
  }

  const auto a0 = areas(state.radii);
  double dt = max_dt;
  for (std::size_t j = 0; j < k; ++j) {
    if (state.is_frozen(j)) continue;
    dt = std::min(dt, control_.advance_fraction * control_.h * a0[j] /
                          sources_[j].rate);
  }

  std::vector<double> half(k);
  for (std::size_t j = 0; j < k; ++j) {
    half[j] = state.radii[j];
    if (state.is_frozen(j)) continue;
    half[j] = std::min(thresholds_[j],
                       state.radii[j] + 0.5 * dt * sources_[j].rate / a0[j]);
  }
  const auto amid = areas(half);

  std::vector<double> rate(k, 0.0);
  std::vector<double> advance(k, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    if (state.is_frozen(j)) continue;
    // A cone that froze during the half step may have lost its cells.
    const double area = amid[j] > 0.0 ? amid[j] : a0[j];
    rate[j] = sources_[j].rate / area;
    const double target = state.radii[j] + dt * rate[j];
    advance[j] = dt;
    if (target >= thresholds_[j]) {
      advance[j] = (thresholds_[j] - state.radii[j]) / rate[j];
      next.radii[j] = thresholds_[j];
      next.frozen[j] = 1;
    } else {
      next.radii[j] = target;
    }
  }
  next.time = state.time + dt;

  if (record != nullptr) {
    record->time = state.time;
    record->dt = dt;
    record->radii_before = state.radii;
    record->radii_after = next.radii;
    record->areas_start = a0;
    record->areas_mid = amid;
    record->rates_mid = rate;
    record->advance_time = advance;
    record->active_start.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      record->active_start[j] = state.is_frozen(j) ? 0 : 1;
    }
  }
  return next;
}

Trajectory ConeIntegrator::run(double horizon,
                               std::span<const double> snapshot_times,
                               const RunOptions& options) const {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  std::vector<double> times(snapshot_times.begin(), snapshot_times.end());
  std::sort(times.begin(), times.end());
  for (double s : times) {
    if (!(s >= 0.0) || s > horizon) {
      throw std::invalid_argument("snapshot times must lie in [0, horizon]");
    }
  }

  Trajectory traj;
  const double closed_form_end =
      options.until_contact ? analytic_.contact : analytic_.t0;
  const double handoff = std::min(
      horizon, closed_form_end * std::clamp(options.analytic_handoff, 0.0, 1.0));
  traj.analytic_end = handoff;
  std::size_t next_snap = 0;
  while (next_snap < times.size() && times[next_snap] <= handoff) {
    traj.snapshots.push_back(analytic_state(times[next_snap]));
    ++next_snap;
  }

  ConeState state = analytic_state(handoff);
  for (std::size_t j = 0; j < state.radii.size(); ++j) {
    if (!state.is_frozen(j)) continue;
    const double d = thresholds_[j];
    const double reach = std::numbers::pi / (3.0 * sources_[j].rate) * d * d * d;
    traj.freezes.push_back({j, std::min(handoff, reach)});
  }
  std::size_t steps = 0;
  StepRecord rec;
  while (state.time < horizon && !state.all_frozen()) {
    if (++steps > options.max_steps) {
      std::ostringstream msg;
      msg << "integrator exceeded " << options.max_steps
          << " steps at t = " << state.time;
      throw std::runtime_error(msg.str());
    }
    ConeState next = step(state, horizon - state.time, &rec);
    if (rec.dt == horizon - state.time) next.time = horizon;
    // Each radius moves linearly at its midpoint rate until it freezes.
    while (next_snap < times.size() && times[next_snap] <= next.time) {
      const double s = times[next_snap];
      std::vector<double> r = state.radii;
      for (std::size_t j = 0; j < r.size(); ++j) {
        const double elapsed = std::min(s - state.time, rec.advance_time[j]);
        r[j] = state.radii[j] + rec.rates_mid[j] * elapsed;
        if (next.is_frozen(j) && s - state.time >= rec.advance_time[j]) {
          r[j] = thresholds_[j];
        }
      }
      traj.snapshots.push_back(make_state(s, std::move(r)));
      ++next_snap;
    }
    for (std::size_t j = 0; j < state.radii.size(); ++j) {
      if (!state.is_frozen(j) && next.is_frozen(j)) {
        traj.freezes.push_back({j, state.time + rec.advance_time[j]});
      }
    }
    if (options.record_steps) traj.steps.push_back(rec);
    state = std::move(next);
  }
  std::stable_sort(traj.freezes.begin(), traj.freezes.end(),
                   [](const FreezeEvent& a, const FreezeEvent& b) {
                     return a.time < b.time;
                   });
  while (next_snap < times.size()) {
    ConeState s = state;
    s.time = times[next_snap++];
    traj.snapshots.push_back(std::move(s));
  }
  traj.final_state = std::move(state);
  return traj;
}

Trajectory run(const SourceSet& sources, const ConvexDomain& domain,
               double horizon, std::span<const double> snapshot_times,
               GridControl control, const RunOptions& options) {
  return ConeIntegrator(sources, domain, control)
      .run(horizon, snapshot_times, options);
}

}  // namespace sandpile
