#include "sandpile/transport.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>

#include "sandpile/network_simplex.hpp"

namespace sandpile {

namespace {
constexpr std::size_t kNil = static_cast<std::size_t>(-1);
constexpr double kImbalanceLimit = 0.01;
}  // namespace

Vec2 DiscreteProblem::node_position(std::size_t node) const {
  if (node < supplies.size()) return supplies[node].location;
  node -= supplies.size();
  if (node < demands.size()) return demands[node].location;
  return boundary[node - demands.size()].position();
}

double DiscreteProblem::node_charge(std::size_t node) const {
  if (node < supplies.size()) return supplies[node].mass;
  node -= supplies.size();
  if (node < demands.size()) return -demands[node].mass;
  return 0.0;
}

double DiscreteProblem::supply_total() const {
  double s = 0.0;
  for (const auto& n : supplies) s += n.mass;
  return s;
}

double DiscreteProblem::demand_total() const {
  double s = 0.0;
  for (const auto& n : demands) s += n.mass;
  return s;
}

DiscreteProblem make_problem(std::vector<MassNode> supplies,
                             std::vector<MassNode> demands,
                             std::vector<BoundaryNode> boundary) {
  for (const auto* list : {&supplies, &demands}) {
    for (const auto& n : *list) {
      if (!(n.mass >= 0.0) || !std::isfinite(n.mass)) {
        throw std::invalid_argument("transport masses must be finite and >= 0");
      }
    }
  }
  for (const auto& b : boundary) {
    if (!(b.wall >= 0.0)) throw std::invalid_argument("wall cost must be >= 0");
  }
  DiscreteProblem p{std::move(supplies), std::move(demands), std::move(boundary)};
  const double s = p.supply_total();
  const double d = p.demand_total();
  const double slack = 1e-12 * std::max(1.0, s);
  if (p.boundary.empty() ? std::abs(s - d) > slack : d - s > slack) {
    throw std::invalid_argument(
        "transport problem unbalanced: supply " + std::to_string(s) +
        ", demand " + std::to_string(d));
  }
  return p;
}

DiscreteProblem build_problem(const ConeState& snapshot,
                              const SourceSet& sources,
                              const ConvexDomain& domain, const Grid& grid,
                              double boundary_spacing) {
  const auto part = partition(grid, sources, snapshot.radii);
  std::vector<MassNode> supplies;
  double frozen_rate = 0.0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    supplies.push_back({sources[j].location, sources[j].rate});
    if (snapshot.is_frozen(j)) frozen_rate += sources[j].rate;
  }
  std::vector<MassNode> demands;
  double demand = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    const int l = part.label[c];
    if (l == kNoLabel) continue;
    const auto j = static_cast<std::size_t>(l);
    if (snapshot.is_frozen(j) || !(part.areas[j] > 0.0)) continue;
    const double mass = sources[j].rate / part.areas[j] * grid.cell_area();
    demands.push_back({grid.center(c), mass});
    demand += mass;
  }
  // A cone narrower than the grid covers no cell center; its cell shrinks to
  // the apex, which then receives the whole rate.
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (snapshot.is_frozen(j) || part.areas[j] > 0.0) continue;
    demands.push_back({sources[j].location, sources[j].rate});
    demand += sources[j].rate;
  }
  const double supply = sources.total_rate();
  const double imbalance = std::abs(demand + frozen_rate - supply) / supply;
  if (imbalance > kImbalanceLimit) {
    throw std::invalid_argument(
        "snapshot mass balance off by " + std::to_string(100.0 * imbalance) +
        "% (demand " + std::to_string(demand) + " + spill " +
        std::to_string(frozen_rate) + " vs supply " + std::to_string(supply) +
        ")");
  }
  double rescale = 1.0;
  if (demand > 0.0 && demand + frozen_rate != supply) {
    rescale = std::max(0.0, supply - frozen_rate) / demand;
    for (auto& d : demands) d.mass *= rescale;
  }

  std::vector<BoundaryPoint> points = domain.boundary_nodes(boundary_spacing);
  for (const auto& s : sources.points()) {
    for (const auto& b : domain.d_g_plus(s.location).minimizers) {
      points.push_back(b);
    }
  }
  std::sort(points.begin(), points.end(), boundary_less);
  points.erase(std::unique(points.begin(), points.end(),
                           [](const BoundaryPoint& a, const BoundaryPoint& b) {
                             return a.edge_index == b.edge_index &&
                                    std::abs(a.edge_parameter -
                                             b.edge_parameter) <= 1e-12;
                           }),
               points.end());
  std::vector<BoundaryNode> boundary;
  for (const auto& b : points) boundary.push_back({b, domain.wall_height(b)});

  // Rounding can leave demand a few ulps above supply - frozen spill.
  double d_total = 0.0;
  for (const auto& d : demands) d_total += d.mass;
  if (d_total > supply) {
    for (auto& d : demands) d.mass *= supply / d_total;
  }
  DiscreteProblem p = make_problem(std::move(supplies), std::move(demands),
                                   std::move(boundary));
  p.demand_rescale = rescale;
  return p;
}

TransportSolution solve_primal(const DiscreteProblem& problem,
                               const PrimalOptions& options) {
  const std::size_t ns = problem.supplies.size();
  const std::size_t nd = problem.demands.size();
  const std::size_t nb = problem.boundary.size();
  const bool has_spill = nb > 0;
  const std::size_t spill_node = ns + nd + nb;
  NetworkSimplex simplex(ns + nd + nb + (has_spill ? 1 : 0));

  for (std::size_t i = 0; i < ns; ++i) simplex.set_supply(i, problem.supplies[i].mass);
  for (std::size_t k = 0; k < nd; ++k) simplex.set_supply(ns + k, -problem.demands[k].mass);
  if (has_spill) simplex.set_supply(spill_node, -std::max(0.0, problem.spill_total()));

  struct ArcInfo {
    std::size_t supply;
    std::size_t sink;
  };
  std::vector<ArcInfo> info;
  for (std::size_t i = 0; i < ns; ++i) {
    const Vec2 y = problem.supplies[i].location;
    for (std::size_t k = 0; k < nd; ++k) {
      simplex.add_arc(i, ns + k, distance(y, problem.demands[k].location));
      info.push_back({i, k});
    }
    for (std::size_t b = 0; b < nb; ++b) {
      simplex.add_arc(i, ns + nd + b, distance(y, problem.boundary[b].position()));
      info.push_back({i, nd + b});
    }
  }
  const std::size_t first_wall_arc = info.size();
  for (std::size_t b = 0; b < nb; ++b) {
    simplex.add_arc(ns + nd + b, spill_node, problem.boundary[b].wall);
  }
  const std::size_t first_import_arc = first_wall_arc + nb;
  if (options.allow_import) {
    for (std::size_t b = 0; b < nb; ++b) {
      simplex.add_arc(spill_node, ns + nd + b, 0.0);
      for (std::size_t k = 0; k < nd; ++k) {
        simplex.add_arc(ns + nd + b, ns + k,
                        distance(problem.boundary[b].position(), problem.demands[k].location));
      }
    }
  }

  const auto status = simplex.solve();
  if (status == NetworkSimplex::Status::Infeasible) {
    throw std::runtime_error("transport problem infeasible");
  }
  if (status == NetworkSimplex::Status::IterationLimit) {
    throw std::runtime_error("network simplex pivot limit reached");
  }

  TransportSolution sol;
  sol.pivots = simplex.pivots();
  sol.primal_value = simplex.total_cost();
  sol.min_reduced_cost = simplex.min_reduced_cost();
  sol.spill.assign(nb, 0.0);
  std::vector<double> shipped(ns, 0.0);
  std::vector<double> received(nd, 0.0);
  for (std::size_t a = 0; a < first_wall_arc; ++a) {
    const double f = simplex.flow(a);
    if (f <= 0.0) continue;
    sol.plan.push_back({info[a].supply, info[a].sink, f});
    shipped[info[a].supply] += f;
    if (info[a].sink < nd) received[info[a].sink] += f;
  }
  for (std::size_t b = 0; b < nb; ++b) sol.spill[b] = simplex.flow(first_wall_arc + b);
  if (options.allow_import) {
    std::size_t a = first_import_arc;
    for (std::size_t b = 0; b < nb; ++b) {
      ++a;  // hub -> b; its flow is the sum of the imports below
      for (std::size_t k = 0; k < nd; ++k) {
        const double f = simplex.flow(a++);
        if (f <= 0.0) continue;
        sol.imports.push_back({b, k, f});
        received[k] += f;
      }
    }
  }
  for (std::size_t i = 0; i < ns; ++i) {
    sol.marginal_error = std::max(
        sol.marginal_error, std::abs(shipped[i] - problem.supplies[i].mass));
  }
  for (std::size_t k = 0; k < nd; ++k) {
    sol.marginal_error = std::max(
        sol.marginal_error, std::abs(received[k] - problem.demands[k].mass));
  }

  // LP duals of the bipartite problem, anchored at the spill sink.
  const double anchor = has_spill ? -simplex.potential(spill_node) : 0.0;
  sol.potential.resize(ns + nd + nb);
  double dual = 0.0;
  for (std::size_t a = 0; a < ns + nd + nb; ++a) {
    sol.potential[a] = -simplex.potential(a) - anchor;
    dual += problem.node_charge(a) * sol.potential[a];
  }
  sol.dual_value = dual;
  return sol;
}

DualSolution solve_dual(const DiscreteProblem& problem) {
  const std::size_t ns = problem.supplies.size();
  const std::size_t nd = problem.demands.size();
  const std::size_t n = problem.node_count();
  const std::size_t root = n;
  const std::size_t b0 = ns + nd;

  std::vector<Vec2> pos(n);
  for (std::size_t a = 0; a < n; ++a) pos[a] = problem.node_position(a);
  const bool dense = n <= 2500;
  std::vector<double> dist_matrix;
  if (dense) {
    dist_matrix.resize(n * n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        dist_matrix[a * n + b] = distance(pos[a], pos[b]);
      }
    }
  }
  auto is_boundary = [&](std::size_t a) { return a >= b0 && a < n; };
  // Arc a -> b encodes v(a) - v(b) <= cost(a, b); the root pins v = 0.
  auto cost = [&](std::size_t a, std::size_t b) {
    if (a == root) return 0.0;
    if (b == root) return problem.boundary[a - b0].wall;
    return dense ? dist_matrix[a * n + b] : distance(pos[a], pos[b]);
  };

  std::vector<double> excess(n + 1, 0.0);
  double scale = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    excess[a] = problem.node_charge(a);
    excess[root] -= excess[a];
    scale += std::abs(excess[a]);
  }
  const double tol = 1e-13 * std::max(1.0, scale);

  // inflow[b] lists (a, flow on a -> b) for positive flows.
  std::vector<std::vector<std::pair<std::size_t, double>>> inflow(n + 1);
  std::vector<double> price(n + 1, 0.0);
  std::vector<double> dist(n + 1);
  std::vector<std::uint8_t> done(n + 1);
  std::vector<std::size_t> pred(n + 1);
  std::vector<std::uint8_t> pred_reverse(n + 1);

  DualSolution out;
  while (true) {
    bool pending = false;
    for (std::size_t a = 0; a <= n; ++a) pending = pending || excess[a] > tol;
    if (!pending) break;

    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    std::fill(done.begin(), done.end(), 0);
    std::fill(pred.begin(), pred.end(), kNil);
    for (std::size_t a = 0; a <= n; ++a) {
      if (excess[a] > tol) dist[a] = 0.0;
    }
    std::size_t target = kNil;
    while (true) {
      std::size_t u = kNil;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a <= n; ++a) {
        if (!done[a] && dist[a] < best) {
          best = dist[a];
          u = a;
        }
      }
      if (u == kNil) break;
      done[u] = 1;
      if (excess[u] < -tol) {
        target = u;
        break;
      }
      auto relax = [&](std::size_t v, double c, bool reverse) {
        if (done[v]) return;
        const double rc = std::max(0.0, c + price[u] - price[v]);
        if (dist[u] + rc < dist[v]) {
          dist[v] = dist[u] + rc;
          pred[v] = u;
          pred_reverse[v] = reverse ? 1 : 0;
        }
      };
      if (u == root) {
        for (std::size_t b = b0; b < n; ++b) relax(b, 0.0, false);
      } else {
        const double pu = price[u];
        const double du = dist[u];
        const double* row = dense ? &dist_matrix[u * n] : nullptr;
        for (std::size_t v = 0; v < n; ++v) {
          if (done[v] || v == u) continue;
          const double c = dense ? row[v] : distance(pos[u], pos[v]);
          const double nd_v = du + std::max(0.0, c + pu - price[v]);
          if (nd_v < dist[v]) {
            dist[v] = nd_v;
            pred[v] = u;
            pred_reverse[v] = 0;
          }
        }
        if (is_boundary(u)) relax(root, cost(u, root), false);
      }
      for (const auto& [a, f] : inflow[u]) {
        if (f > tol) relax(a, -cost(a, u), true);
      }
    }
    if (target == kNil) {
      throw std::runtime_error("dual solver: no augmenting path (infeasible)");
    }
    const double reach = dist[target];
    for (std::size_t a = 0; a <= n; ++a) price[a] += std::min(dist[a], reach);

    // Bottleneck along the path; only cancelled (reverse) arcs are capped.
    double theta = -excess[target];
    std::size_t s = target;
    while (pred[s] != kNil) {
      const std::size_t p = pred[s];
      if (pred_reverse[s]) {
        for (const auto& [a, f] : inflow[p]) {
          if (a == s) theta = std::min(theta, f);
        }
      }
      s = p;
    }
    theta = std::min(theta, excess[s]);

    for (std::size_t v = target; pred[v] != kNil; v = pred[v]) {
      const std::size_t p = pred[v];
      if (pred_reverse[v]) {
        auto& list = inflow[p];
        for (auto it = list.begin(); it != list.end(); ++it) {
          if (it->first == v) {
            it->second -= theta;
            if (it->second <= tol) list.erase(it);
            break;
          }
        }
      } else {
        auto& list = inflow[v];
        auto it = std::find_if(list.begin(), list.end(),
                               [&](const auto& e) { return e.first == p; });
        if (it == list.end()) {
          list.emplace_back(p, theta);
        } else {
          it->second += theta;
        }
      }
    }
    excess[s] -= theta;
    excess[target] += theta;
    ++out.augmentations;
  }

  out.potential.resize(n);
  const double anchor = -price[root];
  for (std::size_t a = 0; a < n; ++a) {
    out.potential[a] = -price[a] - anchor;
    out.value += problem.node_charge(a) * out.potential[a];
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a == b) continue;
      out.max_violation = std::max(
          out.max_violation, out.potential[a] - out.potential[b] - cost(a, b));
    }
    if (is_boundary(a)) {
      out.max_violation = std::max(out.max_violation, -out.potential[a]);
      out.max_violation = std::max(
          out.max_violation, out.potential[a] - problem.boundary[a - b0].wall);
    }
  }
  return out;
}

CoarseProblem coarsen(const DiscreteProblem& problem, std::size_t max_nodes,
                      double initial_bin) {
  CoarseProblem out{problem, 0.0};
  const std::size_t fixed = problem.supplies.size() + problem.boundary.size();
  if (problem.node_count() <= max_nodes || problem.demands.empty()) return out;
  if (fixed >= max_nodes) {
    throw std::invalid_argument("coarsen: supplies and boundary exceed node cap");
  }
  Vec2 lo = problem.demands.front().location;
  for (const auto& d : problem.demands) {
    lo = {std::min(lo.x, d.location.x), std::min(lo.y, d.location.y)};
  }
  // Anchor half a bin below the lowest atom so grid-aligned cells group 2x2.
  double bin = initial_bin;
  while (true) {
    const Vec2 anchor = lo - Vec2{0.25 * bin, 0.25 * bin};
    std::map<std::pair<long, long>, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < problem.demands.size(); ++k) {
      const Vec2 x = problem.demands[k].location - anchor;
      groups[{static_cast<long>(std::floor(x.x / bin)),
              static_cast<long>(std::floor(x.y / bin))}]
          .push_back(k);
    }
    if (groups.size() + fixed <= max_nodes) {
      out.problem.demands.clear();
      out.radius = 0.0;
      for (const auto& [key, members] : groups) {
        double m = 0.0;
        Vec2 moment;
        for (std::size_t k : members) {
          m += problem.demands[k].mass;
          moment += problem.demands[k].location * problem.demands[k].mass;
        }
        Vec2 c = m > 0.0 ? moment * (1.0 / m) : problem.demands[members[0]].location;
        for (std::size_t k : members) {
          out.radius = std::max(out.radius, distance(c, problem.demands[k].location));
        }
        out.problem.demands.push_back({c, m});
      }
      return out;
    }
    bin *= 2.0;
  }
}

double wasserstein1(std::span<const PointSource> a,
                    std::span<const PointSource> b) {
  std::vector<MassNode> sup;
  std::vector<MassNode> dem;
  double ta = 0.0;
  double tb = 0.0;
  for (const auto& p : a) {
    sup.push_back({p.location, p.rate});
    ta += p.rate;
  }
  for (const auto& p : b) {
    dem.push_back({p.location, p.rate});
    tb += p.rate;
  }
  if (std::abs(ta - tb) > 1e-9 * std::max(ta, tb)) {
    throw std::invalid_argument("wasserstein1: measures have different mass");
  }
  double acc = 0.0;
  for (auto& d : dem) {
    d.mass *= ta / tb;
    acc += d.mass;
  }
  if (acc > ta) {
    for (auto& d : dem) d.mass *= ta / acc;
  }
  DiscreteProblem p{std::move(sup), std::move(dem), {}};
  return solve_primal(p).primal_value;
}

std::vector<double> node_values(const DiscreteProblem& problem,
                                const std::function<double(Vec2)>& u) {
  std::vector<double> v(problem.node_count());
  for (std::size_t a = 0; a < v.size(); ++a) v[a] = u(problem.node_position(a));
  return v;
}

CertificateReport certify(std::span<const double> u,
                          const TransportSolution& solution,
                          const DiscreteProblem& problem, double tolerance) {
  CertificateReport r;
  r.tolerance = tolerance;
  r.primal_value = solution.primal_value;
  const std::size_t ns = problem.supplies.size();
  const std::size_t nd = problem.demands.size();
  const std::size_t n = problem.node_count();
  for (std::size_t a = 0; a < n; ++a) r.u_value += problem.node_charge(a) * u[a];
  r.duality_gap = std::abs(r.u_value - r.primal_value);

  const double support_floor = 1e-12 * std::max(1.0, problem.supply_total());
  for (const auto& e : solution.plan) {
    if (e.mass <= support_floor) continue;
    const std::size_t sink_node = ns + e.sink;
    const double gap = distance(problem.node_position(e.supply),
                                problem.node_position(sink_node));
    r.slackness_max =
        std::max(r.slackness_max, std::abs(gap - (u[e.supply] - u[sink_node])));
  }
  for (const auto& e : solution.imports) {
    if (e.mass <= support_floor) continue;
    const std::size_t b = ns + nd + e.boundary;
    const std::size_t x = ns + e.demand;
    const double gap = distance(problem.node_position(b), problem.node_position(x));
    r.slackness_max = std::max(r.slackness_max, std::abs(gap - (u[b] - u[x])));
    r.spill_max = std::max(r.spill_max, std::abs(u[b]));
  }
  for (std::size_t b = 0; b < solution.spill.size(); ++b) {
    if (solution.spill[b] <= support_floor) continue;
    r.spill_max = std::max(
        r.spill_max, std::abs(u[ns + nd + b] - problem.boundary[b].wall));
  }
  for (std::size_t a = 0; a < n; ++a) {
    const Vec2 pa = problem.node_position(a);
    for (std::size_t b = a + 1; b < n; ++b) {
      const double lip = std::abs(u[a] - u[b]) - distance(pa, problem.node_position(b));
      r.admissibility = std::max(r.admissibility, lip);
    }
  }
  for (std::size_t b = 0; b < problem.boundary.size(); ++b) {
    const double ub = u[ns + nd + b];
    r.admissibility = std::max({r.admissibility, -ub, ub - problem.boundary[b].wall});
  }
  r.pass = r.duality_gap <= tolerance && r.slackness_max <= tolerance &&
           r.spill_max <= tolerance && r.admissibility <= tolerance;
  return r;
}

SnapshotCertification certify_snapshot(const ConeState& snapshot,
                                       const SourceSet& sources,
                                       const ConvexDomain& domain,
                                       const Grid& grid,
                                       const VerifyOptions& options) {
  SnapshotCertification out;
  const auto problem =
      build_problem(snapshot, sources, domain, grid, options.boundary_spacing);
  out.solution = solve_primal(problem);
  const auto u = node_values(
      problem, [&](Vec2 x) { return eval_u(snapshot, sources, x); });
  out.report = certify(u, out.solution, problem,
                       options.tolerance.value_or(
                           certification_tolerance(grid.spacing())));
  out.report.time = snapshot.time;
  if (options.solve_dual) {
    const auto coarse =
        coarsen(problem, options.dual_max_nodes, 2.0 * grid.spacing());
    out.dual = solve_dual(coarse.problem);
    out.coarse_primal = coarse.radius > 0.0
                            ? solve_primal(coarse.problem).primal_value
                            : out.solution.primal_value;
    auto& r = out.report;
    r.dual_value = out.dual.value;
    r.coarsening_radius = coarse.radius;
    r.dual_primal_gap = std::abs(out.dual.value - out.coarse_primal);
    const double strong = 1e-8 * std::max(1.0, std::abs(out.coarse_primal));
    const double widened =
        r.tolerance + coarse.radius * problem.demand_total();
    r.pass = r.pass && r.dual_primal_gap <= strong &&
             std::abs(out.dual.value - r.primal_value) <= widened &&
             out.dual.max_violation <= 1e-9;
  }
  return out;
}

void write_report(std::ostream& os, const CertificateReport& r) {
  const auto old = os.precision(17);
  os << "time = " << r.time << "\n"
     << "primal = " << r.primal_value << "\n"
     << "u_value = " << r.u_value << "\n"
     << "duality_gap = " << r.duality_gap << "\n"
     << "slackness_max = " << r.slackness_max << "\n"
     << "spill_max = " << r.spill_max << "\n"
     << "admissibility = " << r.admissibility << "\n"
     << "dual = " << r.dual_value << "\n"
     << "dual_primal_gap = " << r.dual_primal_gap << "\n"
     << "coarsening_radius = " << r.coarsening_radius << "\n"
     << "tolerance = " << r.tolerance << "\n"
     << "status = " << (r.pass ? "PASS" : "FAIL") << "\n";
  os.precision(old);
}

}  // namespace sandpile
