#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "sandpile/network_simplex.hpp"
#include "sandpile/transport.hpp"

using namespace sandpile;

namespace {

ConvexDomain unit_square(double g) {
  return ConvexDomain::with_constant_wall({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, g);
}

BoundaryNode node_on(const ConvexDomain& d, std::size_t edge, double s) {
  const auto b = d.boundary_point(edge, s);
  return {b, d.wall_height(b)};
}

// Random instance in the unit square with up to 4 supplies, 5 demands and
// 0-3 boundary nodes. Without boundary nodes the marginals are balanced.
DiscreteProblem random_instance(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> ns_d(1, 4), nd_d(1, 5), nb_d(0, 3), edge(0, 3);
  const ConvexDomain d({{0, 0}, {1, 0}, {1, 1}, {0, 1}},
                       {0.5 * unit(rng), 0.5 * unit(rng), 0.5 * unit(rng), 0.5 * unit(rng)});
  const int ns = ns_d(rng), nd = nd_d(rng), nb = nb_d(rng);
  std::vector<MassNode> supplies, demands;
  std::vector<BoundaryNode> boundary;
  double supply = 0.0;
  for (int i = 0; i < ns; ++i) {
    supplies.push_back({{0.05 + 0.9 * unit(rng), 0.05 + 0.9 * unit(rng)}, 0.1 + unit(rng)});
    supply += supplies.back().mass;
  }
  std::vector<double> w(nd);
  double wsum = 0.0;
  for (double& v : w) wsum += (v = 0.1 + unit(rng));
  const double demand = nb > 0 ? supply * (0.3 + 0.7 * unit(rng)) : supply;
  for (int k = 0; k < nd; ++k) {
    demands.push_back({{0.05 + 0.9 * unit(rng), 0.05 + 0.9 * unit(rng)}, demand * w[k] / wsum});
  }
  for (int b = 0; b < nb; ++b) boundary.push_back(node_on(d, edge(rng), unit(rng)));
  if (nb == 0) {
    double s = 0.0;
    for (const auto& x : demands) s += x.mass;
    demands.back().mass += supply - s;
  }
  return make_problem(std::move(supplies), std::move(demands), std::move(boundary));
}

}  // namespace

TEST_CASE("problem validation") {
  const auto d = unit_square(0.0);
  CHECK_THROWS_AS(make_problem({{{0.5, 0.5}, -1.0}}, {}, {node_on(d, 0, 0.5)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_problem({{{0.5, 0.5}, 1.0}}, {{{0.2, 0.2}, 0.5}}, {}),
                  std::invalid_argument);
  CHECK_THROWS_AS(make_problem({{{0.5, 0.5}, 1.0}}, {{{0.2, 0.2}, 1.5}}, {node_on(d, 0, 0.5)}),
                  std::invalid_argument);
  const auto p = make_problem({{{0.5, 0.5}, 1.0}}, {{{0.2, 0.2}, 0.25}}, {node_on(d, 0, 0.5)});
  CHECK(p.spill_total() == 0.75);
  CHECK(p.node_charge(0) == 1.0);
  CHECK(p.node_charge(1) == -0.25);
  CHECK(p.node_charge(2) == 0.0);
}

TEST_CASE("one supply, one demand") {
  const auto d = unit_square(10.0);
  const auto p = make_problem({{{0.2, 0.5}, 1.0}}, {{{0.5, 0.5}, 1.0}}, {node_on(d, 1, 0.5)});
  const auto sol = solve_primal(p);
  CHECK(sol.primal_value == doctest::Approx(0.3).epsilon(1e-15));
  REQUIRE(sol.plan.size() == 1);
  CHECK(sol.plan[0].sink == 0);
  CHECK(sol.plan[0].mass == 1.0);
  CHECK(sol.spill[0] == 0.0);
  CHECK(sol.marginal_error <= 1e-12);
  CHECK(sol.min_reduced_cost >= -1e-9);

  const std::vector<double> u{0.3, 0.0, 0.0};
  const auto ok = certify(u, sol, p, 1e-6);
  CHECK(ok.duality_gap == doctest::Approx(0.0));
  CHECK(ok.slackness_max == doctest::Approx(0.0));
  CHECK(ok.spill_max == 0.0);
  CHECK(ok.pass);

  // Injected fault at the demand node.
  const std::vector<double> bad{0.3, 0.1, 0.0};
  const auto r = certify(bad, sol, p, 1e-6);
  CHECK(r.slackness_max >= 0.1 - 1e-15);
  CHECK_FALSE(r.pass);
  std::ostringstream os;
  write_report(os, r);
  CHECK(os.str().find("status = FAIL") != std::string::npos);

  const auto dual = solve_dual(p);
  CHECK(dual.value == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dual.potential[0] - dual.potential[1] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dual.max_violation <= 1e-12);
}

TEST_CASE("lone supply escapes over the cheapest stretch of wall") {
  const ConvexDomain d({{0, 0}, {2, 0}, {2.6, 1.2}, {1, 2.2}, {-0.4, 1.1}},
                       {0.1, 0.4, 0.0, 0.7, 0.25});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> ux(0.3, 1.8), uy(0.3, 1.5);
  for (int trial = 0; trial < 10; ++trial) {
    const Vec2 y{ux(rng), uy(rng)};
    REQUIRE(d.contains(y));
    const auto escape = d.d_g_plus(y);
    std::vector<BoundaryNode> nodes;
    for (const auto& b : d.boundary_nodes(0.05)) nodes.push_back({b, d.wall_height(b)});
    const auto coarse = make_problem({{y, 1.0}}, {}, nodes);
    const double arc_only = solve_primal(coarse).primal_value;
    CHECK(arc_only >= escape.value - 1e-12);
    CHECK(arc_only <= escape.value + 0.05);

    for (const auto& b : escape.minimizers) nodes.push_back({b, d.wall_height(b)});
    const auto p = make_problem({{y, 1.0}}, {}, nodes);
    const auto sol = solve_primal(p);
    CHECK(sol.primal_value == doctest::Approx(escape.value).epsilon(1e-12));
    const auto dual = solve_dual(p);
    CHECK(dual.value == doctest::Approx(escape.value).epsilon(1e-10));
  }
}

TEST_CASE("primal agrees with the dense LP oracle on 3x4 instances") {
  std::mt19937_64 rng(314);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto d = unit_square(0.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<MassNode> s, t;
    for (int i = 0; i < 3; ++i) s.push_back({{unit(rng), unit(rng)}, 0.2 + unit(rng)});
    double total = 0.0;
    for (const auto& x : s) total += x.mass;
    for (int k = 0; k < 4; ++k) t.push_back({{unit(rng), unit(rng)}, 0.2 * total * unit(rng)});
    std::vector<BoundaryNode> nodes{{d.boundary_point(0, 0.3), 0.4}, {d.boundary_point(2, 0.6), 0.1}};
    const auto p = make_problem(s, t, nodes);
    const auto sol = solve_primal(p);
    const auto lp = oracle::transport_lp(p, false);
    REQUIRE(lp.feasible);
    CHECK(std::abs(sol.primal_value - lp.value) <= 1e-9);
    CHECK(sol.marginal_error <= 1e-9);
    CHECK(sol.min_reduced_cost >= -1e-9);
  }
}

TEST_CASE("random instances: primal, oracle and dual agree") {
  std::mt19937_64 rng(2718);
  int import_helped = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto p = random_instance(rng);
    const auto plain = solve_primal(p);
    const auto with_import = solve_primal(p, {.allow_import = true});
    const auto lp_plain = oracle::transport_lp(p, false);
    const auto lp_import = oracle::transport_lp(p, true);
    REQUIRE(lp_plain.feasible);
    REQUIRE(lp_import.feasible);
    CHECK(std::abs(plain.primal_value - lp_plain.value) <= 1e-9);
    CHECK(std::abs(with_import.primal_value - lp_import.value) <= 1e-9);

    const auto dual = solve_dual(p);
    CHECK(dual.max_violation <= 1e-9);
    CHECK(std::abs(dual.value - with_import.primal_value) <= 1e-8 * std::max(1.0, with_import.primal_value));
    // Weak duality against the export-only plan.
    CHECK(dual.value <= plain.primal_value + 1e-9);
    if (plain.primal_value > with_import.primal_value + 1e-9) ++import_helped;

    // The network-simplex potentials are themselves dual optimal.
    CHECK(std::abs(with_import.dual_value - with_import.primal_value) <= 1e-8);

    // Spill only goes to a cheapest exit of its supply.
    const std::size_t nd = p.demands.size();
    for (const auto& e : plain.plan) {
      if (e.sink < nd || e.mass <= 1e-12) continue;
      const auto& b = p.boundary[e.sink - nd];
      const Vec2 y = p.supplies[e.supply].location;
      for (const auto& other : p.boundary) {
        CHECK(b.wall + distance(y, b.position()) <=
              other.wall + distance(y, other.position()) + 1e-9);
      }
    }
  }
  MESSAGE(import_helped << " of 40 instances have a cheaper plan with boundary import");
}

TEST_CASE("balanced instances match brute-force assignment") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int n = 1; n <= 6; ++n) {
    for (int trial = 0; trial < 5; ++trial) {
      std::vector<Vec2> a(n), b(n);
      std::vector<PointSource> pa, pb;
      std::vector<MassNode> s, t;
      for (int i = 0; i < n; ++i) {
        a[i] = {unit(rng), unit(rng)};
        b[i] = {unit(rng), unit(rng)};
        pa.push_back({a[i], 0.5});
        pb.push_back({b[i], 0.5});
        s.push_back({a[i], 0.5});
        t.push_back({b[i], 0.5});
      }
      const double brute = oracle::brute_force_w1(a, b, 0.5);
      CHECK(wasserstein1(pa, pb) == doctest::Approx(brute).epsilon(1e-12));
      const auto p = make_problem(s, t, {});
      CHECK(solve_primal(p).primal_value == doctest::Approx(brute).epsilon(1e-12));
      CHECK(solve_dual(p).value == doctest::Approx(brute).epsilon(1e-9));
    }
  }
}

TEST_CASE("network simplex reports infeasibility") {
  NetworkSimplex ns(3);
  ns.set_supply(0, 1.0);
  ns.set_supply(2, -1.0);
  ns.add_arc(0, 1, 1.0);
  CHECK(ns.solve() == NetworkSimplex::Status::Infeasible);

  NetworkSimplex ok(3);
  ok.set_supply(0, 1.0);
  ok.set_supply(2, -1.0);
  const auto a = ok.add_arc(0, 1, 1.0);
  const auto b = ok.add_arc(1, 2, 2.0);
  const auto c = ok.add_arc(0, 2, 4.0);
  REQUIRE(ok.solve() == NetworkSimplex::Status::Optimal);
  CHECK(ok.flow(a) == 1.0);
  CHECK(ok.flow(b) == 1.0);
  CHECK(ok.flow(c) == 0.0);
  CHECK(ok.total_cost() == 3.0);
}

TEST_CASE("coarsening keeps mass and bounds the displacement") {
  const auto d = unit_square(0.0);
  std::vector<MassNode> t;
  for (int i = 0; i < 40; ++i) {
    for (int j = 0; j < 40; ++j) t.push_back({{(i + 0.5) / 40, (j + 0.5) / 40}, 1.0 / 1600});
  }
  const auto p = make_problem({{{0.3, 0.6}, 1.0}, {{0.7, 0.2}, 0.5}}, t, {node_on(d, 0, 0.5)});
  const auto c = coarsen(p, 200, 1.0 / 20);
  CHECK(c.problem.node_count() <= 200);
  CHECK(c.problem.demand_total() == doctest::Approx(p.demand_total()).epsilon(1e-12));
  CHECK(c.problem.supplies.size() == p.supplies.size());
  CHECK(c.problem.boundary.size() == p.boundary.size());
  CHECK(c.radius > 0.0);
  const double fine = solve_primal(p).primal_value;
  const double coarse = solve_primal(c.problem).primal_value;
  CHECK(std::abs(fine - coarse) <= c.radius * p.demand_total() + 1e-12);

  const auto same = coarsen(p, 10000, 1.0 / 20);
  CHECK(same.radius == 0.0);
  CHECK(same.problem.demands.size() == p.demands.size());
}

TEST_CASE("snapshot problems before and after a freeze") {
  const ConvexDomain d({{0, 0}, {2, 0}, {2, 1}, {0, 1}}, {0.1, 0.3, 0.2, 0.0});
  const SourceSet s({{{0.6, 0.5}, 1.0}, {{1.5, 0.4}, 0.7}}, d);
  const double h = 1.0 / 32;
  const ConeIntegrator integ(s, d, {h});
  const auto tr = integ.run(3.0, std::vector<double>{0.05, 3.0});
  const auto& early = tr.snapshots[0];
  const auto& late = tr.snapshots[1];
  REQUIRE(early.active_count() == 2);
  REQUIRE(late.is_frozen(0));

  const auto pe = build_problem(early, s, d, integ.grid(), 0.05);
  CHECK(!pe.boundary.empty());
  CHECK(pe.spill_total() <= 1e-12);
  const auto se = solve_primal(pe);
  double spilled = 0.0;
  for (double v : se.spill) spilled += v;
  CHECK(spilled <= 1e-12);

  const auto pl = build_problem(late, s, d, integ.grid(), 0.05);
  const auto sl = solve_primal(pl);
  double frozen_rate = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) frozen_rate += late.is_frozen(j) ? s[j].rate : 0.0;
  spilled = 0.0;
  for (double v : sl.spill) spilled += v;
  CHECK(spilled == doctest::Approx(frozen_rate).epsilon(1e-9));

  for (const auto* st : {&early, &late}) {
    const auto cert = certify_snapshot(*st, s, d, integ.grid());
    MESSAGE("t = " << st->time << "  gap " << cert.report.duality_gap << "  slack "
                   << cert.report.slackness_max << "  dual gap " << cert.report.dual_primal_gap);
    CHECK(cert.report.pass);
    CHECK(cert.report.tolerance == certification_tolerance(h));
    std::ostringstream os;
    write_report(os, cert.report);
    CHECK(os.str().find("status = PASS") != std::string::npos);

    // Shifting u at a source breaks slackness on every plan entry it feeds.
    const auto p = build_problem(*st, s, d, integ.grid(), 0.05);
    auto u = node_values(p, [&](Vec2 x) { return eval_u(*st, s, x); });
    u[0] += 0.1;
    const auto bad = certify(u, cert.solution, p, certification_tolerance(h));
    CHECK_FALSE(bad.pass);
  }
}

TEST_CASE("a cone below grid resolution puts its demand on the apex") {
  const auto d = unit_square(0.0);
  const SourceSet s({{{0.5, 0.5}, 1.0}, {{0.2, 0.3}, 0.5}}, d);
  const Grid g = Grid::cover(d, 1.0 / 16);
  ConeState st;
  st.radii = {0.2, 0.01};
  st.frozen = {0, 0};
  st.thresholds = {0.5, 0.2};
  const auto p = build_problem(st, s, d, g, 0.1);
  CHECK(p.demand_total() == doctest::Approx(1.5).epsilon(1e-12));
  CHECK(p.demands.back().location == Vec2{0.2, 0.3});
  CHECK(p.demands.back().mass == 0.5);
  const auto cert = certify_snapshot(st, s, d, g);
  CHECK(cert.report.pass);
}
