#include "sandpile/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "sandpile/fields.hpp"
#include "sandpile/integrator.hpp"
#include "sandpile/io.hpp"
#include "sandpile/transport.hpp"

namespace sandpile {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::ostream& log_of(const CommandContext& ctx) {
  return ctx.log ? *ctx.log : std::cout;
}

template <class Fn>
void write_file(const fs::path& path, Fn&& fn) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

std::string numbered(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%03zu.csv", stem, i);
  return buf;
}

GridControl control_of(const RunConfig& cfg) {
  GridControl c;
  c.h = cfg.grid_h;
  c.threads = cfg.threads;
  return c;
}

json freeze_json(const ConeIntegrator& in, const FreezeEvent& e) {
  const auto escape = in.domain().d_g_plus(in.sources()[e.source].location);
  const auto& b = escape.minimizers.front();
  return {{"source", e.source},
          {"time", e.time},
          {"edge_index", b.edge_index},
          {"edge_parameter", b.edge_parameter},
          {"mass", in.sources()[e.source].rate}};
}

}  // namespace

CommandResult cmd_simulate(const RunConfig& cfg, const CommandContext& ctx) {
  Stopwatch total;
  fs::create_directories(ctx.out);
  const ConvexDomain domain = cfg.domain();
  const SourceSet sources = cfg.source_set();
  const ConeIntegrator integrator(sources, domain, control_of(cfg));

  RunOptions opts;
  opts.record_steps = false;
  Stopwatch integrate;
  Trajectory traj;
  try {
    traj = integrator.run(cfg.horizon, cfg.snapshots, opts);
  } catch (const std::exception& e) {
    std::ostringstream msg;
    msg << "integration to T = " << cfg.horizon << " failed";
    if (!cfg.snapshots.empty()) {
      msg << " (snapshots " << cfg.snapshots.front() << " .. " << cfg.snapshots.back() << ")";
    }
    msg << ": " << e.what();
    throw std::runtime_error(msg.str());
  }
  const double integrate_s = integrate.seconds();

  json manifest;
  manifest["format"] = "sandpile-run/1";
  manifest["config"] = config_echo(cfg);
  json src = json::array();
  for (std::size_t j = 0; j < sources.size(); ++j) {
    src.push_back({{"x", sources[j].location.x},
                   {"y", sources[j].location.y},
                   {"rate", sources[j].rate},
                   {"threshold", integrator.thresholds()[j]}});
  }
  manifest["sources"] = src;
  manifest["analytic_end"] = traj.analytic_end;

  json freezes = json::array();
  for (const auto& e : traj.freezes) freezes.push_back(freeze_json(integrator, e));
  manifest["freezes"] = freezes;
  write_file(ctx.out / "freeze_log.csv", [&](std::ostream& os) {
    os << "source,time,edge_index,edge_parameter,mass\n";
    for (const auto& f : freezes) {
      os << f["source"].get<std::size_t>() << ',' << format_real(f["time"].get<double>())
         << ',' << f["edge_index"].get<std::size_t>() << ','
         << format_real(f["edge_parameter"].get<double>()) << ','
         << format_real(f["mass"].get<double>()) << '\n';
    }
  });
  manifest["freeze_log"] = "freeze_log.csv";

  Stopwatch dumps;
  json snaps = json::array();
  for (std::size_t i = 0; i < traj.snapshots.size(); ++i) {
    const ConeState& s = traj.snapshots[i];
    const auto u = sample_u(integrator.grid(), s, sources);
    const auto areas = partition(integrator.grid(), sources, s.radii).areas;
    const auto mu = rolling_measure(s, sources, areas, domain, integrator.grid());
    const auto nu = spill_measure(s, sources, domain);
    json entry;
    entry["index"] = i;
    entry["time"] = s.time;
    entry["radii"] = s.radii;
    entry["frozen"] = s.frozen;
    entry["u"] = numbered("u", i);
    entry["mu"] = numbered("mu", i);
    entry["nu"] = numbered("nu", i);
    entry["u_sup"] = u.sup_abs();
    entry["mu_mass"] = mu.total_mass;
    entry["nu_mass"] = nu.total_mass();
    write_file(ctx.out / numbered("u", i), [&](std::ostream& os) { write_field_csv(os, u); });
    write_file(ctx.out / numbered("mu", i), [&](std::ostream& os) { write_path_csv(os, mu); });
    write_file(ctx.out / numbered("nu", i),
               [&](std::ostream& os) { write_boundary_csv(os, nu); });
    snaps.push_back(entry);
    if (!ctx.quiet) {
      log_of(ctx) << "snapshot " << i << "  t = " << s.time << "  sup u = " << u.sup_abs()
                  << "  |mu| = " << mu.total_mass << "  |nu| = " << nu.total_mass() << "\n";
    }
  }
  manifest["snapshots"] = snaps;
  manifest["certificates"] = nullptr;
  manifest["timings"] = {{"integrate_s", integrate_s},
                         {"dump_s", dumps.seconds()},
                         {"total_s", total.seconds()}};
  write_json(ctx.out / "manifest.json", manifest);
  if (!ctx.quiet) {
    log_of(ctx) << traj.freezes.size() << " freeze event(s); manifest written to "
                << (ctx.out / "manifest.json").string() << "\n";
  }
  return {kExitPass, manifest};
}

CommandResult cmd_verify(const fs::path& manifest_path, const CommandContext& ctx,
                         std::optional<std::uint64_t> seed) {
  Stopwatch total;
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error("manifest " + manifest_path.string() + ": " + e.what());
  }
  const fs::path dir = manifest_path.parent_path();
  const RunConfig cfg = config_from_echo(manifest.at("config"));
  const ConvexDomain domain = cfg.domain();

  std::vector<PointSource> pts;
  std::vector<double> thresholds;
  for (const auto& s : manifest.at("sources")) {
    pts.push_back({{s.at("x").get<double>(), s.at("y").get<double>()}, s.at("rate").get<double>()});
    thresholds.push_back(s.at("threshold").get<double>());
  }
  const SourceSet sources(pts, domain);
  const Grid grid = Grid::cover(domain, cfg.grid_h);
  VerifyOptions vopt;
  vopt.boundary_spacing = cfg.boundary_spacing;
  vopt.dual_max_nodes = cfg.dual_max_nodes;
  vopt.solve_dual = cfg.solve_dual;
  vopt.tolerance = cfg.certification_tol();

  std::mt19937_64 rng(seed.value_or(cfg.seed));
  std::uniform_real_distribution<double> ux(domain.bbox_min().x, domain.bbox_max().x);
  std::uniform_real_distribution<double> uy(domain.bbox_min().y, domain.bbox_max().y);
  auto random_inside = [&] {
    while (true) {
      const Vec2 p{ux(rng), uy(rng)};
      if (domain.contains(p)) return p;
    }
  };

  bool all_pass = true;
  json certs = json::array();
  std::ostringstream report;
  for (const auto& snap : manifest.at("snapshots")) {
    for (const char* key : {"u", "mu", "nu"}) {
      const fs::path f = dir / snap.at(key).get<std::string>();
      if (!fs::exists(f)) throw std::runtime_error("missing snapshot file " + f.string());
    }
    ConeState state;
    state.time = snap.at("time").get<double>();
    state.radii = snap.at("radii").get<std::vector<double>>();
    state.frozen = snap.at("frozen").get<std::vector<std::uint8_t>>();
    state.thresholds = thresholds;
    if (state.radii.size() != sources.size() || state.frozen.size() != sources.size()) {
      throw std::runtime_error("snapshot state does not match the source count");
    }

    // The dump must agree with the cone envelope it claims to come from.
    std::ifstream uin(dir / snap.at("u").get<std::string>());
    const GridField dumped = read_field_csv(uin, grid);
    double dump_err = 0.0;
    for (std::size_t c = 0; c < grid.cell_count(); ++c) {
      if (!grid.inside(c)) continue;
      dump_err = std::max(dump_err,
                          std::abs(dumped.values[c] - eval_u(state, sources, grid.center(c))));
    }

    double lip = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const Vec2 a = random_inside();
      const Vec2 b = random_inside();
      lip = std::max(lip, std::abs(eval_u(state, sources, a) - eval_u(state, sources, b)) -
                              distance(a, b));
    }

    const auto cert = certify_snapshot(state, sources, domain, grid, vopt);
    const auto& r = cert.report;
    const bool pass = r.pass && dump_err == 0.0 && lip <= 1e-12;
    all_pass = all_pass && pass;
    write_report(report, r);
    report << "dump_error = " << format_real(dump_err) << "\n"
           << "lipschitz_excess = " << format_real(lip) << "\n\n";
    certs.push_back({{"time", r.time},
                     {"primal", r.primal_value},
                     {"u_value", r.u_value},
                     {"duality_gap", r.duality_gap},
                     {"slackness_max", r.slackness_max},
                     {"spill_max", r.spill_max},
                     {"admissibility", r.admissibility},
                     {"dual", std::isnan(r.dual_value) ? json(nullptr) : json(r.dual_value)},
                     {"dual_primal_gap",
                      std::isnan(r.dual_primal_gap) ? json(nullptr) : json(r.dual_primal_gap)},
                     {"coarsening_radius", r.coarsening_radius},
                     {"dump_error", dump_err},
                     {"lipschitz_excess", lip},
                     {"tolerance", r.tolerance},
                     {"status", pass ? "PASS" : "FAIL"}});
    if (!ctx.quiet) {
      log_of(ctx) << "t = " << r.time << "  gap = " << r.duality_gap
                  << "  slack = " << r.slackness_max << "  spill = " << r.spill_max
                  << "  -> " << (pass ? "PASS" : "FAIL") << "\n";
    }
  }
  report << "overall = " << (all_pass ? "PASS" : "FAIL") << "\n";
  write_file(dir / "certificate.txt", [&](std::ostream& os) { os << report.str(); });

  manifest["certificates"] = {{"status", all_pass ? "PASS" : "FAIL"}, {"snapshots", certs}};
  manifest["timings"]["verify_s"] = total.seconds();
  write_json(manifest_path, manifest);
  if (!ctx.quiet) log_of(ctx) << "overall: " << (all_pass ? "PASS" : "FAIL") << "\n";
  return {all_pass ? kExitPass : kExitFail, manifest["certificates"]};
}

CommandResult cmd_equilibrium(const RunConfig& cfg, const CommandContext& ctx) {
  Stopwatch total;
  fs::create_directories(ctx.out);
  const ConvexDomain domain = cfg.domain();
  const SourceSet sources = cfg.source_set();
  const ConeIntegrator integrator(sources, domain, control_of(cfg));
  const auto thresholds = integrator.thresholds();

  // Volume argument: r_j = d_j forces u >= d_j - diam on all of the domain,
  // while the pile holds at most t * sum c before anything spills.
  double bound = 0.0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    const double earliest =
        (thresholds[j] - domain.diameter()) * domain.area() / sources.total_rate();
    if (earliest > cfg.horizon) {
      std::ostringstream msg;
      msg << "equilibrium unreachable: source " << j << " cannot freeze before t = "
          << earliest << " (escape cost " << thresholds[j] << "), horizon is "
          << cfg.horizon;
      throw std::runtime_error(msg.str());
    }
    bound += domain.area() * thresholds[j] / sources[j].rate;
  }
  bound *= 1.1;

  RunOptions opts;
  opts.record_steps = false;
  const double horizon = std::min(cfg.horizon, bound);
  const auto traj = integrator.run(horizon, std::vector<double>{}, opts);
  if (!traj.final_state.all_frozen()) {
    std::ostringstream msg;
    if (cfg.horizon < bound) {
      msg << "equilibrium not reached by horizon " << cfg.horizon << " ("
          << traj.final_state.active_count() << " source(s) still active)";
    } else {
      msg << "non-termination: sources still active at t = " << horizon
          << ", beyond the freeze-time bound";
    }
    throw std::runtime_error(msg.str());
  }

  const Grid& grid = integrator.grid();
  GridField closed{grid, std::vector<double>(grid.cell_count(), 0.0)};
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    if (grid.inside(c)) closed.values[c] = equilibrium_field(sources, thresholds, grid.center(c));
  }
  const auto sim = sample_u(grid, traj.final_state, sources);
  double sup = 0.0;
  for (std::size_t c = 0; c < grid.cell_count(); ++c) {
    sup = std::max(sup, std::abs(closed.values[c] - sim.values[c]));
  }
  const double tol = 2.0 * cfg.grid_h;

  std::vector<double> freeze_time(sources.size(), 0.0);
  for (const auto& e : traj.freezes) freeze_time[e.source] = e.time;
  bool times_ok = true;
  json table = json::array();
  write_file(ctx.out / "freeze_times.csv", [&](std::ostream& os) {
    os << "source,x,y,rate,threshold,freeze_time,upper_bound\n";
    for (std::size_t j = 0; j < sources.size(); ++j) {
      const double ub = domain.area() * thresholds[j] / sources[j].rate;
      times_ok = times_ok && freeze_time[j] <= 1.1 * ub;
      os << j << ',' << format_real(sources[j].location.x) << ','
         << format_real(sources[j].location.y) << ',' << format_real(sources[j].rate) << ','
         << format_real(thresholds[j]) << ',' << format_real(freeze_time[j]) << ','
         << format_real(ub) << '\n';
      table.push_back({{"source", j},
                       {"threshold", thresholds[j]},
                       {"freeze_time", freeze_time[j]},
                       {"upper_bound", ub}});
    }
  });
  write_file(ctx.out / "equilibrium_closed.csv",
             [&](std::ostream& os) { write_field_csv(os, closed); });
  write_file(ctx.out / "equilibrium_final.csv",
             [&](std::ostream& os) { write_field_csv(os, sim); });

  const bool pass = sup <= tol && times_ok;
  json summary;
  summary["format"] = "sandpile-equilibrium/1";
  summary["config"] = config_echo(cfg);
  summary["sup_difference"] = sup;
  summary["tolerance"] = tol;
  summary["freeze_times"] = table;
  summary["files"] = {{"closed", "equilibrium_closed.csv"},
                      {"final", "equilibrium_final.csv"},
                      {"freeze_times", "freeze_times.csv"}};
  summary["status"] = pass ? "PASS" : "FAIL";
  summary["timings"] = {{"total_s", total.seconds()}};
  write_json(ctx.out / "equilibrium.json", summary);
  if (!ctx.quiet) {
    for (std::size_t j = 0; j < sources.size(); ++j) {
      log_of(ctx) << "source " << j << "  t_freeze = " << freeze_time[j]
                  << "  d_g+ = " << thresholds[j] << "\n";
    }
    log_of(ctx) << "sup |u_final - u_closed| = " << sup << "  (tolerance " << tol << ")  -> "
                << (pass ? "PASS" : "FAIL") << "\n";
  }
  return {pass ? kExitPass : kExitFail, summary};
}

CommandResult cmd_converge(const RunConfig& cfg, const CommandContext& ctx) {
  Stopwatch total;
  if (!cfg.density) throw std::runtime_error("converge needs a 'density' section");
  if (cfg.n_list.empty()) throw std::runtime_error("converge needs density.n_list");
  fs::create_directories(ctx.out);
  const ConvexDomain domain = cfg.domain();
  const Grid grid = Grid::cover(domain, cfg.grid_h);

  RunOptions opts;
  opts.record_steps = false;
  std::vector<std::vector<GridField>> fields;
  json runs = json::array();
  for (int n : cfg.n_list) {
    const SourceSet sources = cfg.source_set(n);
    const auto traj = ConeIntegrator(sources, domain, control_of(cfg))
                          .run(cfg.horizon, cfg.snapshots, opts);
    std::vector<GridField> per_time;
    for (const auto& s : traj.snapshots) per_time.push_back(sample_u(grid, s, sources));
    fields.push_back(std::move(per_time));
    runs.push_back({{"n", n}, {"sources", sources.size()}});
    if (!ctx.quiet) log_of(ctx) << "n = " << n << ": " << sources.size() << " source(s)\n";
  }

  json table = json::array();
  std::vector<double> previous(cfg.snapshots.size(), std::numeric_limits<double>::infinity());
  bool decreasing = true;
  write_file(ctx.out / "converge.csv", [&](std::ostream& os) {
    os << "n_coarse,n_fine,time,sup_difference\n";
    for (std::size_t i = 0; i + 1 < fields.size(); ++i) {
      for (std::size_t k = 0; k < cfg.snapshots.size(); ++k) {
        double sup = 0.0;
        for (std::size_t c = 0; c < grid.cell_count(); ++c) {
          sup = std::max(sup, std::abs(fields[i][k].values[c] - fields[i + 1][k].values[c]));
        }
        decreasing = decreasing && sup < previous[k];
        previous[k] = sup;
        os << cfg.n_list[i] << ',' << cfg.n_list[i + 1] << ','
           << format_real(cfg.snapshots[k]) << ',' << format_real(sup) << '\n';
        table.push_back({{"n_coarse", cfg.n_list[i]},
                         {"n_fine", cfg.n_list[i + 1]},
                         {"time", cfg.snapshots[k]},
                         {"sup_difference", sup}});
        if (!ctx.quiet) {
          log_of(ctx) << "n " << cfg.n_list[i] << " -> " << cfg.n_list[i + 1]
                      << "  t = " << cfg.snapshots[k] << "  sup diff = " << sup << "\n";
        }
      }
    }
  });

  json summary;
  summary["format"] = "sandpile-converge/1";
  summary["config"] = config_echo(cfg);
  summary["runs"] = runs;
  summary["table"] = table;
  summary["strictly_decreasing"] = decreasing;
  summary["timings"] = {{"total_s", total.seconds()}};
  write_json(ctx.out / "converge.json", summary);
  if (!ctx.quiet) {
    log_of(ctx) << "successive differences "
                << (decreasing ? "strictly decrease" : "do not strictly decrease") << "\n";
  }
  return {kExitPass, summary};
}

}  // namespace sandpile
