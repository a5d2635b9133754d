// sandpile: simulate / verify / equilibrium / converge.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "sandpile/commands.hpp"
#include "sandpile/config.hpp"

namespace fs = std::filesystem;
using namespace sandpile;

namespace {

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> grid_h;
  bool quiet = false;
};

void add_flags(CLI::App* sub, Flags& f, bool config_required) {
  auto* c = sub->add_option("--config", f.config, "run configuration (YAML)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "output directory");
  sub->add_option("--seed", f.seed, "random seed (Monte Carlo checks only)");
  sub->add_option("--grid-h", f.grid_h, "grid spacing h")->check(CLI::PositiveNumber);
  sub->add_flag("--quiet", f.quiet, "suppress progress output");
}

RunConfig load(const Flags& f) {
  RunConfig cfg = load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (f.grid_h) cfg.grid_h = *f.grid_h;
  if (!f.out.empty()) cfg.output = f.out;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Growing sandpile in a convex silo: simulation and duality certification"};
  app.require_subcommand(1);
  Flags flags;
  auto* simulate = app.add_subcommand("simulate", "run the cone integrator and dump snapshots");
  auto* verify = app.add_subcommand(
      "verify", "certify every snapshot of a run (--config manifest.json or --out run dir)");
  auto* equilibrium = app.add_subcommand("equilibrium", "run to full freeze, compare closed form");
  auto* converge = app.add_subcommand("converge", "sup-differences over density.n_list");
  add_flags(simulate, flags, true);
  add_flags(verify, flags, false);
  add_flags(equilibrium, flags, true);
  add_flags(converge, flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitPass : kExitError;
  }

  try {
    CommandContext ctx;
    ctx.quiet = flags.quiet;
    CommandResult result;
    if (verify->parsed()) {
      fs::path manifest;
      if (!flags.config.empty()) {
        manifest = flags.config;
      } else if (!flags.out.empty()) {
        manifest = fs::path(flags.out) / "manifest.json";
      } else {
        std::cerr << "verify: give --config <manifest.json> or --out <run dir>\n";
        return kExitError;
      }
      if (flags.grid_h) std::cerr << "verify: --grid-h ignored (taken from the manifest)\n";
      result = cmd_verify(manifest, ctx, flags.seed);
    } else {
      const RunConfig cfg = load(flags);
      ctx.out = cfg.output;
      if (simulate->parsed()) result = cmd_simulate(cfg, ctx);
      if (equilibrium->parsed()) result = cmd_equilibrium(cfg, ctx);
      if (converge->parsed()) result = cmd_converge(cfg, ctx);
    }
    return result.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitError;
  }
}
