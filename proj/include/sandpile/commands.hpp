#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include <nlohmann/json.hpp>

#include "sandpile/config.hpp"

namespace sandpile {

inline constexpr int kExitPass = 0;
inline constexpr int kExitFail = 1;
inline constexpr int kExitError = 2;

struct CommandContext {
  std::filesystem::path out;
  bool quiet = false;
  std::ostream* log = nullptr;  // defaults to std::cout
};

struct CommandResult {
  int exit_code = kExitPass;
  nlohmann::ordered_json summary;
};

/// Runs the simulation and writes, into ctx.out:
///   u_NNN.csv, mu_NNN.csv, nu_NNN.csv per snapshot, freeze_log.csv and
///   manifest.json (timings under their own key).
CommandResult cmd_simulate(const RunConfig& cfg, const CommandContext& ctx);

/// Certifies every snapshot of a completed run. Writes certificate.txt next
/// to the manifest and records the summaries in the manifest.
CommandResult cmd_verify(const std::filesystem::path& manifest,
                         const CommandContext& ctx,
                         std::optional<std::uint64_t> seed = {});

/// Runs until every source freezes and compares against the closed form.
/// Writes equilibrium_closed.csv, equilibrium_final.csv, freeze_times.csv and
/// equilibrium.json. Throws std::runtime_error when equilibrium cannot be
/// reached within the horizon or the non-termination bound.
CommandResult cmd_equilibrium(const RunConfig& cfg, const CommandContext& ctx);

/// Simulates the density discretized with each n of the n_list and tabulates
/// sup |u^{n_i} - u^{n_{i+1}}| at every snapshot time (converge.csv,
/// converge.json).
CommandResult cmd_converge(const RunConfig& cfg, const CommandContext& ctx);

}  // namespace sandpile
