#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sandpile/geometry.hpp"
#include "sandpile/sources.hpp"

namespace sandpile {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::vector<Vec2> vertices;
  std::vector<double> walls;  // one per vertex, linear along edges

  // Either explicit point sources or a density discretized into n points.
  std::vector<PointSource> points;
  std::optional<DensitySpec> density;
  int n = 0;
  std::vector<int> n_list;

  double horizon = 0.0;
  std::vector<double> snapshots;
  double grid_h = 1.0 / 128.0;
  int threads = 1;

  double boundary_spacing = 0.05;
  std::optional<double> tolerance;  // certification; default 1e-6 + 2h
  std::size_t dual_max_nodes = 2000;
  bool solve_dual = true;

  std::string output = "out";
  std::uint64_t seed = 0;

  ConvexDomain domain() const;
  /// Point sources, discretizing the density with `count` (or n) atoms.
  SourceSet source_set(std::optional<int> count = {}) const;
  double certification_tol() const;
};

/// Parses a YAML run configuration; `name` prefixes diagnostics, which carry
/// the line number and the dotted field path.
RunConfig parse_config(const std::string& text, const std::string& name = "<config>");
RunConfig load_config(const std::string& path);

/// Structured echo of a configuration (stable key order). Round-trips
/// through config_from_echo.
nlohmann::ordered_json config_echo(const RunConfig& cfg);
RunConfig config_from_echo(const nlohmann::ordered_json& echo);

}  // namespace sandpile
