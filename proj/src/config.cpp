#include "sandpile/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "sandpile/transport.hpp"

namespace sandpile {

namespace {

using json = nlohmann::ordered_json;

class Reader {
 public:
  explicit Reader(std::string name) : name_(std::move(name)) {}

  [[noreturn]] void fail(const YAML::Node& at, const std::string& field,
                         const std::string& msg) const {
    std::ostringstream os;
    os << name_;
    if (at.IsDefined() && at.Mark().line >= 0) os << ":" << at.Mark().line + 1;
    os << ": " << field << ": " << msg;
    throw ConfigError(os.str());
  }

  void only_keys(const YAML::Node& map, const std::string& path,
                 std::set<std::string> allowed) const {
    if (!map.IsMap()) fail(map, path, "expected a mapping");
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) {
        fail(kv.first, path.empty() ? key : path + "." + key, "unknown key");
      }
    }
  }

  YAML::Node need(const YAML::Node& map, const std::string& key,
                  const std::string& path) const {
    YAML::Node n = map[key];
    if (!n) fail(map, path, "missing required key");
    return n;
  }

  double real(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) fail(n, path, "expected a number");
    double v;
    try {
      v = n.as<double>();
    } catch (const YAML::Exception&) {
      fail(n, path, "not a number: '" + n.Scalar() + "'");
    }
    if (!std::isfinite(v)) fail(n, path, "must be finite");
    return v;
  }

  double positive(const YAML::Node& n, const std::string& path) const {
    const double v = real(n, path);
    if (!(v > 0.0)) fail(n, path, "must be > 0");
    return v;
  }

  long long integer(const YAML::Node& n, const std::string& path) const {
    if (!n.IsScalar()) fail(n, path, "expected an integer");
    try {
      return n.as<long long>();
    } catch (const YAML::Exception&) {
      fail(n, path, "not an integer: '" + n.Scalar() + "'");
    }
  }

  Vec2 point(const YAML::Node& n, const std::string& path) const {
    if (!n.IsSequence() || n.size() != 2) fail(n, path, "expected [x, y]");
    return {real(n[0], path + "[0]"), real(n[1], path + "[1]")};
  }

  std::vector<Vec2> polygon(const YAML::Node& n, const std::string& path) const {
    if (!n.IsSequence()) fail(n, path, "expected a list of [x, y]");
    std::vector<Vec2> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
      out.push_back(point(n[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  std::vector<double> reals(const YAML::Node& n, const std::string& path) const {
    if (!n.IsSequence()) fail(n, path, "expected a list of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
      out.push_back(real(n[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
  }

  std::vector<PointSource> sources(const YAML::Node& n, const std::string& path) const {
    if (!n.IsSequence() || n.size() == 0) fail(n, path, "expected a non-empty list");
    std::vector<PointSource> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const std::string p = path + "[" + std::to_string(i) + "]";
      const YAML::Node e = n[i];
      PointSource s;
      if (e.IsSequence()) {
        if (e.size() != 3) fail(e, p, "expected [x, y, rate]");
        s = {{real(e[0], p), real(e[1], p)}, real(e[2], p)};
      } else {
        only_keys(e, p, {"x", "y", "rate"});
        s = {{real(need(e, "x", p), p + ".x"), real(need(e, "y", p), p + ".y")},
             positive(need(e, "rate", p), p + ".rate")};
      }
      if (!(s.rate > 0.0)) fail(e, p, "rate must be > 0");
      out.push_back(s);
    }
    return out;
  }

 private:
  std::string name_;
};

json points_json(std::span<const Vec2> pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.x, p.y});
  return a;
}

json sources_json(std::span<const PointSource> pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back({p.location.x, p.location.y, p.rate});
  return a;
}

std::vector<Vec2> points_from(const json& a) {
  std::vector<Vec2> out;
  for (const auto& p : a) out.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return out;
}

std::vector<PointSource> sources_from(const json& a) {
  std::vector<PointSource> out;
  for (const auto& p : a) {
    out.push_back({{p.at(0).get<double>(), p.at(1).get<double>()}, p.at(2).get<double>()});
  }
  return out;
}

}  // namespace

ConvexDomain RunConfig::domain() const { return ConvexDomain(vertices, walls); }

SourceSet RunConfig::source_set(std::optional<int> count) const {
  const ConvexDomain d = domain();
  if (!density) return SourceSet::merged(points, d);
  return discretize(*density, count.value_or(n), d);
}

double RunConfig::certification_tol() const {
  return tolerance.value_or(certification_tolerance(grid_h));
}

RunConfig parse_config(const std::string& text, const std::string& name) {
  Reader rd(name);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(name + ":" + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError(name + ": empty configuration");
  rd.only_keys(root, "",
               {"domain", "sources", "density", "time", "grid", "verify", "output", "seed"});
  RunConfig cfg;

  const YAML::Node dom = rd.need(root, "domain", "domain");
  rd.only_keys(dom, "domain", {"vertices", "walls"});
  cfg.vertices = rd.polygon(rd.need(dom, "vertices", "domain"), "domain.vertices");
  const YAML::Node walls = dom["walls"];
  if (!walls) {
    cfg.walls.assign(cfg.vertices.size(), 0.0);
  } else if (walls.IsScalar()) {
    cfg.walls.assign(cfg.vertices.size(), rd.real(walls, "domain.walls"));
  } else {
    cfg.walls = rd.reals(walls, "domain.walls");
    if (cfg.walls.size() != cfg.vertices.size()) {
      rd.fail(walls, "domain.walls", "need one value per vertex");
    }
  }
  try {
    (void)cfg.domain();
  } catch (const std::invalid_argument& e) {
    rd.fail(dom, "domain", e.what());
  }

  const YAML::Node src = root["sources"];
  const YAML::Node den = root["density"];
  if (!!src == !!den) rd.fail(root, "sources", "give exactly one of 'sources' or 'density'");
  if (src) {
    rd.only_keys(src, "sources", {"points"});
    cfg.points = rd.sources(rd.need(src, "points", "sources"), "sources.points");
  } else {
    rd.only_keys(den, "density",
                 {"kind", "total_mass", "polygon", "center", "sigma", "radius", "points",
                  "n", "n_list"});
    const auto kind = rd.need(den, "kind", "density").as<std::string>();
    if (kind == "uniform") {
      cfg.density = DensitySpec::uniform(
          rd.polygon(rd.need(den, "polygon", "density"), "density.polygon"),
          rd.positive(rd.need(den, "total_mass", "density"), "density.total_mass"));
    } else if (kind == "gaussian") {
      cfg.density = DensitySpec::gaussian(
          rd.point(rd.need(den, "center", "density"), "density.center"),
          rd.positive(rd.need(den, "sigma", "density"), "density.sigma"),
          rd.positive(rd.need(den, "radius", "density"), "density.radius"),
          rd.positive(rd.need(den, "total_mass", "density"), "density.total_mass"));
    } else if (kind == "points") {
      cfg.density = DensitySpec::point_list(
          rd.sources(rd.need(den, "points", "density"), "density.points"));
    } else {
      rd.fail(den["kind"], "density.kind", "expected uniform, gaussian or points");
    }
    if (den["n_list"]) {
      const YAML::Node nl = den["n_list"];
      if (!nl.IsSequence() || nl.size() == 0) rd.fail(nl, "density.n_list", "expected a list");
      for (std::size_t i = 0; i < nl.size(); ++i) {
        const auto v = rd.integer(nl[i], "density.n_list");
        if (v < 1) rd.fail(nl[i], "density.n_list", "entries must be >= 1");
        if (!cfg.n_list.empty() && v <= cfg.n_list.back()) {
          rd.fail(nl[i], "density.n_list", "must be strictly ascending");
        }
        cfg.n_list.push_back(static_cast<int>(v));
      }
    }
    if (den["n"]) {
      const auto v = rd.integer(den["n"], "density.n");
      if (v < 1) rd.fail(den["n"], "density.n", "must be >= 1");
      cfg.n = static_cast<int>(v);
    } else if (!cfg.n_list.empty()) {
      cfg.n = cfg.n_list.back();
    } else {
      rd.fail(den, "density.n", "missing required key");
    }
  }

  const YAML::Node tm = rd.need(root, "time", "time");
  rd.only_keys(tm, "time", {"horizon", "snapshots"});
  cfg.horizon = rd.positive(rd.need(tm, "horizon", "time"), "time.horizon");
  if (tm["snapshots"]) {
    cfg.snapshots = rd.reals(tm["snapshots"], "time.snapshots");
    for (std::size_t i = 0; i < cfg.snapshots.size(); ++i) {
      const double t = cfg.snapshots[i];
      if (t < 0.0 || t > cfg.horizon) {
        rd.fail(tm["snapshots"][i], "time.snapshots", "must lie in [0, horizon]");
      }
      if (i > 0 && t < cfg.snapshots[i - 1]) {
        rd.fail(tm["snapshots"][i], "time.snapshots", "must be non-decreasing");
      }
    }
  } else {
    cfg.snapshots = {cfg.horizon};
  }

  if (const YAML::Node g = root["grid"]) {
    rd.only_keys(g, "grid", {"h", "threads"});
    if (g["h"]) cfg.grid_h = rd.positive(g["h"], "grid.h");
    if (g["threads"]) {
      const auto t = rd.integer(g["threads"], "grid.threads");
      if (t < 1) rd.fail(g["threads"], "grid.threads", "must be >= 1");
      cfg.threads = static_cast<int>(t);
    }
  }
  if (const YAML::Node v = root["verify"]) {
    rd.only_keys(v, "verify", {"boundary_spacing", "tolerance", "dual_max_nodes", "solve_dual"});
    if (v["boundary_spacing"]) {
      cfg.boundary_spacing = rd.positive(v["boundary_spacing"], "verify.boundary_spacing");
    }
    if (v["tolerance"]) cfg.tolerance = rd.positive(v["tolerance"], "verify.tolerance");
    if (v["dual_max_nodes"]) {
      const auto m = rd.integer(v["dual_max_nodes"], "verify.dual_max_nodes");
      if (m < 16) rd.fail(v["dual_max_nodes"], "verify.dual_max_nodes", "must be >= 16");
      cfg.dual_max_nodes = static_cast<std::size_t>(m);
    }
    if (v["solve_dual"]) cfg.solve_dual = v["solve_dual"].as<bool>();
  }
  if (root["output"]) cfg.output = root["output"].as<std::string>();
  if (root["seed"]) {
    const auto s = rd.integer(root["seed"], "seed");
    if (s < 0) rd.fail(root["seed"], "seed", "must be >= 0");
    cfg.seed = static_cast<std::uint64_t>(s);
  }

  try {
    (void)cfg.source_set();
  } catch (const std::invalid_argument& e) {
    rd.fail(src ? src : den, src ? "sources" : "density", e.what());
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open configuration file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

json config_echo(const RunConfig& cfg) {
  json j;
  j["domain"] = {{"vertices", points_json(cfg.vertices)}, {"walls", cfg.walls}};
  if (cfg.density) {
    const auto& d = *cfg.density;
    json dj;
    switch (d.kind) {
      case DensitySpec::Kind::UniformPolygon:
        dj["kind"] = "uniform";
        dj["polygon"] = points_json(d.polygon);
        dj["total_mass"] = d.total_mass;
        break;
      case DensitySpec::Kind::GaussianTruncated:
        dj["kind"] = "gaussian";
        dj["center"] = {d.center.x, d.center.y};
        dj["sigma"] = d.sigma;
        dj["radius"] = d.radius;
        dj["total_mass"] = d.total_mass;
        break;
      case DensitySpec::Kind::PointList:
        dj["kind"] = "points";
        dj["points"] = sources_json(d.points);
        break;
    }
    dj["n"] = cfg.n;
    dj["n_list"] = cfg.n_list;
    j["density"] = dj;
  } else {
    j["sources"] = {{"points", sources_json(cfg.points)}};
  }
  j["time"] = {{"horizon", cfg.horizon}, {"snapshots", cfg.snapshots}};
  j["grid"] = {{"h", cfg.grid_h}, {"threads", cfg.threads}};
  json v = {{"boundary_spacing", cfg.boundary_spacing}};
  if (cfg.tolerance) v["tolerance"] = *cfg.tolerance;
  v["dual_max_nodes"] = cfg.dual_max_nodes;
  v["solve_dual"] = cfg.solve_dual;
  j["verify"] = v;
  j["output"] = cfg.output;
  j["seed"] = cfg.seed;
  return j;
}

RunConfig config_from_echo(const json& j) {
  RunConfig cfg;
  try {
    cfg.vertices = points_from(j.at("domain").at("vertices"));
    cfg.walls = j.at("domain").at("walls").get<std::vector<double>>();
    if (j.contains("density")) {
      const auto& dj = j.at("density");
      const auto kind = dj.at("kind").get<std::string>();
      if (kind == "uniform") {
        cfg.density = DensitySpec::uniform(points_from(dj.at("polygon")),
                                           dj.at("total_mass").get<double>());
      } else if (kind == "gaussian") {
        cfg.density = DensitySpec::gaussian(
            {dj.at("center").at(0).get<double>(), dj.at("center").at(1).get<double>()},
            dj.at("sigma").get<double>(), dj.at("radius").get<double>(),
            dj.at("total_mass").get<double>());
      } else {
        cfg.density = DensitySpec::point_list(sources_from(dj.at("points")));
      }
      cfg.n = dj.at("n").get<int>();
      cfg.n_list = dj.at("n_list").get<std::vector<int>>();
    } else {
      cfg.points = sources_from(j.at("sources").at("points"));
    }
    cfg.horizon = j.at("time").at("horizon").get<double>();
    cfg.snapshots = j.at("time").at("snapshots").get<std::vector<double>>();
    cfg.grid_h = j.at("grid").at("h").get<double>();
    cfg.threads = j.at("grid").at("threads").get<int>();
    const auto& v = j.at("verify");
    cfg.boundary_spacing = v.at("boundary_spacing").get<double>();
    if (v.contains("tolerance")) cfg.tolerance = v.at("tolerance").get<double>();
    cfg.dual_max_nodes = v.at("dual_max_nodes").get<std::size_t>();
    cfg.solve_dual = v.at("solve_dual").get<bool>();
    cfg.output = j.at("output").get<std::string>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest config echo: ") + e.what());
  }
  return cfg;
}

}  // namespace sandpile
