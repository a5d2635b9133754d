#include "sandpile/sources.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sandpile {

namespace {

void validate_points(std::span<const PointSource> points,
                     const ConvexDomain& domain) {
  if (points.empty()) throw std::invalid_argument("source set is empty");
  for (std::size_t j = 0; j < points.size(); ++j) {
    const auto& p = points[j];
    if (!std::isfinite(p.rate) || !(p.rate > 0.0)) {
      throw std::invalid_argument("source " + std::to_string(j) +
                                  " has non-positive rate");
    }
    if (!domain.contains(p.location) ||
        !(domain.boundary_distance(p.location) > 0.0)) {
      throw std::invalid_argument("source " + std::to_string(j) +
                                  " is not strictly inside the domain");
    }
  }
}

}  // namespace

SourceSet::SourceSet(std::vector<PointSource> points,
                     const ConvexDomain& domain)
    : points_(std::move(points)) {
  validate_points(points_, domain);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    for (std::size_t j = i + 1; j < points_.size(); ++j) {
      if (points_[i].location == points_[j].location) {
        throw std::invalid_argument("sources " + std::to_string(i) + " and " +
                                    std::to_string(j) + " coincide");
      }
    }
    total_rate_ += points_[i].rate;
  }
}

SourceSet SourceSet::merged(std::vector<PointSource> points,
                            const ConvexDomain& domain) {
  std::vector<PointSource> out;
  for (const auto& p : points) {
    auto it = std::find_if(out.begin(), out.end(), [&](const PointSource& q) {
      return q.location == p.location;
    });
    if (it == out.end()) {
      out.push_back(p);
    } else {
      it->rate += p.rate;
    }
  }
  return SourceSet(std::move(out), domain);
}

double SourceSet::max_rate() const {
  double c = 0.0;
  for (const auto& p : points_) c = std::max(c, p.rate);
  return c;
}

SourceSet SourceSet::scaled(double factor, const ConvexDomain& domain) const {
  auto pts = points_;
  for (auto& p : pts) p.rate *= factor;
  return SourceSet(std::move(pts), domain);
}

DensitySpec DensitySpec::uniform(std::vector<Vec2> polygon, double total_mass) {
  DensitySpec f;
  f.kind = Kind::UniformPolygon;
  f.polygon = std::move(polygon);
  f.total_mass = total_mass;
  return f;
}

DensitySpec DensitySpec::gaussian(Vec2 center, double sigma, double radius,
                                  double total_mass) {
  DensitySpec f;
  f.kind = Kind::GaussianTruncated;
  f.center = center;
  f.sigma = sigma;
  f.radius = radius;
  f.total_mass = total_mass;
  return f;
}

DensitySpec DensitySpec::point_list(std::vector<PointSource> points) {
  DensitySpec f;
  f.kind = Kind::PointList;
  for (const auto& p : points) f.total_mass += p.rate;
  f.points = std::move(points);
  return f;
}

bool DensitySpec::in_support(Vec2 x) const {
  switch (kind) {
    case Kind::UniformPolygon:
      for (std::size_t i = 0; i < polygon.size(); ++i) {
        const Vec2 a = polygon[i];
        const Vec2 b = polygon[(i + 1) % polygon.size()];
        if (cross(b - a, x - a) < 0.0) return false;
      }
      return true;
    case Kind::GaussianTruncated:
      return distance(x, center) <= radius;
    case Kind::PointList:
      return false;
  }
  return false;
}

double DensitySpec::shape(Vec2 x) const {
  if (!in_support(x)) return 0.0;
  if (kind == Kind::GaussianTruncated) {
    const Vec2 d = x - center;
    return std::exp(-dot(d, d) / (2.0 * sigma * sigma));
  }
  return 1.0;
}

Vec2 DensitySpec::support_min() const {
  switch (kind) {
    case Kind::UniformPolygon: {
      Vec2 m = polygon.front();
      for (auto v : polygon) m = {std::min(m.x, v.x), std::min(m.y, v.y)};
      return m;
    }
    case Kind::GaussianTruncated:
      return {center.x - radius, center.y - radius};
    case Kind::PointList: {
      Vec2 m = points.front().location;
      for (const auto& p : points) {
        m = {std::min(m.x, p.location.x), std::min(m.y, p.location.y)};
      }
      return m;
    }
  }
  return {};
}

Vec2 DensitySpec::support_max() const {
  switch (kind) {
    case Kind::UniformPolygon: {
      Vec2 m = polygon.front();
      for (auto v : polygon) m = {std::max(m.x, v.x), std::max(m.y, v.y)};
      return m;
    }
    case Kind::GaussianTruncated:
      return {center.x + radius, center.y + radius};
    case Kind::PointList: {
      Vec2 m = points.front().location;
      for (const auto& p : points) {
        m = {std::max(m.x, p.location.x), std::max(m.y, p.location.y)};
      }
      return m;
    }
  }
  return {};
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject,
                              std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2 a = clip[i];
    const Vec2 e = clip[(i + 1) % clip.size()] - a;
    std::vector<Vec2> in;
    in.swap(out);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const Vec2 p = in[k];
      const Vec2 q = in[(k + 1) % in.size()];
      const double sp = cross(e, p - a);
      const double sq = cross(e, q - a);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        out.push_back(lerp(p, q, sp / (sp - sq)));
      }
    }
  }
  return out;
}

PolygonMoments polygon_moments(std::span<const Vec2> poly) {
  PolygonMoments m;
  if (poly.size() < 3) return m;
  double twice = 0.0;
  Vec2 acc;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 p = poly[i];
    const Vec2 q = poly[(i + 1) % poly.size()];
    const double c = cross(p, q);
    twice += c;
    acc += (p + q) * c;
  }
  m.area = 0.5 * twice;
  if (twice != 0.0) m.centroid = acc * (1.0 / (3.0 * twice));
  return m;
}

namespace {

void require_support_inside(const DensitySpec& f, const ConvexDomain& domain) {
  auto strictly_inside = [&](Vec2 x, double margin) {
    return domain.contains(x) && domain.boundary_distance(x) > margin;
  };
  bool ok = true;
  switch (f.kind) {
    case DensitySpec::Kind::UniformPolygon:
      if (f.polygon.size() < 3 || polygon_moments(f.polygon).area <= 0.0) {
        throw std::invalid_argument(
            "uniform support must be a counter-clockwise polygon");
      }
      for (auto v : f.polygon) ok = ok && strictly_inside(v, 0.0);
      break;
    case DensitySpec::Kind::GaussianTruncated:
      if (!(f.sigma > 0.0) || !(f.radius > 0.0)) {
        throw std::invalid_argument("gaussian needs sigma > 0 and radius > 0");
      }
      ok = strictly_inside(f.center, f.radius);
      break;
    case DensitySpec::Kind::PointList:
      if (f.points.empty()) throw std::invalid_argument("empty point list");
      for (const auto& p : f.points) ok = ok && strictly_inside(p.location, 0.0);
      break;
  }
  if (!ok) {
    throw std::invalid_argument("density support is not strictly inside the domain");
  }
  if (!(f.total_mass > 0.0)) {
    throw std::invalid_argument("density total mass must be positive");
  }
}

// Sub-samples per cell axis used to integrate smooth densities over a bin.
constexpr int kCellQuadrature = 32;

}  // namespace

SourceSet discretize(const DensitySpec& f, int n, const ConvexDomain& domain) {
  if (n < 1) throw std::invalid_argument("discretize needs n >= 1");
  require_support_inside(f, domain);
  if (f.kind == DensitySpec::Kind::PointList &&
      static_cast<std::size_t>(n) >= f.points.size()) {
    return SourceSet::merged(f.points, domain);
  }

  const int m = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const Vec2 lo = f.support_min();
  const Vec2 hi = f.support_max();
  const double wx = (hi.x - lo.x) / m;
  const double wy = (hi.y - lo.y) / m;
  std::vector<double> mass(static_cast<std::size_t>(m * m), 0.0);
  std::vector<Vec2> moment(mass.size());
  auto cell_of = [&](int i, int j) { return static_cast<std::size_t>(j * m + i); };

  switch (f.kind) {
    case DensitySpec::Kind::PointList:
      for (const auto& p : f.points) {
        const int i = std::clamp(
            static_cast<int>(wx > 0 ? (p.location.x - lo.x) / wx : 0), 0, m - 1);
        const int j = std::clamp(
            static_cast<int>(wy > 0 ? (p.location.y - lo.y) / wy : 0), 0, m - 1);
        mass[cell_of(i, j)] += p.rate;
        moment[cell_of(i, j)] += p.location * p.rate;
      }
      break;
    case DensitySpec::Kind::UniformPolygon: {
      const double density = f.total_mass / polygon_moments(f.polygon).area;
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
          const Vec2 c0{lo.x + i * wx, lo.y + j * wy};
          const Vec2 c1{lo.x + (i + 1) * wx, lo.y + (j + 1) * wy};
          const std::vector<Vec2> rect{c0, {c1.x, c0.y}, c1, {c0.x, c1.y}};
          auto piece = clip_convex(rect, f.polygon);
          piece = clip_convex(piece, domain.vertices());
          const auto pm = polygon_moments(piece);
          if (pm.area <= 0.0) continue;
          mass[cell_of(i, j)] = density * pm.area;
          moment[cell_of(i, j)] = pm.centroid * (density * pm.area);
        }
      }
      break;
    }
    case DensitySpec::Kind::GaussianTruncated: {
      double total = 0.0;
      const double sx = wx / kCellQuadrature;
      const double sy = wy / kCellQuadrature;
      for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
          double cm = 0.0;
          Vec2 cmom;
          for (int b = 0; b < kCellQuadrature; ++b) {
            for (int a = 0; a < kCellQuadrature; ++a) {
              const Vec2 x{lo.x + i * wx + (a + 0.5) * sx,
                           lo.y + j * wy + (b + 0.5) * sy};
              if (!domain.contains(x)) continue;
              const double w = f.shape(x);
              cm += w;
              cmom += x * w;
            }
          }
          mass[cell_of(i, j)] = cm;
          moment[cell_of(i, j)] = cmom;
          total += cm;
        }
      }
      if (!(total > 0.0)) throw std::invalid_argument("gaussian has no mass");
      const double scale = f.total_mass / total;
      for (std::size_t c = 0; c < mass.size(); ++c) {
        mass[c] *= scale;
        moment[c] = moment[c] * scale;
      }
      break;
    }
  }

  std::vector<PointSource> out;
  const double floor = 1e-14 * f.total_mass;
  for (std::size_t c = 0; c < mass.size(); ++c) {
    if (mass[c] <= floor) continue;
    out.push_back({moment[c] * (1.0 / mass[c]), mass[c]});
  }
  return SourceSet::merged(std::move(out), domain);
}

std::vector<PointSource> quadrature_atoms(const DensitySpec& f, int per_axis) {
  if (f.kind == DensitySpec::Kind::PointList) return f.points;
  const Vec2 lo = f.support_min();
  const Vec2 hi = f.support_max();
  const double sx = (hi.x - lo.x) / per_axis;
  const double sy = (hi.y - lo.y) / per_axis;
  std::vector<PointSource> atoms;
  double total = 0.0;
  for (int j = 0; j < per_axis; ++j) {
    for (int i = 0; i < per_axis; ++i) {
      const Vec2 x{lo.x + (i + 0.5) * sx, lo.y + (j + 0.5) * sy};
      const double w = f.shape(x);
      if (w <= 0.0) continue;
      atoms.push_back({x, w});
      total += w;
    }
  }
  for (auto& a : atoms) a.rate *= f.total_mass / total;
  return atoms;
}

Separation min_separation(const SourceSet& s, const ConvexDomain& domain) {
  Separation sep{std::numeric_limits<double>::infinity(),
                 std::numeric_limits<double>::infinity()};
  const auto pts = s.points();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto feet = domain.p_minus(pts[i].location);
    sep.boundary = std::min(sep.boundary,
                            distance(pts[i].location, feet.front().position));
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      sep.pairwise =
          std::min(sep.pairwise, distance(pts[i].location, pts[j].location));
    }
  }
  return sep;
}

}  // namespace sandpile
