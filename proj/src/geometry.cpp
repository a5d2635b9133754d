#include "sandpile/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sandpile {

namespace {

// argmin over s in [0, 1] of k * s * len + |a + s (b - a) - y|, the escape
// cost along one edge with wall slope k per unit length (convex in s).
double edge_argmin(Vec2 a, Vec2 b, Vec2 y, double k) {
  const double len = distance(a, b);
  if (k >= 1.0) return 0.0;
  if (k <= -1.0) return 1.0;
  const Vec2 e = (b - a) * (1.0 / len);
  const Vec2 w = y - a;
  const double along = dot(w, e);
  const double across = std::abs(e.x * w.y - e.y * w.x);
  const double t = along - k * across / std::sqrt(1.0 - k * k);
  return std::clamp(t / len, 0.0, 1.0);
}

struct Candidate {
  double value;
  BoundaryPoint point;
};

std::vector<BoundaryPoint> collect_ties(std::vector<Candidate>& candidates) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) best = std::min(best, c.value);
  std::vector<BoundaryPoint> out;
  for (const auto& c : candidates) {
    if (c.value <= best + tol::kTie) out.push_back(c.point);
  }
  std::sort(out.begin(), out.end(), boundary_less);
  auto same = [](const BoundaryPoint& a, const BoundaryPoint& b) {
    return a.edge_index == b.edge_index &&
           std::abs(a.edge_parameter - b.edge_parameter) <= tol::kTie;
  };
  out.erase(std::unique(out.begin(), out.end(), same), out.end());
  return out;
}

}  // namespace

bool boundary_less(const BoundaryPoint& a, const BoundaryPoint& b) {
  if (a.edge_index != b.edge_index) return a.edge_index < b.edge_index;
  return a.edge_parameter < b.edge_parameter;
}

ConvexDomain::ConvexDomain(std::vector<Vec2> vertices,
                           std::vector<double> wall_values)
    : vertices_(std::move(vertices)), wall_values_(std::move(wall_values)) {
  const std::size_t n = vertices_.size();
  if (n < 3) throw std::invalid_argument("domain needs at least 3 vertices");
  if (wall_values_.size() != n) {
    throw std::invalid_argument("domain needs one wall value per vertex (got " +
                                std::to_string(wall_values_.size()) + " for " +
                                std::to_string(n) + " vertices)");
  }
  for (double g : wall_values_) {
    if (!std::isfinite(g) || g < 0.0) {
      throw std::invalid_argument("wall values must be finite and >= 0");
    }
  }
  double twice_area = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    twice_area += cross(edge_start(i), edge_end(i));
    if (edge_length(i) <= tol::kGeometry) {
      throw std::invalid_argument("domain has a degenerate edge at vertex " +
                                  std::to_string(i));
    }
  }
  area_ = 0.5 * twice_area;
  if (!(area_ > 0.0)) {
    throw std::invalid_argument(
        "domain vertices must be listed counter-clockwise");
  }
  // Every vertex left of every edge rules out reflex corners and
  // self-overlapping windings.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const Vec2 e = edge_end(i) - edge_start(i);
      const double side = cross(e, vertices_[j] - edge_start(i)) / norm(e);
      if (side < -tol::kGeometry) {
        throw std::invalid_argument("domain is not convex (vertex " +
                                    std::to_string(j) + " right of edge " +
                                    std::to_string(i) + ")");
      }
    }
  }
  bbox_min_ = bbox_max_ = vertices_.front();
  for (std::size_t i = 0; i < n; ++i) {
    perimeter_ += edge_length(i);
    bbox_min_ = {std::min(bbox_min_.x, vertices_[i].x),
                 std::min(bbox_min_.y, vertices_[i].y)};
    bbox_max_ = {std::max(bbox_max_.x, vertices_[i].x),
                 std::max(bbox_max_.y, vertices_[i].y)};
    for (std::size_t j = i + 1; j < n; ++j) {
      diameter_ = std::max(diameter_, distance(vertices_[i], vertices_[j]));
    }
  }
}

ConvexDomain ConvexDomain::with_constant_wall(std::vector<Vec2> vertices,
                                              double g) {
  std::vector<double> walls(vertices.size(), g);
  return ConvexDomain(std::move(vertices), std::move(walls));
}

bool ConvexDomain::contains(Vec2 x) const {
  for (std::size_t i = 0; i < edge_count(); ++i) {
    const Vec2 e = edge_end(i) - edge_start(i);
    if (cross(e, x - edge_start(i)) / norm(e) < -tol::kGeometry) return false;
  }
  return true;
}

double ConvexDomain::boundary_distance(Vec2 x) const {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < edge_count(); ++i) {
    const Vec2 a = edge_start(i);
    const Vec2 e = edge_end(i) - a;
    const double s = std::clamp(dot(x - a, e) / dot(e, e), 0.0, 1.0);
    best = std::min(best, distance(x, lerp(a, edge_end(i), s)));
  }
  return best;
}

BoundaryPoint ConvexDomain::boundary_point(std::size_t edge, double s) const {
  const std::size_t n = edge_count();
  edge %= n;
  if (s <= tol::kTie) s = 0.0;
  if (s >= 1.0 - tol::kTie) {
    edge = (edge + 1) % n;
    s = 0.0;
  }
  return {edge, s, lerp(edge_start(edge), edge_end(edge), s)};
}

std::vector<BoundaryPoint> ConvexDomain::p_minus(Vec2 x) const {
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < edge_count(); ++i) {
    const Vec2 a = edge_start(i);
    const Vec2 e = edge_end(i) - a;
    const double s = std::clamp(dot(x - a, e) / dot(e, e), 0.0, 1.0);
    const BoundaryPoint b = boundary_point(i, s);
    candidates.push_back({distance(x, b.position), b});
  }
  return collect_ties(candidates);
}

double ConvexDomain::wall_height(std::size_t edge, double s) const {
  const std::size_t n = edge_count();
  return (1.0 - s) * wall_values_[edge % n] + s * wall_values_[(edge + 1) % n];
}

double ConvexDomain::wall_height(const BoundaryPoint& b) const {
  return wall_height(b.edge_index, b.edge_parameter);
}

EscapeCost ConvexDomain::d_g_plus(Vec2 y) const {
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < edge_count(); ++i) {
    const Vec2 a = edge_start(i);
    const Vec2 b = edge_end(i);
    auto cost = [&](double s) {
      return wall_height(i, s) + distance(lerp(a, b, s), y);
    };
    const double k = (wall_height(i, 1.0) - wall_height(i, 0.0)) / edge_length(i);
    double s = edge_argmin(a, b, y, k);
    double best = cost(s);
    // Endpoints win exact ties so shared vertices deduplicate.
    for (double end : {0.0, 1.0}) {
      const double c = cost(end);
      if (c <= best) {
        best = c;
        s = end;
      }
    }
    candidates.push_back({best, boundary_point(i, s)});
  }
  EscapeCost out;
  out.value = std::numeric_limits<double>::infinity();
  for (const auto& c : candidates) out.value = std::min(out.value, c.value);
  out.minimizers = collect_ties(candidates);
  return out;
}

std::vector<BoundaryPoint> ConvexDomain::boundary_nodes(double spacing) const {
  if (!(spacing > 0.0)) {
    throw std::invalid_argument("boundary spacing must be positive");
  }
  std::vector<BoundaryPoint> nodes;
  for (std::size_t i = 0; i < edge_count(); ++i) {
    const auto pieces = static_cast<std::size_t>(
        std::max(1.0, std::ceil(edge_length(i) / spacing - tol::kTie)));
    for (std::size_t p = 0; p < pieces; ++p) {
      const double s = static_cast<double>(p) / static_cast<double>(pieces);
      nodes.push_back({i, s, lerp(edge_start(i), edge_end(i), s)});
    }
  }
  return nodes;
}

double ConvexDomain::max_wall() const {
  return *std::max_element(wall_values_.begin(), wall_values_.end());
}

}  // namespace sandpile
