#include "sandpile/partition.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace sandpile {

Grid Grid::cover(const ConvexDomain& domain, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  Grid g;
  g.origin_ = domain.bbox_min();
  g.h_ = h;
  const Vec2 ext = domain.bbox_max() - domain.bbox_min();
  g.nx_ = std::max(1, static_cast<int>(std::ceil(ext.x / h - tol::kTie)));
  g.ny_ = std::max(1, static_cast<int>(std::ceil(ext.y / h - tol::kTie)));
  g.inside_.resize(static_cast<std::size_t>(g.nx_) *
                   static_cast<std::size_t>(g.ny_));
  for (int j = 0; j < g.ny_; ++j) {
    for (int i = 0; i < g.nx_; ++i) {
      const bool in = domain.contains(g.center(i, j));
      g.inside_[g.index(i, j)] = in ? 1 : 0;
      g.inside_count_ += in ? 1 : 0;
    }
  }
  return g;
}

std::size_t Grid::locate(Vec2 x) const {
  const int i = std::clamp(static_cast<int>(std::floor((x.x - origin_.x) / h_)),
                           0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor((x.y - origin_.y) / h_)),
                           0, ny_ - 1);
  return index(i, j);
}

double Partition::total_area() const {
  double a = 0.0;
  for (double v : areas) a += v;
  return a;
}

int dominant_cone(const SourceSet& sources, std::span<const double> radii,
                  Vec2 x) {
  int best = kNoLabel;
  double best_height = 0.0;
  for (std::size_t j = 0; j < sources.size(); ++j) {
    if (!(radii[j] > 0.0)) continue;
    const double height = radii[j] - distance(x, sources[j].location);
    if (height > best_height) {
      best_height = height;
      best = static_cast<int>(j);
    }
  }
  return best;
}

namespace {

void label_rows(const Grid& grid, const SourceSet& sources,
                std::span<const double> radii, int row_begin, int row_end,
                std::vector<int>& label, std::vector<std::int64_t>& counts) {
  for (int j = row_begin; j < row_end; ++j) {
    for (int i = 0; i < grid.nx(); ++i) {
      const std::size_t cell = grid.index(i, j);
      if (!grid.inside(cell)) {
        label[cell] = kNoLabel;
        continue;
      }
      const int l = dominant_cone(sources, radii, grid.center(i, j));
      label[cell] = l;
      if (l != kNoLabel) ++counts[static_cast<std::size_t>(l)];
    }
  }
}

}  // namespace

Partition partition(const Grid& grid, const SourceSet& sources,
                    std::span<const double> radii, int threads) {
  if (radii.size() != sources.size()) {
    throw std::invalid_argument("partition: one radius per source required");
  }
  for (double r : radii) {
    if (!(r >= 0.0)) throw std::invalid_argument("partition: negative radius");
  }
  const std::size_t k = sources.size();
  Partition p;
  p.label.assign(grid.cell_count(), kNoLabel);
  p.counts.assign(k, 0);

  const int workers = std::clamp(threads, 1, std::max(1, grid.ny()));
  if (workers == 1) {
    label_rows(grid, sources, radii, 0, grid.ny(), p.label, p.counts);
  } else {
    // Integer counts merged in worker order: bit-identical for any split.
    std::vector<std::vector<std::int64_t>> partial(
        static_cast<std::size_t>(workers), std::vector<std::int64_t>(k, 0));
    {
      std::vector<std::jthread> pool;
      for (int w = 0; w < workers; ++w) {
        const int begin = grid.ny() * w / workers;
        const int end = grid.ny() * (w + 1) / workers;
        pool.emplace_back([&, w, begin, end] {
          label_rows(grid, sources, radii, begin, end, p.label,
                     partial[static_cast<std::size_t>(w)]);
        });
      }
    }
    for (const auto& part : partial) {
      for (std::size_t j = 0; j < k; ++j) p.counts[j] += part[j];
    }
  }
  p.areas.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    p.areas[j] = static_cast<double>(p.counts[j]) * grid.cell_area();
  }
  return p;
}

std::vector<double> area_refined(const ConvexDomain& domain,
                                 const SourceSet& sources,
                                 std::span<const double> radii,
                                 double target_rel_err,
                                 std::optional<double> initial_h,
                                 double floor_fraction) {
  if (!(target_rel_err > 0.0)) {
    throw std::invalid_argument("area_refined: target must be positive");
  }
  const double floor_h = floor_fraction * domain.diameter();
  const Vec2 ext = domain.bbox_max() - domain.bbox_min();
  double h = initial_h.value_or(std::max(ext.x, ext.y) / 32.0);
  std::vector<double> previous;
  while (true) {
    const Grid grid = Grid::cover(domain, h);
    auto areas = partition(grid, sources, radii).areas;
    if (!previous.empty()) {
      bool converged = true;
      for (std::size_t j = 0; j < sources.size(); ++j) {
        if (!(radii[j] > 0.0)) continue;
        if (!(previous[j] > 0.0) ||
            std::abs(areas[j] - previous[j]) >= target_rel_err * previous[j]) {
          converged = false;
          break;
        }
      }
      if (converged) return areas;
    }
    previous = std::move(areas);
    h *= 0.5;
    if (h < floor_h) {
      throw std::runtime_error(
          "area_refined: grid spacing fell below the resolution floor without "
          "reaching the requested relative accuracy");
    }
  }
}

}  // namespace sandpile
