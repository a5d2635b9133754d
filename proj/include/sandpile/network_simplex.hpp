#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sandpile {

/// Primal network simplex for uncapacitated min-cost flow with real-valued
/// supplies and costs. Node supplies must sum to zero (up to rounding).
///
/// Uses a big-M artificial root, block-search pricing and the strongly
/// feasible leaving-arc rule; after a long run of degenerate pivots the
/// entering arc falls back to Bland's lowest-index rule.
class NetworkSimplex {
 public:
  enum class Status { Optimal, Infeasible, IterationLimit };

  explicit NetworkSimplex(std::size_t node_count);

  void set_supply(std::size_t node, double supply) { supply_[node] = supply; }
  /// Adds the arc tail -> head and returns its index.
  std::size_t add_arc(std::size_t tail, std::size_t head, double cost);

  Status solve(std::size_t max_pivots = 50'000'000);

  double flow(std::size_t arc) const { return flow_[arc]; }
  /// Node potentials pi with cost(a) + pi[tail] - pi[head] >= 0 on every
  /// arc and == 0 on arcs carrying flow.
  double potential(std::size_t node) const { return pot_[node]; }
  double total_cost() const;
  /// Smallest reduced cost over the real arcs at termination.
  double min_reduced_cost() const;
  std::size_t pivots() const { return pivots_; }
  std::size_t node_count() const { return n_; }
  std::size_t arc_count() const { return tail_.size() - artificial_count_; }

 private:
  double reduced_cost(std::size_t arc) const {
    return cost_[arc] + pot_[tail_[arc]] - pot_[head_[arc]];
  }
  void init_tree();
  bool find_entering_block(std::size_t& arc);
  bool find_entering_bland(std::size_t& arc) const;
  void pivot(std::size_t in_arc);
  void detach_child(std::size_t v);
  void attach_child(std::size_t parent, std::size_t v);
  void shift_subtree(std::size_t root, double delta);
  void recompute_potentials();

  std::size_t n_;
  std::size_t root_;
  std::vector<double> supply_;
  std::vector<std::size_t> tail_;
  std::vector<std::size_t> head_;
  std::vector<double> cost_;
  std::vector<double> flow_;
  std::size_t artificial_count_ = 0;

  // Spanning tree, rooted at root_.
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> pred_arc_;
  std::vector<std::size_t> first_child_;
  std::vector<std::size_t> next_sibling_;
  std::vector<std::size_t> prev_sibling_;
  std::vector<std::uint8_t> in_tree_;
  std::vector<double> pot_;
  std::vector<std::uint32_t> mark_;
  std::uint32_t stamp_ = 0;

  double eps_ = 0.0;
  std::size_t block_size_ = 0;
  std::size_t next_arc_ = 0;
  std::size_t pivots_ = 0;
  std::vector<std::size_t> stack_;
};

}  // namespace sandpile
