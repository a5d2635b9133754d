#include "sandpile/network_simplex.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sandpile {

namespace {
constexpr std::size_t kNil = std::numeric_limits<std::size_t>::max();
// Consecutive degenerate pivots tolerated before switching to Bland's rule.
constexpr std::size_t kDegenerateRunFactor = 4;
constexpr std::size_t kRecomputeEvery = 2048;
}  // namespace

NetworkSimplex::NetworkSimplex(std::size_t node_count)
    : n_(node_count), root_(node_count), supply_(node_count, 0.0) {}

std::size_t NetworkSimplex::add_arc(std::size_t tail, std::size_t head,
                                    double cost) {
  if (tail >= n_ || head >= n_) {
    throw std::out_of_range("network simplex arc endpoint out of range");
  }
  tail_.push_back(tail);
  head_.push_back(head);
  cost_.push_back(cost);
  return tail_.size() - 1;
}

void NetworkSimplex::init_tree() {
  double max_cost = 1.0;
  for (double c : cost_) max_cost = std::max(max_cost, std::abs(c));
  const double big_m = static_cast<double>(n_ + 1) * max_cost;
  eps_ = 32.0 * big_m * DBL_EPSILON;

  const std::size_t real = tail_.size();
  artificial_count_ = n_;
  parent_.assign(n_ + 1, kNil);
  pred_arc_.assign(n_ + 1, kNil);
  first_child_.assign(n_ + 1, kNil);
  next_sibling_.assign(n_ + 1, kNil);
  prev_sibling_.assign(n_ + 1, kNil);
  pot_.assign(n_ + 1, 0.0);
  mark_.assign(n_ + 1, 0);
  flow_.assign(real, 0.0);
  in_tree_.assign(real, 0);

  for (std::size_t i = 0; i < n_; ++i) {
    std::size_t arc;
    if (supply_[i] >= 0.0) {
      tail_.push_back(i);
      head_.push_back(root_);
      pot_[i] = -big_m;
    } else {
      tail_.push_back(root_);
      head_.push_back(i);
      pot_[i] = big_m;
    }
    cost_.push_back(big_m);
    flow_.push_back(std::abs(supply_[i]));
    in_tree_.push_back(1);
    arc = tail_.size() - 1;
    pred_arc_[i] = arc;
    attach_child(root_, i);
  }
  block_size_ = std::max<std::size_t>(
      16, static_cast<std::size_t>(std::sqrt(static_cast<double>(tail_.size()))));
}

void NetworkSimplex::detach_child(std::size_t v) {
  const std::size_t p = parent_[v];
  if (prev_sibling_[v] != kNil) {
    next_sibling_[prev_sibling_[v]] = next_sibling_[v];
  } else {
    first_child_[p] = next_sibling_[v];
  }
  if (next_sibling_[v] != kNil) prev_sibling_[next_sibling_[v]] = prev_sibling_[v];
  next_sibling_[v] = prev_sibling_[v] = kNil;
}

void NetworkSimplex::attach_child(std::size_t p, std::size_t v) {
  parent_[v] = p;
  prev_sibling_[v] = kNil;
  next_sibling_[v] = first_child_[p];
  if (first_child_[p] != kNil) prev_sibling_[first_child_[p]] = v;
  first_child_[p] = v;
}

void NetworkSimplex::shift_subtree(std::size_t top, double delta) {
  stack_.clear();
  stack_.push_back(top);
  while (!stack_.empty()) {
    const std::size_t v = stack_.back();
    stack_.pop_back();
    pot_[v] += delta;
    for (std::size_t c = first_child_[v]; c != kNil; c = next_sibling_[c]) {
      stack_.push_back(c);
    }
  }
}

void NetworkSimplex::recompute_potentials() {
  pot_[root_] = 0.0;
  stack_.clear();
  stack_.push_back(root_);
  while (!stack_.empty()) {
    const std::size_t v = stack_.back();
    stack_.pop_back();
    for (std::size_t c = first_child_[v]; c != kNil; c = next_sibling_[c]) {
      const std::size_t a = pred_arc_[c];
      pot_[c] = tail_[a] == c ? pot_[v] - cost_[a] : pot_[v] + cost_[a];
      stack_.push_back(c);
    }
  }
}

bool NetworkSimplex::find_entering_block(std::size_t& arc) {
  const std::size_t m = tail_.size();
  double best = -eps_;
  std::size_t found = kNil;
  std::size_t in_block = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t a = (next_arc_ + k) % m;
    if (!in_tree_[a]) {
      const double rc = reduced_cost(a);
      if (rc < best) {
        best = rc;
        found = a;
      }
    }
    if (++in_block == block_size_) {
      if (found != kNil) {
        next_arc_ = (a + 1) % m;
        arc = found;
        return true;
      }
      in_block = 0;
    }
  }
  if (found == kNil) return false;
  arc = found;
  return true;
}

bool NetworkSimplex::find_entering_bland(std::size_t& arc) const {
  for (std::size_t a = 0; a < tail_.size(); ++a) {
    if (!in_tree_[a] && reduced_cost(a) < -eps_) {
      arc = a;
      return true;
    }
  }
  return false;
}

void NetworkSimplex::pivot(std::size_t in_arc) {
  const std::size_t u_in = tail_[in_arc];
  const std::size_t v_in = head_[in_arc];
  const double rc_in = reduced_cost(in_arc);

  ++stamp_;
  for (std::size_t w = u_in; w != kNil; w = parent_[w]) mark_[w] = stamp_;
  std::size_t join = v_in;
  while (mark_[join] != stamp_) join = parent_[join];

  // Flow circulates u_in -> v_in, up from v_in to join, down from join to
  // u_in. Ties keep the last blocking arc in that orientation.
  double delta = std::numeric_limits<double>::infinity();
  std::size_t leave = kNil;
  bool leave_u_side = false;
  for (std::size_t w = u_in; w != join; w = parent_[w]) {
    const std::size_t a = pred_arc_[w];
    if (tail_[a] == w && flow_[a] < delta) {
      delta = flow_[a];
      leave = w;
      leave_u_side = true;
    }
  }
  for (std::size_t w = v_in; w != join; w = parent_[w]) {
    const std::size_t a = pred_arc_[w];
    if (tail_[a] != w && flow_[a] <= delta) {
      delta = flow_[a];
      leave = w;
      leave_u_side = false;
    }
  }
  if (leave == kNil) throw std::runtime_error("network simplex: unbounded cycle");

  if (delta > 0.0) {
    flow_[in_arc] += delta;
    for (std::size_t w = u_in; w != join; w = parent_[w]) {
      const std::size_t a = pred_arc_[w];
      flow_[a] += tail_[a] == w ? -delta : delta;
      if (flow_[a] < 0.0) flow_[a] = 0.0;
    }
    for (std::size_t w = v_in; w != join; w = parent_[w]) {
      const std::size_t a = pred_arc_[w];
      flow_[a] += tail_[a] == w ? delta : -delta;
      if (flow_[a] < 0.0) flow_[a] = 0.0;
    }
  }

  const std::size_t q = leave_u_side ? u_in : v_in;
  const std::size_t p = leave_u_side ? v_in : u_in;
  const double shift = q == v_in ? rc_in : -rc_in;

  // Reverse the path q -> leave and hang it below p.
  std::vector<std::size_t> path;
  for (std::size_t w = q;; w = parent_[w]) {
    path.push_back(w);
    if (w == leave) break;
  }
  std::vector<std::size_t> old_pred(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    old_pred[i] = pred_arc_[path[i]];
    detach_child(path[i]);
  }
  in_tree_[old_pred.back()] = 0;
  in_tree_[in_arc] = 1;
  pred_arc_[path[0]] = in_arc;
  attach_child(p, path[0]);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    pred_arc_[path[i + 1]] = old_pred[i];
    attach_child(path[i], path[i + 1]);
  }
  shift_subtree(q, shift);
}

NetworkSimplex::Status NetworkSimplex::solve(std::size_t max_pivots) {
  init_tree();
  std::size_t degenerate_run = 0;
  const std::size_t bland_after = kDegenerateRunFactor * (n_ + 1);
  while (true) {
    std::size_t arc = kNil;
    bool found = degenerate_run > bland_after ? find_entering_bland(arc)
                                              : find_entering_block(arc);
    if (!found) {
      recompute_potentials();
      if (!find_entering_block(arc)) break;
    }
    if (pivots_ >= max_pivots) return Status::IterationLimit;
    const double before = flow_[arc];
    pivot(arc);
    ++pivots_;
    degenerate_run = flow_[arc] > before ? 0 : degenerate_run + 1;
    if (pivots_ % kRecomputeEvery == 0) recompute_potentials();
  }

  double scale = 0.0;
  for (double s : supply_) scale += std::abs(s);
  const double tol = 1e-9 * std::max(1.0, scale);
  for (std::size_t a = tail_.size() - artificial_count_; a < tail_.size(); ++a) {
    if (flow_[a] > tol) return Status::Infeasible;
  }
  return Status::Optimal;
}

double NetworkSimplex::total_cost() const {
  double c = 0.0;
  for (std::size_t a = 0; a < arc_count(); ++a) c += flow_[a] * cost_[a];
  return c;
}

double NetworkSimplex::min_reduced_cost() const {
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < arc_count(); ++a) m = std::min(m, reduced_cost(a));
  return m;
}

}  // namespace sandpile
