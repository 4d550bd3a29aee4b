#pragma once

#include "twimpute/core_types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace twimpute {

struct OtSolution {
  TransportPlan plan;
  double cost = 0.0;
};

// Primal network simplex for the uncapacitated transportation problem
// between `rows` sources and `cols` sinks with integer supplies/demands.
//
// The spanning tree starts as a star around an artificial root (strongly
// feasible), entering arcs are chosen by block search with ties broken by
// lowest arc index, and the leaving arc follows the first-side-strict /
// second-side-inclusive rule so that degenerate pivots cannot cycle.
//
// The object keeps its basis between calls to solve(): when only the costs
// change (as across alternating-minimization iterations) the previous optimal
// tree is still primal feasible and is used as the starting point.
class NetworkSimplex {
 public:
  NetworkSimplex(std::vector<std::int64_t> supply, std::vector<std::int64_t> demand)
      : nr_(static_cast<Index>(supply.size())), nc_(static_cast<Index>(demand.size())) {
    if (nr_ < 1 || nc_ < 1) throw ConfigError("transport problem needs at least one source and one sink");
    const std::int64_t s = std::accumulate(supply.begin(), supply.end(), std::int64_t{0});
    const std::int64_t t = std::accumulate(demand.begin(), demand.end(), std::int64_t{0});
    if (s != t) throw ConfigError("unbalanced transport problem");
    for (auto v : supply)
      if (v <= 0) throw ConfigError("supplies must be positive");
    for (auto v : demand)
      if (v <= 0) throw ConfigError("demands must be positive");
    total_ = s;
    node_supply_.resize(static_cast<std::size_t>(nr_ + nc_));
    for (Index i = 0; i < nr_; ++i) node_supply_[static_cast<std::size_t>(i)] = supply[static_cast<std::size_t>(i)];
    for (Index j = 0; j < nc_; ++j) node_supply_[static_cast<std::size_t>(nr_ + j)] = -demand[static_cast<std::size_t>(j)];
  }

  // Uniform marginals 1/rows and 1/cols, scaled to integers.
  static NetworkSimplex uniform(Index rows, Index cols) {
    const auto g = std::gcd(rows, cols);
    return NetworkSimplex(std::vector<std::int64_t>(static_cast<std::size_t>(rows), cols / g),
                          std::vector<std::int64_t>(static_cast<std::size_t>(cols), rows / g));
  }

  Index rows() const { return nr_; }
  Index cols() const { return nc_; }
  std::int64_t total_units() const { return total_; }
  std::size_t last_pivot_count() const { return pivots_; }

  // Solves for the given cost matrix; returns the optimal objective
  // sum_ij flow_ij * cost_ij / total_units.
  double solve(const Matrix& cost) {
    if (cost.rows() != nr_ || cost.cols() != nc_) throw ConfigError("cost matrix shape mismatch");
    if (!cost.allFinite()) throw ConfigError("cost matrix has non-finite entries");
    load_costs(cost);
    if (!initialized_) init_tree();
    compute_potentials();
    run();
    for (Index u = 0; u < nodes(); ++u) {
      if (flow_[static_cast<std::size_t>(art_arc(u))] != 0) {
        throw NumericalError("network simplex ended with flow on an artificial arc");
      }
    }
    double obj = 0.0;
    for (Index a = 0; a < arcs(); ++a) {
      const auto f = flow_[static_cast<std::size_t>(a)];
      if (f != 0) obj += static_cast<double>(f) * cost_[static_cast<std::size_t>(a)];
    }
    return obj / static_cast<double>(total_);
  }

  // Flow on arc (i, j) after solve().
  std::int64_t flow(Index i, Index j) const { return flow_[static_cast<std::size_t>(i * nc_ + j)]; }

  Matrix plan() const {
    Matrix p = Matrix::Zero(nr_, nc_);
    const double scale = 1.0 / static_cast<double>(total_);
    for (Index i = 0; i < nr_; ++i)
      for (Index j = 0; j < nc_; ++j) {
        const auto f = flow_[static_cast<std::size_t>(i * nc_ + j)];
        if (f != 0) p(i, j) = static_cast<double>(f) * scale;
      }
    return p;
  }

 private:
  Index nodes() const { return nr_ + nc_; }
  Index arcs() const { return nr_ * nc_; }
  Index root() const { return nodes(); }
  Index art_arc(Index u) const { return arcs() + u; }

  Index source(Index a) const {
    if (a < arcs()) return a / nc_;
    const Index u = a - arcs();
    return node_supply_[static_cast<std::size_t>(u)] >= 0 ? u : root();
  }
  Index target(Index a) const {
    if (a < arcs()) return nr_ + a % nc_;
    const Index u = a - arcs();
    return node_supply_[static_cast<std::size_t>(u)] >= 0 ? root() : u;
  }

  void load_costs(const Matrix& cost) {
    const auto na = static_cast<std::size_t>(arcs() + nodes());
    cost_.resize(na);
    double max_cost = 0.0;
    for (Index i = 0; i < nr_; ++i)
      for (Index j = 0; j < nc_; ++j) {
        const double c = cost(i, j);
        cost_[static_cast<std::size_t>(i * nc_ + j)] = c;
        max_cost = std::max(max_cost, std::abs(c));
      }
    art_cost_ = (max_cost + 1.0) * static_cast<double>(nodes() + 1);
    for (Index u = 0; u < nodes(); ++u) {
      cost_[static_cast<std::size_t>(art_arc(u))] = node_supply_[static_cast<std::size_t>(u)] >= 0 ? 0.0 : art_cost_;
    }
    eps_ = 64.0 * std::numeric_limits<double>::epsilon() * art_cost_;
  }

  void init_tree() {
    const auto nn = static_cast<std::size_t>(nodes() + 1);
    parent_.assign(nn, -1);
    pred_.assign(nn, -1);
    up_.assign(nn, 0);
    depth_.assign(nn, 0);
    pi_.assign(nn, 0.0);
    first_child_.assign(nn, -1);
    next_sib_.assign(nn, -1);
    prev_sib_.assign(nn, -1);
    flow_.assign(static_cast<std::size_t>(arcs() + nodes()), 0);
    in_tree_.assign(static_cast<std::size_t>(arcs()), 0);
    for (Index u = nodes() - 1; u >= 0; --u) {
      const auto su = static_cast<std::size_t>(u);
      parent_[su] = root();
      pred_[su] = art_arc(u);
      up_[su] = node_supply_[su] >= 0 ? 1 : 0;
      flow_[static_cast<std::size_t>(art_arc(u))] = std::abs(node_supply_[su]);
      attach(u, root());
    }
    next_arc_ = 0;
    block_ = std::max<Index>(10, static_cast<Index>(std::sqrt(static_cast<double>(arcs()))));
    initialized_ = true;
  }

  void attach(Index x, Index par) {
    const auto sx = static_cast<std::size_t>(x);
    const auto sp = static_cast<std::size_t>(par);
    prev_sib_[sx] = -1;
    next_sib_[sx] = first_child_[sp];
    if (first_child_[sp] >= 0) prev_sib_[static_cast<std::size_t>(first_child_[sp])] = x;
    first_child_[sp] = x;
  }

  void detach(Index x) {
    const auto sx = static_cast<std::size_t>(x);
    const Index par = parent_[sx];
    if (prev_sib_[sx] >= 0) {
      next_sib_[static_cast<std::size_t>(prev_sib_[sx])] = next_sib_[sx];
    } else {
      first_child_[static_cast<std::size_t>(par)] = next_sib_[sx];
    }
    if (next_sib_[sx] >= 0) prev_sib_[static_cast<std::size_t>(next_sib_[sx])] = prev_sib_[sx];
    prev_sib_[sx] = next_sib_[sx] = -1;
  }

  // Recomputes depth and potentials for the subtree rooted at `top`.
  void refresh_subtree(Index top) {
    stack_.clear();
    stack_.push_back(top);
    while (!stack_.empty()) {
      const Index x = stack_.back();
      stack_.pop_back();
      const auto sx = static_cast<std::size_t>(x);
      if (x != root()) {
        const auto sp = static_cast<std::size_t>(parent_[sx]);
        const double c = cost_[static_cast<std::size_t>(pred_[sx])];
        pi_[sx] = up_[sx] ? pi_[sp] - c : pi_[sp] + c;
        depth_[sx] = depth_[sp] + 1;
      }
      for (Index ch = first_child_[sx]; ch >= 0; ch = next_sib_[static_cast<std::size_t>(ch)]) stack_.push_back(ch);
    }
  }

  void compute_potentials() {
    pi_[static_cast<std::size_t>(root())] = 0.0;
    depth_[static_cast<std::size_t>(root())] = 0;
    refresh_subtree(root());
  }

  // Block search over the real arcs; returns -1 at optimality.
  Index find_entering() const {
    const Index m = arcs();
    double best = -eps_;
    Index best_arc = -1;
    Index cnt = block_;
    Index e = next_arc_;
    Index i = e / nc_;
    Index j = e % nc_;
    for (Index scanned = 0; scanned < m; ++scanned) {
      if (!in_tree_[static_cast<std::size_t>(e)]) {
        const double rc = cost_[static_cast<std::size_t>(e)] + pi_[static_cast<std::size_t>(i)] -
                          pi_[static_cast<std::size_t>(nr_ + j)];
        if (rc < best) {
          best = rc;
          best_arc = e;
        }
      }
      ++e;
      if (++j == nc_) {
        j = 0;
        ++i;
      }
      if (e == m) {
        e = 0;
        i = 0;
        j = 0;
      }
      if (--cnt == 0) {
        if (best_arc >= 0) break;
        cnt = block_;
      }
    }
    next_arc_ = e;
    return best_arc;
  }

  Index join_node(Index u, Index v) const {
    while (u != v) {
      if (depth_[static_cast<std::size_t>(u)] >= depth_[static_cast<std::size_t>(v)]) {
        u = parent_[static_cast<std::size_t>(u)];
      } else {
        v = parent_[static_cast<std::size_t>(v)];
      }
    }
    return u;
  }

  void run() {
    pivots_ = 0;
    constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();
    for (;;) {
      const Index in = find_entering();
      if (in < 0) return;
      ++pivots_;
      const Index first = source(in);
      const Index second = target(in);
      const Index join = join_node(first, second);

      std::int64_t delta = kInf;
      Index u_out = -1;
      int side = 0;
      for (Index x = first; x != join; x = parent_[static_cast<std::size_t>(x)]) {
        const auto sx = static_cast<std::size_t>(x);
        const std::int64_t d = up_[sx] ? flow_[static_cast<std::size_t>(pred_[sx])] : kInf;
        if (d < delta) {
          delta = d;
          u_out = x;
          side = 1;
        }
      }
      for (Index x = second; x != join; x = parent_[static_cast<std::size_t>(x)]) {
        const auto sx = static_cast<std::size_t>(x);
        const std::int64_t d = up_[sx] ? kInf : flow_[static_cast<std::size_t>(pred_[sx])];
        if (d <= delta) {
          delta = d;
          u_out = x;
          side = 2;
        }
      }
      if (side == 0 || delta == kInf) throw NumericalError("unbounded pivot in network simplex");

      if (delta > 0) {
        flow_[static_cast<std::size_t>(in)] += delta;
        for (Index x = first; x != join; x = parent_[static_cast<std::size_t>(x)]) {
          const auto sx = static_cast<std::size_t>(x);
          flow_[static_cast<std::size_t>(pred_[sx])] -= up_[sx] ? delta : -delta;
        }
        for (Index x = second; x != join; x = parent_[static_cast<std::size_t>(x)]) {
          const auto sx = static_cast<std::size_t>(x);
          flow_[static_cast<std::size_t>(pred_[sx])] += up_[sx] ? delta : -delta;
        }
      }

      const Index out_arc = pred_[static_cast<std::size_t>(u_out)];
      if (out_arc < arcs()) in_tree_[static_cast<std::size_t>(out_arc)] = 0;
      in_tree_[static_cast<std::size_t>(in)] = 1;
      const Index u_in = side == 1 ? first : second;
      const Index v_in = side == 1 ? second : first;
      rehang(u_in, v_in, in, u_out);
    }
  }

  // Cuts the tree arc above u_out and re-hangs the detached subtree from
  // v_in through the entering arc, reversing the path u_in .. u_out.
  void rehang(Index u_in, Index v_in, Index in_arc, Index u_out) {
    path_.clear();
    for (Index x = u_in;; x = parent_[static_cast<std::size_t>(x)]) {
      path_.push_back(x);
      if (x == u_out) break;
    }
    old_pred_.resize(path_.size());
    old_up_.resize(path_.size());
    for (std::size_t k = 0; k < path_.size(); ++k) {
      const auto sx = static_cast<std::size_t>(path_[k]);
      old_pred_[k] = pred_[sx];
      old_up_[k] = up_[sx];
    }
    for (std::size_t k = 0; k < path_.size(); ++k) detach(path_[k]);
    for (std::size_t k = path_.size() - 1; k >= 1; --k) {
      const Index x = path_[k];
      const auto sx = static_cast<std::size_t>(x);
      parent_[sx] = path_[k - 1];
      pred_[sx] = old_pred_[k - 1];
      up_[sx] = old_up_[k - 1] ? 0 : 1;
      attach(x, path_[k - 1]);
    }
    const auto su = static_cast<std::size_t>(u_in);
    parent_[su] = v_in;
    pred_[su] = in_arc;
    up_[su] = source(in_arc) == u_in ? 1 : 0;
    attach(u_in, v_in);
    refresh_subtree(u_in);
  }

  Index nr_;
  Index nc_;
  std::int64_t total_ = 0;
  std::vector<std::int64_t> node_supply_;
  std::vector<double> cost_;
  double art_cost_ = 0.0;
  double eps_ = 0.0;

  bool initialized_ = false;
  std::vector<std::int64_t> flow_;
  std::vector<std::uint8_t> in_tree_;
  std::vector<Index> parent_, pred_, depth_;
  std::vector<std::uint8_t> up_;
  std::vector<double> pi_;
  std::vector<Index> first_child_, next_sib_, prev_sib_;
  Index block_ = 10;
  mutable Index next_arc_ = 0;
  std::size_t pivots_ = 0;

  std::vector<Index> stack_, path_, old_pred_;
  std::vector<std::uint8_t> old_up_;
};

// Exact OT between uniform measures on the rows and columns of `cost`.
inline OtSolution solve_exact(const Matrix& cost) {
  if (!cost.allFinite()) throw ConfigError("cost matrix has non-finite entries");
  auto ns = NetworkSimplex::uniform(cost.rows(), cost.cols());
  OtSolution out;
  out.cost = ns.solve(cost);
  out.plan.matrix = ns.plan();
  return out;
}

// Reusable exact solver that warm-starts from the previous basis whenever the
// problem shape is unchanged.
class ExactOtSolver {
 public:
  OtSolution solve(const Matrix& cost) {
    if (!ns_ || ns_->rows() != cost.rows() || ns_->cols() != cost.cols()) {
      ns_.emplace(NetworkSimplex::uniform(cost.rows(), cost.cols()));
    }
    OtSolution out;
    out.cost = ns_->solve(cost);
    out.plan.matrix = ns_->plan();
    return out;
  }

 private:
  std::optional<NetworkSimplex> ns_;
};

struct SinkhornOptions {
  double epsilon = 1e-2;
  int max_iters = 10000;
  double tol = 1e-9;
};

namespace detail {

inline double log_sum_exp(std::span<const double> x) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

}  // namespace detail

// Log-domain Sinkhorn iterations followed by a rounding step that restores
// exact feasibility of the returned plan.
inline OtSolution solve_sinkhorn(const Matrix& cost, const SinkhornOptions& opt = {}) {
  if (!(opt.epsilon > 0.0)) throw ConfigError("sinkhorn epsilon must be > 0");
  if (!cost.allFinite()) throw ConfigError("cost matrix has non-finite entries");
  const Index r = cost.rows();
  const Index c = cost.cols();
  const double eps = opt.epsilon;
  const double log_a = -std::log(static_cast<double>(r));
  const double log_b = -std::log(static_cast<double>(c));
  Vector f = Vector::Zero(r);
  Vector g = Vector::Zero(c);
  std::vector<double> buf(static_cast<std::size_t>(std::max(r, c)));

  Matrix plan(r, c);
  auto update_plan = [&] {
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) plan(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / eps);
  };

  for (int it = 0; it < opt.max_iters; ++it) {
    for (Index i = 0; i < r; ++i) {
      for (Index j = 0; j < c; ++j) buf[static_cast<std::size_t>(j)] = (g(j) - cost(i, j)) / eps;
      f(i) = eps * (log_a - detail::log_sum_exp(std::span<const double>(buf.data(), static_cast<std::size_t>(c))));
    }
    for (Index j = 0; j < c; ++j) {
      for (Index i = 0; i < r; ++i) buf[static_cast<std::size_t>(i)] = (f(i) - cost(i, j)) / eps;
      g(j) = eps * (log_b - detail::log_sum_exp(std::span<const double>(buf.data(), static_cast<std::size_t>(r))));
    }
    if (!f.allFinite() || !g.allFinite()) {
      throw NumericalError("sinkhorn underflow; increase epsilon");
    }
    if (it % 10 == 9 || it + 1 == opt.max_iters) {
      update_plan();
      const double err = (plan.rowwise().sum().array() - 1.0 / static_cast<double>(r)).abs().maxCoeff();
      if (err < opt.tol) break;
    }
  }
  update_plan();
  if (!plan.allFinite()) throw NumericalError("sinkhorn produced non-finite plan; increase epsilon");

  const Vector a = Vector::Constant(r, 1.0 / static_cast<double>(r));
  const Vector b = Vector::Constant(c, 1.0 / static_cast<double>(c));
  Vector rs = plan.rowwise().sum();
  for (Index i = 0; i < r; ++i) {
    const double x = rs(i) > 0 ? std::min(1.0, a(i) / rs(i)) : 1.0;
    plan.row(i) *= x;
  }
  Vector cs = plan.colwise().sum().transpose();
  for (Index j = 0; j < c; ++j) {
    const double y = cs(j) > 0 ? std::min(1.0, b(j) / cs(j)) : 1.0;
    plan.col(j) *= y;
  }
  const Vector er = a - plan.rowwise().sum();
  const Vector ec = b - plan.colwise().sum().transpose();
  const double l1 = er.lpNorm<1>();
  if (l1 > 0.0) plan += er * ec.transpose() / l1;
  plan = plan.cwiseMax(0.0);

  OtSolution out;
  out.plan.matrix = std::move(plan);
  out.cost = out.plan.matrix.cwiseProduct(cost).sum();
  return out;
}

// Optimal cost between uniform measures on sorted scalars a and b under the
// ground cost |x - y|^k, via the monotone (quantile) coupling.
inline double solve_1d_monotone(double k, std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("empty support");
  if (!(k >= 1.0)) throw ConfigError("cost order must be >= 1");
  if (!std::is_sorted(a.begin(), a.end()) || !std::is_sorted(b.begin(), b.end())) {
    throw ConfigError("supports must be sorted ascending");
  }
  // Each atom of a carries |b| units, each atom of b carries |a| units.
  const auto r = static_cast<std::int64_t>(a.size());
  const auto c = static_cast<std::int64_t>(b.size());
  std::int64_t ra = c;
  std::int64_t rb = r;
  std::size_t i = 0;
  std::size_t j = 0;
  double total = 0.0;
  while (i < a.size() && j < b.size()) {
    const std::int64_t m = std::min(ra, rb);
    total += static_cast<double>(m) * std::pow(std::abs(a[i] - b[j]), k);
    ra -= m;
    rb -= m;
    if (ra == 0) {
      ++i;
      ra = c;
    }
    if (rb == 0) {
      ++j;
      rb = r;
    }
  }
  return total / static_cast<double>(r * c);
}

// Clamps tiny negative entries produced by floating-point round-off.
inline void clamp_plan(TransportPlan& plan) {
  for (Index j = 0; j < plan.cols(); ++j)
    for (Index i = 0; i < plan.rows(); ++i)
      if (plan.matrix(i, j) < 0.0 && plan.matrix(i, j) >= -1e-12) plan.matrix(i, j) = 0.0;
}

}  // namespace twimpute
