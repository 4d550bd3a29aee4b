#pragma once

#include "twimpute/core_types.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace twimpute {

enum class ConstraintKind { ObservedEquality, LinearEquality, Box, Simplex, CumSum };

inline std::string to_string(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::ObservedEquality: return "observed";
    case ConstraintKind::LinearEquality: return "linear";
    case ConstraintKind::Box: return "box";
    case ConstraintKind::Simplex: return "simplex";
    case ConstraintKind::CumSum: return "cumsum";
  }
  return "unknown";
}

// Convex admissible set for the imputation. Every set is an intersection of
// some of: observed cells fixed, an affine set {K vec(W) = b} (vec is
// column-major), per-cell box bounds, and per-row sum-to-one.
class ConstraintSet {
 public:
  static ConstraintSet observed(const TimeSeriesPanel& panel) {
    ConstraintSet c(ConstraintKind::ObservedEquality, panel.n(), panel.d());
    c.set_observed(panel);
    return c;
  }

  // Pure affine set {K vec(W) = b} on an n x d panel.
  static ConstraintSet linear(Matrix K, Vector b, Index n, Index d = 1) {
    ConstraintSet c(ConstraintKind::LinearEquality, n, d);
    c.set_linear(std::move(K), std::move(b));
    return c;
  }

  // {K vec(W) = b} intersected with the observed cells of `panel`; the
  // observed cells are appended to K as unit rows.
  static ConstraintSet linear_with_observed(const TimeSeriesPanel& panel, const Matrix& K, const Vector& b) {
    const Index N = panel.n() * panel.d();
    if (K.cols() != N || K.rows() != b.size()) throw ConfigError("linear constraint has wrong shape");
    const Index nobs = N - panel.missing_count();
    Matrix Ka = Matrix::Zero(K.rows() + nobs, N);
    Vector ba(K.rows() + nobs);
    Ka.topRows(K.rows()) = K;
    ba.head(K.rows()) = b;
    Index r = K.rows();
    for (Index col = 0; col < panel.d(); ++col)
      for (Index t = 0; t < panel.n(); ++t) {
        if (panel.missing(t, col)) continue;
        Ka(r, col * panel.n() + t) = 1.0;
        ba(r) = panel.values()(t, col);
        ++r;
      }
    ConstraintSet c(ConstraintKind::LinearEquality, panel.n(), panel.d());
    c.set_observed(panel);
    c.set_linear(std::move(Ka), std::move(ba));
    return c;
  }

  static ConstraintSet box(const TimeSeriesPanel& panel, Matrix lower, Matrix upper) {
    ConstraintSet c(ConstraintKind::Box, panel.n(), panel.d());
    c.set_observed(panel);
    c.set_box(std::move(lower), std::move(upper));
    c.validate();
    return c;
  }

  static ConstraintSet box(const TimeSeriesPanel& panel, double lower, double upper) {
    return box(panel, Matrix::Constant(panel.n(), panel.d(), lower), Matrix::Constant(panel.n(), panel.d(), upper));
  }

  // Rows sum to one. With `unit_box` the entries are also confined to [0, 1],
  // which makes the set the product of per-row probability simplices.
  static ConstraintSet simplex(const TimeSeriesPanel& panel, bool unit_box = true) {
    ConstraintSet c(ConstraintKind::Simplex, panel.n(), panel.d());
    c.set_observed(panel);
    c.simplex_ = true;
    if (unit_box) c.set_box(Matrix::Zero(panel.n(), panel.d()), Matrix::Ones(panel.n(), panel.d()));
    c.validate();
    return c;
  }

  // Adds box bounds to an affine set (projection then uses Dykstra).
  ConstraintSet with_box(Matrix lower, Matrix upper) const {
    ConstraintSet c = *this;
    c.set_box(std::move(lower), std::move(upper));
    c.validate();
    return c;
  }

  ConstraintKind kind() const { return kind_; }
  Index n() const { return n_; }
  Index d() const { return d_; }
  bool has_observed() const { return obs_mask_.has_value(); }
  bool has_linear() const { return K_.has_value(); }
  bool has_box() const { return lower_.has_value(); }
  bool has_simplex() const { return simplex_; }
  const Mask& observed_mask() const { return *obs_mask_; }
  const Matrix& observed_values() const { return *obs_values_; }
  const Matrix& K() const { return *K_; }
  const Vector& b() const { return *b_; }
  const Matrix& lower() const { return *lower_; }
  const Matrix& upper() const { return *upper_; }

  // True when the affine part is the whole story (no box/simplex), so the
  // quadratic subproblem has a direct solution.
  bool is_affine() const { return !has_box() && !has_simplex(); }

  // Writes observed values into their cells (bit-exact).
  void restore_observed(Matrix& w) const {
    if (!has_observed()) return;
    for (Index col = 0; col < d_; ++col)
      for (Index t = 0; t < n_; ++t)
        if (!(*obs_mask_)(t, col)) w(t, col) = (*obs_values_)(t, col);
  }

  // Euclidean projection onto the set.
  Matrix project(const Matrix& point) const {
    check_shape(point);
    if (has_linear() && (has_box() || has_simplex())) return dykstra(point);
    Matrix w = point;
    if (has_linear()) {
      project_affine(w);
      restore_observed(w);
      return w;
    }
    if (has_simplex()) {
      project_rows(w);
      return w;
    }
    if (has_box()) w = w.cwiseMax(*lower_).cwiseMin(*upper_);
    restore_observed(w);
    return w;
  }

  // Largest constraint violation of `w`.
  double violation(const Matrix& w) const {
    check_shape(w);
    double v = 0.0;
    if (has_observed())
      for (Index col = 0; col < d_; ++col)
        for (Index t = 0; t < n_; ++t)
          if (!(*obs_mask_)(t, col)) v = std::max(v, std::abs(w(t, col) - (*obs_values_)(t, col)));
    if (has_linear()) {
      const Eigen::Map<const Vector> x(w.data(), w.size());
      v = std::max(v, ((*K_) * x - *b_).cwiseAbs().maxCoeff());
    }
    if (has_box()) {
      v = std::max(v, (*lower_ - w).cwiseMax(0.0).maxCoeff());
      v = std::max(v, (w - *upper_).cwiseMax(0.0).maxCoeff());
    }
    if (has_simplex()) v = std::max(v, (w.rowwise().sum().array() - 1.0).abs().maxCoeff());
    return v;
  }

  bool contains(const Matrix& w, double tol = 1e-9) const { return violation(w) <= tol; }

 private:
  ConstraintSet(ConstraintKind kind, Index n, Index d) : kind_(kind), n_(n), d_(d) {}

  friend ConstraintSet build_cumsum_constraints(const TimeSeriesPanel& raw);

  void set_observed(const TimeSeriesPanel& panel) {
    obs_mask_ = panel.mask();
    obs_values_ = panel.values();
  }

  void set_box(Matrix lower, Matrix upper) {
    if (lower.rows() != n_ || lower.cols() != d_ || upper.rows() != n_ || upper.cols() != d_) {
      throw ConfigError("box bounds have wrong shape");
    }
    lower_ = std::move(lower);
    upper_ = std::move(upper);
  }

  void set_linear(Matrix K, Vector b) {
    if (K.cols() != n_ * d_ || K.rows() != b.size()) throw ConfigError("linear constraint has wrong shape");
    if (K.rows() == 0) throw ConfigError("linear constraint has no rows");
    K_ = std::move(K);
    b_ = std::move(b);
    cod_ = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Matrix>>(*K_);
    const Vector x0 = cod_->solve(*b_);
    const double resid = ((*K_) * x0 - *b_).cwiseAbs().maxCoeff();
    if (resid > 1e-9 * (1.0 + b_->cwiseAbs().maxCoeff())) {
      throw InfeasibleError("linear constraint is inconsistent: b is not in the range of K (residual " +
                            std::to_string(resid) + ")");
    }
  }

  void validate() const {
    if (has_box()) {
      for (Index col = 0; col < d_; ++col)
        for (Index t = 0; t < n_; ++t) {
          if ((*lower_)(t, col) > (*upper_)(t, col)) {
            throw InfeasibleError("empty box at cell (" + std::to_string(t) + ", " + std::to_string(col) + ")");
          }
          if (has_observed() && !(*obs_mask_)(t, col)) {
            const double v = (*obs_values_)(t, col);
            if (v < (*lower_)(t, col) || v > (*upper_)(t, col)) {
              throw InfeasibleError("box excludes observed value at cell (" + std::to_string(t) + ", " +
                                    std::to_string(col) + ")");
            }
          }
        }
    }
    if (has_simplex()) {
      for (Index t = 0; t < n_; ++t) {
        double fixed = 0.0;
        double lo = 0.0;
        double hi = 0.0;
        Index free = 0;
        for (Index col = 0; col < d_; ++col) {
          if (has_observed() && !(*obs_mask_)(t, col)) {
            fixed += (*obs_values_)(t, col);
          } else {
            ++free;
            lo += has_box() ? (*lower_)(t, col) : -INFINITY;
            hi += has_box() ? (*upper_)(t, col) : INFINITY;
          }
        }
        const double target = 1.0 - fixed;
        const bool ok = free == 0 ? std::abs(target) <= 1e-8 : (lo <= target + 1e-12 && target <= hi + 1e-12);
        if (!ok) {
          throw InfeasibleError("row " + std::to_string(t) + " cannot sum to one with its observed cells and bounds");
        }
      }
    }
  }

  void check_shape(const Matrix& w) const {
    if (w.rows() != n_ || w.cols() != d_) throw ConfigError("point has wrong shape for constraint set");
  }

  void project_affine(Matrix& w) const {
    Eigen::Map<Vector> x(w.data(), w.size());
    const Vector resid = (*K_) * x - *b_;
    x -= cod_->solve(resid);
  }

  // Per-row projection for the simplex kinds; observed cells stay fixed.
  void project_rows(Matrix& w) const {
    std::vector<Index> free;
    std::vector<double> kinks;
    for (Index t = 0; t < n_; ++t) {
      free.clear();
      double target = 1.0;
      for (Index col = 0; col < d_; ++col) {
        if (has_observed() && !(*obs_mask_)(t, col)) {
          w(t, col) = (*obs_values_)(t, col);
          target -= w(t, col);
        } else {
          free.push_back(col);
        }
      }
      if (free.empty()) continue;
      if (!has_box()) {
        double s = 0.0;
        for (Index col : free) s += w(t, col);
        const double shift = (s - target) / static_cast<double>(free.size());
        for (Index col : free) w(t, col) -= shift;
        continue;
      }
      // Find tau with sum_f clamp(y_f - tau, lo_f, hi_f) = target. The sum is
      // piecewise linear and nonincreasing in tau with kinks at y_f - hi_f and
      // y_f - lo_f, so it suffices to bracket target between two kinks.
      auto mass = [&](double tau) {
        double s = 0.0;
        for (Index col : free) s += std::clamp(w(t, col) - tau, (*lower_)(t, col), (*upper_)(t, col));
        return s;
      };
      kinks.clear();
      for (Index col : free) {
        kinks.push_back(w(t, col) - (*upper_)(t, col));
        kinks.push_back(w(t, col) - (*lower_)(t, col));
      }
      std::sort(kinks.begin(), kinks.end());
      double tau = kinks.front();
      for (std::size_t k = 0; k + 1 < kinks.size(); ++k) {
        const double g1 = mass(kinks[k + 1]);
        if (g1 > target) continue;
        const double g0 = mass(kinks[k]);
        const double width = kinks[k + 1] - kinks[k];
        tau = (g0 - g1) > 0.0 ? kinks[k] + width * (g0 - target) / (g0 - g1) : kinks[k];
        break;
      }
      for (Index col : free) w(t, col) = std::clamp(w(t, col) - tau, (*lower_)(t, col), (*upper_)(t, col));
      // Spread the last rounding residual over cells strictly inside their bounds.
      double s = 0.0;
      for (Index col : free) s += w(t, col);
      const double resid = target - s;
      if (resid != 0.0) {
        for (Index col : free) {
          const double v = w(t, col) + resid;
          if (v >= (*lower_)(t, col) && v <= (*upper_)(t, col)) {
            w(t, col) = v;
            break;
          }
        }
      }
    }
  }

  // Dykstra's alternating projection between the affine part and the
  // box/simplex part.
  Matrix dykstra(const Matrix& point) const {
    Matrix x = point;
    Matrix p = Matrix::Zero(n_, d_);
    Matrix q = Matrix::Zero(n_, d_);
    for (int it = 0; it < 100; ++it) {
      Matrix y = x + p;
      project_affine(y);
      restore_observed(y);
      p = x + p - y;
      Matrix z = y + q;
      if (has_simplex()) {
        project_rows(z);
      } else {
        z = z.cwiseMax(*lower_).cwiseMin(*upper_);
        restore_observed(z);
      }
      q = y + q - z;
      const double change = (z - x).cwiseAbs().maxCoeff();
      x = std::move(z);
      if (change < 1e-14) break;
    }
    return x;
  }

  ConstraintKind kind_;
  Index n_;
  Index d_;
  std::optional<Mask> obs_mask_;  // true = missing (free)
  std::optional<Matrix> obs_values_;
  std::optional<Matrix> K_;
  std::optional<Vector> b_;
  std::shared_ptr<const Eigen::CompleteOrthogonalDecomposition<Matrix>> cod_;
  std::optional<Matrix> lower_;
  std::optional<Matrix> upper_;
  bool simplex_ = false;
};

// First differences y_t = x_t - x_{t-1}, t = 1..n-1, stored at row t-1. A
// difference is observed only when both endpoints are.
inline TimeSeriesPanel difference_panel(const TimeSeriesPanel& raw) {
  if (raw.d() != 1) throw ConfigError("differencing expects a univariate series");
  if (raw.n() < 2) throw ConfigError("cannot difference a series of length < 2");
  const Index m = raw.n() - 1;
  Matrix y(m, 1);
  Mask mask(m, 1);
  for (Index t = 1; t < raw.n(); ++t) {
    mask(t - 1, 0) = raw.missing(t, 0) || raw.missing(t - 1, 0);
    y(t - 1, 0) = mask(t - 1, 0) ? 0.0 : raw.values()(t, 0) - raw.values()(t - 1, 0);
  }
  return TimeSeriesPanel(std::move(y), std::move(mask));
}

// Linear constraints tying an imputation w_1..w_{n-1} of the differenced
// series to the observed levels: for consecutive observed times a < t,
// w_{a+1} + ... + w_t = x_t - x_a. Together these reproduce
// w_{a0+1} + ... + w_t = x_t - x_{a0} for every observed t, where a0 is the
// first observed time.
inline ConstraintSet build_cumsum_constraints(const TimeSeriesPanel& raw) {
  if (raw.d() != 1) throw ConfigError("cumulative-sum constraints expect a univariate series");
  std::vector<Index> obs;
  for (Index t = 0; t < raw.n(); ++t)
    if (!raw.missing(t, 0)) obs.push_back(t);
  if (obs.size() < 2) throw ConfigError("need at least two observed values to difference");
  const Index m = raw.n() - 1;
  const auto rows = static_cast<Index>(obs.size()) - 1;
  Matrix K = Matrix::Zero(rows, m);
  Vector b(rows);
  for (Index r = 0; r < rows; ++r) {
    const Index a = obs[static_cast<std::size_t>(r)];
    const Index t = obs[static_cast<std::size_t>(r + 1)];
    for (Index s = a + 1; s <= t; ++s) K(r, s - 1) = 1.0;
    b(r) = raw.values()(t, 0) - raw.values()(a, 0);
  }
  ConstraintSet c(ConstraintKind::CumSum, m, 1);
  c.set_observed(difference_panel(raw));
  c.set_linear(std::move(K), std::move(b));
  return c;
}

// Rebuilds levels from an imputed difference series, anchored at the first
// observed level.
inline Vector integrate_differences(const Vector& w, const TimeSeriesPanel& raw) {
  if (w.size() != raw.n() - 1) throw ConfigError("difference series has wrong length");
  Index anchor = -1;
  for (Index t = 0; t < raw.n(); ++t)
    if (!raw.missing(t, 0)) {
      anchor = t;
      break;
    }
  if (anchor < 0) throw ConfigError("series has no observed value");
  Vector x(raw.n());
  x(anchor) = raw.values()(anchor, 0);
  for (Index t = anchor + 1; t < raw.n(); ++t) x(t) = x(t - 1) + w(t - 1);
  for (Index t = anchor - 1; t >= 0; --t) x(t) = x(t + 1) - w(t);
  return x;
}

}  // namespace twimpute
