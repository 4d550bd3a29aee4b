#pragma once

#include "twimpute/core_types.hpp"

#include <Eigen/Cholesky>

#include <string>
#include <vector>

namespace twimpute {

struct ScalarFilterOptions {
  Index ar_order = 6;
  double ridge = 1e-4;
  int iterations = 1;
};

enum class BaselineKind { Linear, LOCF, Mean, ScalarFilter };

struct BaselineMethod {
  BaselineKind kind = BaselineKind::Linear;
  ScalarFilterOptions filter{};

  static BaselineMethod linear() { return {BaselineKind::Linear, {}}; }
  static BaselineMethod locf() { return {BaselineKind::LOCF, {}}; }
  static BaselineMethod mean() { return {BaselineKind::Mean, {}}; }
  static BaselineMethod scalar_filter(ScalarFilterOptions opt = {}) { return {BaselineKind::ScalarFilter, opt}; }
};

namespace detail {

inline std::vector<Index> observed_rows(const TimeSeriesPanel& panel, Index col) {
  std::vector<Index> obs;
  for (Index t = 0; t < panel.n(); ++t)
    if (!panel.missing(t, col)) obs.push_back(t);
  if (obs.empty()) throw ConfigError("column " + std::to_string(col) + " has no observed values");
  return obs;
}

inline Vector linear_column(const TimeSeriesPanel& panel, Index col) {
  const auto obs = observed_rows(panel, col);
  if (obs.size() < 2) throw ConfigError("linear interpolation needs two observed values in column " + std::to_string(col));
  const auto& x = panel.values();
  Vector out(panel.n());
  for (Index t = 0; t < obs.front(); ++t) out(t) = x(obs.front(), col);
  for (Index t = obs.back(); t < panel.n(); ++t) out(t) = x(obs.back(), col);
  for (std::size_t k = 0; k + 1 < obs.size(); ++k) {
    const Index a = obs[k];
    const Index b = obs[k + 1];
    out(a) = x(a, col);
    const double xa = x(a, col);
    const double xb = x(b, col);
    for (Index t = a + 1; t < b; ++t) {
      const double u = static_cast<double>(t - a) / static_cast<double>(b - a);
      out(t) = xa + u * (xb - xa);
    }
  }
  return out;
}

inline Vector locf_column(const TimeSeriesPanel& panel, Index col) {
  const auto obs = observed_rows(panel, col);
  Vector out(panel.n());
  double last = panel.values()(obs.front(), col);
  for (Index t = 0; t < panel.n(); ++t) {
    if (!panel.missing(t, col)) last = panel.values()(t, col);
    out(t) = last;
  }
  return out;
}

inline Vector mean_column(const TimeSeriesPanel& panel, Index col) {
  const auto obs = observed_rows(panel, col);
  double s = 0.0;
  for (Index t : obs) s += panel.values()(t, col);
  const double m = s / static_cast<double>(obs.size());
  Vector out(panel.n());
  for (Index t = 0; t < panel.n(); ++t) out(t) = panel.missing(t, col) ? m : panel.values()(t, col);
  return out;
}

// Intervention-analysis imputation: missing cells start at 0, an AR(q) with
// intercept and one pulse indicator per missing time is fitted by ridge least
// squares (intercept unpenalized), and each missing value becomes its current
// value minus the estimated pulse effect. Missing times before q have no
// equation of their own; they receive the fitted AR mean.
inline Vector scalar_filter_column(const TimeSeriesPanel& panel, Index col, const ScalarFilterOptions& opt) {
  if (opt.ar_order < 1) throw ConfigError("scalar filter AR order must be >= 1");
  if (!(opt.ridge >= 0.0)) throw ConfigError("scalar filter ridge must be >= 0");
  observed_rows(panel, col);
  const Index n = panel.n();
  const Index q = opt.ar_order;
  if (n <= q + 1) throw ConfigError("series too short for the scalar filter AR order");
  Vector w(n);
  std::vector<Index> miss;
  for (Index t = 0; t < n; ++t) {
    if (panel.missing(t, col)) {
      miss.push_back(t);
      w(t) = 0.0;
    } else {
      w(t) = panel.values()(t, col);
    }
  }
  if (miss.empty()) return w;

  std::vector<Index> pulse_col(static_cast<std::size_t>(n), -1);
  std::vector<Index> pulses;
  for (Index s : miss)
    if (s >= q) {
      pulse_col[static_cast<std::size_t>(s)] = 1 + q + static_cast<Index>(pulses.size());
      pulses.push_back(s);
    }
  const Index k = 1 + q + static_cast<Index>(pulses.size());
  const Index rows = n - q;

  for (int iter = 0; iter < std::max(opt.iterations, 1); ++iter) {
    Matrix X = Matrix::Zero(rows, k);
    Vector y(rows);
    for (Index t = q; t < n; ++t) {
      const Index r = t - q;
      y(r) = w(t);
      X(r, 0) = 1.0;
      for (Index l = 1; l <= q; ++l) X(r, l) = w(t - l);
      const Index pc = pulse_col[static_cast<std::size_t>(t)];
      if (pc >= 0) X(r, pc) = 1.0;
    }
    Matrix A = X.transpose() * X;
    for (Index j = 1; j < k; ++j) A(j, j) += opt.ridge;
    const Vector rhs = X.transpose() * y;
    Eigen::LDLT<Matrix> ldlt(A);
    if (ldlt.info() != Eigen::Success) throw NumericalError("scalar filter normal equations are singular");
    const Vector theta = ldlt.solve(rhs);
    if (!theta.allFinite()) throw NumericalError("scalar filter normal equations are singular; increase ridge");

    for (std::size_t m = 0; m < pulses.size(); ++m) {
      const Index s = pulses[m];
      w(s) -= theta(1 + q + static_cast<Index>(m));
    }
    const double phi_sum = theta.segment(1, q).sum();
    const double mu = std::abs(1.0 - phi_sum) > 1e-8 ? theta(0) / (1.0 - phi_sum) : theta(0);
    for (Index s : miss)
      if (s < q) w(s) = mu;
  }
  return w;
}

}  // namespace detail

// Fully observed panel from a baseline imputer; observed cells are copied.
inline Matrix impute_baseline(const TimeSeriesPanel& panel, const BaselineMethod& method) {
  Matrix out(panel.n(), panel.d());
  for (Index col = 0; col < panel.d(); ++col) {
    switch (method.kind) {
      case BaselineKind::Linear: out.col(col) = detail::linear_column(panel, col); break;
      case BaselineKind::LOCF: out.col(col) = detail::locf_column(panel, col); break;
      case BaselineKind::Mean: out.col(col) = detail::mean_column(panel, col); break;
      case BaselineKind::ScalarFilter: out.col(col) = detail::scalar_filter_column(panel, col, method.filter); break;
    }
  }
  for (Index col = 0; col < panel.d(); ++col)
    for (Index t = 0; t < panel.n(); ++t)
      if (!panel.missing(t, col)) out(t, col) = panel.values()(t, col);
  return out;
}

}  // namespace twimpute
