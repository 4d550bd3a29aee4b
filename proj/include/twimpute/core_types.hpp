#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace twimpute {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;
using Index = Eigen::Index;

// Error hierarchy. The CLI maps ConfigError/ParseError/InfeasibleError to
// exit code 2 and NumericalError to exit code 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct InfeasibleError : Error {
  using Error::Error;
};
struct NumericalError : Error {
  using Error::Error;
};

// An n x d panel of observations with a missing-value mask (true = missing).
// Values behind a true mask carry no meaning and are never read.
class TimeSeriesPanel {
 public:
  TimeSeriesPanel() = default;

  TimeSeriesPanel(Matrix values, Mask mask)
      : values_(std::move(values)), mask_(std::move(mask)) {
    if (values_.rows() != mask_.rows() || values_.cols() != mask_.cols()) {
      throw ConfigError("panel values and mask have different shapes");
    }
    if (values_.rows() < 1 || values_.cols() < 1) {
      throw ConfigError("panel must have at least one row and one column");
    }
    for (Index j = 0; j < values_.cols(); ++j) {
      for (Index i = 0; i < values_.rows(); ++i) {
        if (mask_(i, j)) values_(i, j) = std::numeric_limits<double>::quiet_NaN();
      }
    }
  }

  // Fully observed panel.
  explicit TimeSeriesPanel(Matrix values)
      : TimeSeriesPanel(values, Mask::Constant(values.rows(), values.cols(), false)) {}

  // Univariate convenience constructor; NaN entries are treated as missing.
  static TimeSeriesPanel from_series(const Vector& x) {
    Mask m(x.size(), 1);
    for (Index i = 0; i < x.size(); ++i) m(i, 0) = std::isnan(x(i));
    return TimeSeriesPanel(Matrix(x), std::move(m));
  }

  Index n() const { return values_.rows(); }
  Index d() const { return values_.cols(); }
  const Matrix& values() const { return values_; }
  const Mask& mask() const { return mask_; }
  bool missing(Index t, Index col) const { return mask_(t, col); }
  Index missing_count() const { return mask_.count(); }
  bool has_missing() const { return mask_.any(); }

  // True when every column shares the same missing rows.
  bool row_aligned_mask() const {
    for (Index j = 1; j < d(); ++j) {
      if ((mask_.col(j) != mask_.col(0)).any()) return false;
    }
    return true;
  }

  // Copy of the panel with the given cells re-masked.
  TimeSeriesPanel with_mask(const Mask& mask) const { return TimeSeriesPanel(values_, mask); }

  bool operator==(const TimeSeriesPanel& o) const {
    if (n() != o.n() || d() != o.d() || (mask_ != o.mask_).any()) return false;
    for (Index j = 0; j < d(); ++j)
      for (Index i = 0; i < n(); ++i)
        if (!mask_(i, j) && values_(i, j) != o.values_(i, j)) return false;
    return true;
  }

 private:
  Matrix values_;
  Mask mask_;
};

enum class OtMethod { exact, sinkhorn };
enum class SubproblemMethod { direct, proximal };

struct TwiConfig {
  Index n1 = 0;
  Index p = 6;
  double lambda = 0.0;
  double cost_order = 2.0;
  OtMethod ot_method = OtMethod::exact;
  double sinkhorn_epsilon = 1e-2;
  int max_outer_iters = 100;
  double tol_rel = 1e-6;
  SubproblemMethod subproblem_method = SubproblemMethod::direct;
  // Inner proximal-gradient controls.
  int max_prox_iters = 100000;
  double prox_tol = 1e-8;

  // Defaults used throughout the simulations: n1 = floor(0.4 n), p = 6.
  static TwiConfig defaults_for(Index n) {
    TwiConfig cfg;
    cfg.n1 = static_cast<Index>(0.4 * static_cast<double>(n));
    return cfg;
  }

  Index pre_count() const { return n1 - p + 2; }
  Index post_count(Index n) const { return n - n1 - 1; }

  void validate(Index n) const {
    if (p < 1) throw ConfigError("lag order p must be >= 1");
    if (!(p - 1 < n1 && n1 < n - p)) {
      throw ConfigError("cut-off n1=" + std::to_string(n1) + " must satisfy p-1 < n1 < n-p (p=" +
                        std::to_string(p) + ", n=" + std::to_string(n) + ")");
    }
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(cost_order >= 1.0)) throw ConfigError("cost order k must be >= 1");
    if (!(tol_rel > 0.0)) throw ConfigError("tol_rel must be > 0");
    if (max_outer_iters < 1) throw ConfigError("max_outer_iters must be >= 1");
    if (ot_method == OtMethod::sinkhorn && !(sinkhorn_epsilon > 0.0))
      throw ConfigError("sinkhorn epsilon must be > 0");
  }
};

// Coupling with uniform marginals between the pre- and post-cut-off
// embeddings. Rows index t = p-1..n1, columns t = n1+1..n-1.
struct TransportPlan {
  Matrix matrix;

  Index rows() const { return matrix.rows(); }
  Index cols() const { return matrix.cols(); }
  double row_mass() const { return 1.0 / static_cast<double>(matrix.rows()); }
  double col_mass() const { return 1.0 / static_cast<double>(matrix.cols()); }

  // Largest absolute deviation of the row/column sums from uniform mass.
  double marginal_violation() const {
    const double rv = (matrix.rowwise().sum().array() - row_mass()).abs().maxCoeff();
    const double cv = (matrix.colwise().sum().array() - col_mass()).abs().maxCoeff();
    return std::max(rv, cv);
  }
};

struct ImputationResult {
  Matrix imputed;
  TransportPlan plan;
  // Interleaved objective values F(w^(t-1), Pi^(t)), F(w^(t), Pi^(t)), ...
  std::vector<double> objective_trace;
  // Start offsets of each cut-off segment inside objective_trace (k-TWI).
  std::vector<std::size_t> segment_offsets{0};
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;

  std::size_t segment_count() const { return segment_offsets.size(); }
  std::vector<double> segment(std::size_t s) const {
    const std::size_t lo = segment_offsets.at(s);
    const std::size_t hi = s + 1 < segment_offsets.size() ? segment_offsets[s + 1] : objective_trace.size();
    return {objective_trace.begin() + static_cast<std::ptrdiff_t>(lo),
            objective_trace.begin() + static_cast<std::ptrdiff_t>(hi)};
  }
};

}  // namespace twimpute
