#pragma once

#include "twimpute/baselines.hpp"
#include "twimpute/constraints.hpp"
#include "twimpute/core_types.hpp"
#include "twimpute/embed.hpp"
#include "twimpute/objective.hpp"
#include "twimpute/ot.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace twimpute {

struct InitStrategy {
  enum class Kind { LinearInterpolation, LOCF, Mean, Provided };
  Kind kind = Kind::LinearInterpolation;
  Matrix provided;

  static InitStrategy linear() { return {Kind::LinearInterpolation, {}}; }
  static InitStrategy locf() { return {Kind::LOCF, {}}; }
  static InitStrategy mean() { return {Kind::Mean, {}}; }
  static InitStrategy from(Matrix w) { return {Kind::Provided, std::move(w)}; }
};

// Starting point for twi, projected onto C when it is not already
// admissible.
inline Matrix initial_point(const TimeSeriesPanel& panel, const ConstraintSet& C, const InitStrategy& init) {
  Matrix w;
  switch (init.kind) {
    case InitStrategy::Kind::LinearInterpolation: w = impute_baseline(panel, BaselineMethod::linear()); break;
    case InitStrategy::Kind::LOCF: w = impute_baseline(panel, BaselineMethod::locf()); break;
    case InitStrategy::Kind::Mean: w = impute_baseline(panel, BaselineMethod::mean()); break;
    case InitStrategy::Kind::Provided:
      if (init.provided.rows() != panel.n() || init.provided.cols() != panel.d()) {
        throw ConfigError("provided initialization has the wrong shape");
      }
      if (!init.provided.allFinite()) throw ConfigError("provided initialization has non-finite entries");
      w = init.provided;
      break;
  }
  if (!C.contains(w, 1e-9)) w = C.project(w);
  C.restore_observed(w);
  return w;
}

namespace detail {

// F and its gradient evaluated from the plan support only.
inline double coupling_F(const Matrix& w, const std::vector<Coupling>& cs, Index p, double k, double lambda) {
  double total = 0.0;
  for (const auto& c : cs) {
    const double s = window_sqdist(w, c.pre, w, c.post, p);
    total += c.weight * (k == 2.0 ? s : std::pow(std::sqrt(s), k));
  }
  return total + 0.5 * lambda * w.squaredNorm();
}

inline Matrix coupling_grad(const Matrix& w, const std::vector<Coupling>& cs, Index p, double k, double lambda) {
  Matrix g = lambda * w;
  for (const auto& c : cs) {
    const double s = window_sqdist(w, c.pre, w, c.post, p);
    double scale = 2.0;
    if (k != 2.0) {
      if (s == 0.0) continue;
      scale = k * std::pow(s, 0.5 * k - 1.0);
    }
    for (Index col = 0; col < w.cols(); ++col) {
      const Vector gv = c.weight * scale * (w.col(col).segment(c.pre - p + 1, p) - w.col(col).segment(c.post - p + 1, p));
      g.col(col).segment(c.pre - p + 1, p) += gv;
      g.col(col).segment(c.post - p + 1, p) -= gv;
    }
  }
  return g;
}

// Variables of vec(W) split into fixed ones (observed cells and unit rows of
// K) and free ones; the remaining rows of K restricted to the free variables
// are parametrized as u = u0 + Z z with Z an orthonormal null-space basis.
struct AffineReduction {
  Index n = 0;
  Index d = 0;
  std::vector<Index> free;
  std::vector<Index> pos;
  Matrix fixed;  // n x d, zero at free cells
  bool has_rows = false;
  Matrix Z;
  Vector u0;

  AffineReduction(const ConstraintSet& C) : n(C.n()), d(C.d()) {
    const Index N = n * d;
    std::vector<char> is_fixed(static_cast<std::size_t>(N), 0);
    fixed = Matrix::Zero(n, d);
    if (C.has_observed()) {
      for (Index col = 0; col < d; ++col)
        for (Index t = 0; t < n; ++t)
          if (!C.observed_mask()(t, col)) {
            is_fixed[static_cast<std::size_t>(col * n + t)] = 1;
            fixed(t, col) = C.observed_values()(t, col);
          }
    }
    std::vector<Index> rows;
    if (C.has_linear()) {
      const Matrix& K = C.K();
      for (Index r = 0; r < K.rows(); ++r) {
        Index nnz = 0;
        Index last = -1;
        for (Index v = 0; v < N; ++v)
          if (K(r, v) != 0.0) {
            ++nnz;
            last = v;
          }
        if (nnz == 1) {
          if (!is_fixed[static_cast<std::size_t>(last)]) {
            is_fixed[static_cast<std::size_t>(last)] = 1;
            fixed(last % n, last / n) = C.b()(r) / K(r, last);
          }
        } else if (nnz > 1) {
          rows.push_back(r);
        }
      }
    }
    pos.assign(static_cast<std::size_t>(N), -1);
    for (Index v = 0; v < N; ++v)
      if (!is_fixed[static_cast<std::size_t>(v)]) {
        pos[static_cast<std::size_t>(v)] = static_cast<Index>(free.size());
        free.push_back(v);
      }
    const auto f = static_cast<Index>(free.size());
    if (rows.empty() || f == 0) return;

    const Matrix& K = C.K();
    const Eigen::Map<const Vector> xf(fixed.data(), N);
    std::vector<Index> kept;
    for (Index r : rows) {
      double nrm = 0.0;
      for (Index k = 0; k < f; ++k) nrm += std::abs(K(r, free[static_cast<std::size_t>(k)]));
      if (nrm > 0.0) kept.push_back(r);
    }
    if (kept.empty()) return;
    const auto m = static_cast<Index>(kept.size());
    Matrix KF(m, f);
    Vector br(m);
    for (Index i = 0; i < m; ++i) {
      const Index r = kept[static_cast<std::size_t>(i)];
      for (Index k = 0; k < f; ++k) KF(i, k) = K(r, free[static_cast<std::size_t>(k)]);
      br(i) = C.b()(r) - K.row(r).dot(xf);
    }
    Eigen::ColPivHouseholderQR<Matrix> qr(KF.transpose());
    const Index rank = qr.rank();
    const Matrix Q = qr.householderQ() * Matrix::Identity(f, f);
    Z = Q.rightCols(f - rank);
    u0 = Eigen::CompleteOrthogonalDecomposition<Matrix>(KF).solve(br);
    has_rows = true;
  }

  Index col_of(Index k) const { return free[static_cast<std::size_t>(k)] / n; }
  Index time_of(Index k) const { return free[static_cast<std::size_t>(k)] % n; }

  // H restricted to the free variables (block diagonal across columns).
  Matrix free_block(const QuadraticForm& qf) const {
    const auto f = static_cast<Index>(free.size());
    Matrix A = Matrix::Zero(f, f);
    for (Index k = 0; k < f; ++k) A(k, k) = qf.diagonal()(time_of(k));
    for (const auto& c : qf.couplings()) {
      for (Index h = 0; h < qf.p(); ++h) {
        for (Index col = 0; col < d; ++col) {
          const Index ia = pos[static_cast<std::size_t>(col * n + c.pre - h)];
          const Index ib = pos[static_cast<std::size_t>(col * n + c.post - h)];
          if (ia < 0 || ib < 0) continue;
          A(ia, ib) -= c.weight;
          A(ib, ia) -= c.weight;
        }
      }
    }
    return A;
  }

  Matrix assemble(const Vector& u) const {
    Matrix w = fixed;
    for (std::size_t k = 0; k < free.size(); ++k) w(free[k] % n, free[k] / n) = u(static_cast<Index>(k));
    return w;
  }
};

inline bool solve_spd(const Matrix& A, const Vector& rhs, Vector& out) {
  if (A.rows() == 0) {
    out.resize(0);
    return true;
  }
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-13)) return false;
  out = llt.solve(rhs);
  return out.allFinite();
}

}  // namespace detail

struct ProxOutcome {
  Matrix w;
  bool converged = false;
  int iterations = 0;
  double gradient_mapping = 0.0;
};

// The w-step: argmin over C of F(., plan). The constraint
// structure is analysed once and reused across outer iterations.
class SubproblemSolver {
 public:
  SubproblemSolver(const ConstraintSet& C, const TwiConfig& cfg) : C_(C), cfg_(cfg) {
    const bool direct = cfg.cost_order == 2.0 && C.is_affine() && cfg.subproblem_method == SubproblemMethod::direct;
    if (direct && !use_closed_form()) red_.emplace(C);
  }

  const std::vector<std::string>& warnings() const { return warnings_; }

  // Set when the last proximal solve stopped without meeting its tolerance.
  const std::optional<ProxOutcome>& last_prox() const { return last_prox_; }

  Matrix solve(const TransportPlan& plan, const Matrix& current) {
    last_prox_.reset();
    if (current.rows() != C_.n() || current.cols() != C_.d()) throw ConfigError("current point has wrong shape");
    if (use_closed_form()) return closed_form(plan);
    if (red_) return reduced(plan);
    last_prox_ = proximal(plan, current);
    return last_prox_->w;
  }

  // Affine projection form: w = H^-1 K^T (K H^-1 K^T)^-1 b, valid for lambda > 0.
  Matrix closed_form(const TransportPlan& plan) const {
    const Index n = C_.n();
    const Index d = C_.d();
    const QuadraticForm qf(plan, cfg_, n);
    Eigen::LLT<Matrix> llt(qf.dense());
    if (llt.info() != Eigen::Success) throw NumericalError("H is not positive definite");
    const Matrix& K = C_.K();
    Matrix HinvKt(n * d, K.rows());
    for (Index col = 0; col < d; ++col) {
      HinvKt.middleRows(col * n, n) = llt.solve(K.middleCols(col * n, n).transpose());
    }
    const Matrix S = K * HinvKt;
    const Vector nu = Eigen::CompleteOrthogonalDecomposition<Matrix>(S).solve(C_.b());
    const Vector x = HinvKt * nu;
    Matrix w = Eigen::Map<const Matrix>(x.data(), n, d);
    C_.restore_observed(w);
    return w;
  }

  ProxOutcome proximal(const TransportPlan& plan, const Matrix& current) const {
    const Index n = C_.n();
    const EmbeddingView view(n, C_.d(), cfg_.p, cfg_.n1);
    check_plan_shape(plan, view);
    const auto cs = plan_support(plan, view);
    const double k = cfg_.cost_order;
    std::optional<QuadraticForm> qf;
    if (k == 2.0) qf.emplace(plan, cfg_, n);
    auto f = [&](const Matrix& w) { return qf ? qf->value(w) : detail::coupling_F(w, cs, cfg_.p, k, cfg_.lambda); };
    auto grad = [&](const Matrix& w) -> Matrix {
      if (qf) return 2.0 * qf->apply(w);
      return detail::coupling_grad(w, cs, cfg_.p, k, cfg_.lambda);
    };

    double L = 0.0;
    {
      TwiConfig c2 = cfg_;
      c2.cost_order = 2.0;
      L = 2.2 * QuadraticForm(plan, c2, n).max_eigenvalue(20);
    }
    if (!(L > 0.0)) L = 1e-6;

    ProxOutcome out;
    Matrix x = C_.contains(current, 1e-12) ? current : C_.project(current);
    double Fx = f(x);
    Matrix best = x;
    double Fbest = Fx;
    Matrix y = x;
    double tk = 1.0;
    double window_start = Fx;
    for (int it = 0; it < cfg_.max_prox_iters; ++it) {
      out.iterations = it + 1;
      const Matrix g = grad(y);
      const double Fy = f(y);
      Matrix xn;
      double Fxn = 0.0;
      double dn = 0.0;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt) {
        xn = C_.project(y - g / L);
        const Matrix dlt = xn - y;
        dn = dlt.norm();
        Fxn = f(xn);
        const double model = Fy + (g.array() * dlt.array()).sum() + 0.5 * L * dn * dn;
        if (Fxn <= model + 1e-14 * std::abs(Fy)) {
          accepted = true;
          break;
        }
        L *= 2.0;
      }
      out.gradient_mapping = L * dn;
      if (Fxn < Fbest) {
        best = xn;
        Fbest = Fxn;
      }
      if (!accepted) break;
      if (out.gradient_mapping < cfg_.prox_tol) {
        out.converged = true;
        break;
      }
      if (Fxn > Fx) {
        y = x;
        tk = 1.0;
        continue;
      }
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      y = xn + ((tk - 1.0) / tn) * (xn - x);
      x = std::move(xn);
      Fx = Fxn;
      tk = tn;
      if ((it + 1) % 2000 == 0) {
        // Stalled: no measurable progress over the last window.
        if (window_start - Fbest <= 1e-15 * std::max(1.0, std::abs(Fbest))) break;
        window_start = Fbest;
      }
    }
    out.w = std::move(best);
    C_.restore_observed(out.w);
    return out;
  }

 private:
  bool use_closed_form() const {
    return cfg_.cost_order == 2.0 && cfg_.lambda > 0.0 && C_.kind() == ConstraintKind::LinearEquality &&
           C_.is_affine() && cfg_.subproblem_method == SubproblemMethod::direct;
  }

  Matrix reduced(const TransportPlan& plan) {
    const auto& red = *red_;
    const Index n = C_.n();
    for (;;) {
      TwiConfig c = cfg_;
      c.lambda = cfg_.lambda + lambda_bump_;
      const QuadraticForm qf(plan, c, n);
      const Matrix G = qf.apply(red.fixed);
      const auto f = static_cast<Index>(red.free.size());
      Vector g(f);
      for (Index k = 0; k < f; ++k) g(k) = G(red.time_of(k), red.col_of(k));
      const Matrix A = red.free_block(qf);
      Vector u;
      bool ok = true;
      if (!red.has_rows) {
        u.resize(f);
        Index start = 0;
        while (ok && start < f) {
          Index stop = start;
          while (stop < f && red.col_of(stop) == red.col_of(start)) ++stop;
          Vector ub;
          ok = detail::solve_spd(A.block(start, start, stop - start, stop - start), -g.segment(start, stop - start), ub);
          if (ok) u.segment(start, stop - start) = ub;
          start = stop;
        }
      } else {
        const Matrix AZ = A * red.Z;
        const Matrix R = red.Z.transpose() * AZ;
        const Vector rhs = -(red.Z.transpose() * (A * red.u0 + g));
        Vector z;
        ok = detail::solve_spd(R, rhs, z);
        if (ok) u = red.u0 + red.Z * z;
      }
      if (ok) {
        Matrix w = red.assemble(u);
        C_.restore_observed(w);
        return w;
      }
      if (cfg_.lambda == 0.0 && lambda_bump_ == 0.0) {
        lambda_bump_ = 1e-8;
        warnings_.push_back("reduced system singular at lambda = 0; retrying with lambda = 1e-8");
        continue;
      }
      throw NumericalError("reduced system is singular; use lambda > 0");
    }
  }

  const ConstraintSet& C_;
  TwiConfig cfg_;
  std::optional<detail::AffineReduction> red_;
  double lambda_bump_ = 0.0;
  std::vector<std::string> warnings_;
  std::optional<ProxOutcome> last_prox_;
};

// One-shot step (b). Proximal non-convergence is an error here.
inline Matrix solve_subproblem(const TransportPlan& plan, const ConstraintSet& C, const TwiConfig& cfg,
                               const Matrix& current) {
  cfg.validate(C.n());
  SubproblemSolver s(C, cfg);
  Matrix w = s.solve(plan, current);
  if (s.last_prox() && !s.last_prox()->converged) {
    std::ostringstream os;
    os << "proximal gradient did not converge in " << s.last_prox()->iterations
       << " iterations (gradient mapping norm " << s.last_prox()->gradient_mapping << ", tolerance " << cfg.prox_tol
       << ")";
    throw NumericalError(os.str());
  }
  return w;
}

// Alternate an exact (or entropic) OT step with the constrained
// w-step until the objective stalls.
inline ImputationResult twi(const TimeSeriesPanel& panel, const ConstraintSet& C, const TwiConfig& cfg,
                            const InitStrategy& init = InitStrategy::linear()) {
  const Index n = panel.n();
  cfg.validate(n);
  if (C.n() != n || C.d() != panel.d()) throw ConfigError("constraint set shape does not match the panel");

  ImputationResult res;
  ExactOtSolver exact;
  auto solve_ot = [&](const Matrix& cost) {
    if (cfg.ot_method == OtMethod::sinkhorn) {
      SinkhornOptions opt;
      opt.epsilon = cfg.sinkhorn_epsilon;
      return solve_sinkhorn(cost, opt);
    }
    return exact.solve(cost);
  };

  if (!panel.has_missing() && C.kind() != ConstraintKind::LinearEquality && C.kind() != ConstraintKind::CumSum) {
    res.imputed = panel.values();
    res.plan = solve_ot(cost_matrix(res.imputed, cfg)).plan;
    clamp_plan(res.plan);
    res.converged = true;
    return res;
  }

  Matrix w = initial_point(panel, C, init);
  SubproblemSolver sub(C, cfg);
  const double half_lambda = 0.5 * cfg.lambda;
  double F_end = 0.0;
  for (int it = 1; it <= cfg.max_outer_iters; ++it) {
    const Matrix cost = cost_matrix(w, cfg);
    OtSolution ot = solve_ot(cost);
    clamp_plan(ot.plan);
    double F_a = ot.plan.matrix.cwiseProduct(cost).sum() + half_lambda * w.squaredNorm();
    // An approximate plan may not improve on the previous one.
    if (it > 1 && F_a > F_end) {
      ot.plan = res.plan;
      F_a = F_end;
    }
    res.objective_trace.push_back(F_a);

    Matrix wn = sub.solve(ot.plan, w);
    if (sub.last_prox() && !sub.last_prox()->converged) {
      res.warnings.push_back("iteration " + std::to_string(it) + ": proximal step stopped after " +
                             std::to_string(sub.last_prox()->iterations) + " iterations (gradient mapping " +
                             std::to_string(sub.last_prox()->gradient_mapping) + ")");
    }
    double F_b = eval_F(wn, ot.plan, cfg);
    if (!(F_b <= F_a)) {
      wn = w;
      F_b = F_a;
    }
    res.objective_trace.push_back(F_b);
    res.plan = std::move(ot.plan);
    w = std::move(wn);
    res.iterations = it;

    const double F_prev = it == 1 ? F_a : F_end;
    F_end = F_b;
    if (F_b == 0.0 || (F_prev - F_b) / std::max(F_prev, 1e-12) < cfg.tol_rel) {
      res.converged = true;
      break;
    }
  }
  for (const auto& msg : sub.warnings()) res.warnings.push_back(msg);
  C.restore_observed(w);
  res.imputed = std::move(w);
  return res;
}

// twi at each cut-off in turn, warm-started.
inline ImputationResult k_twi(const TimeSeriesPanel& panel, const ConstraintSet& C, const TwiConfig& cfg,
                              const std::vector<Index>& cutoffs, const InitStrategy& init = InitStrategy::linear()) {
  if (cutoffs.empty()) throw ConfigError("k-TWI needs at least one cut-off");
  ImputationResult out;
  out.segment_offsets.clear();
  out.converged = true;
  InitStrategy current = init;
  for (Index n1 : cutoffs) {
    TwiConfig c = cfg;
    c.n1 = n1;
    ImputationResult r = twi(panel, C, c, current);
    out.segment_offsets.push_back(out.objective_trace.size());
    out.objective_trace.insert(out.objective_trace.end(), r.objective_trace.begin(), r.objective_trace.end());
    out.iterations += r.iterations;
    out.converged = out.converged && r.converged;
    for (auto& msg : r.warnings) out.warnings.push_back("cut-off " + std::to_string(n1) + ": " + msg);
    out.plan = std::move(r.plan);
    out.imputed = r.imputed;
    current = InitStrategy::from(std::move(r.imputed));
  }
  return out;
}

inline std::vector<Index> default_cutoffs(Index n) {
  return {static_cast<Index>(0.25 * static_cast<double>(n)), static_cast<Index>(0.5 * static_cast<double>(n)),
          static_cast<Index>(0.75 * static_cast<double>(n))};
}

struct EmIdentityReport {
  double max_violation = 0.0;
  Index checked = 0;
  bool no_qualifying_indices() const { return checked == 0; }
};

// Fixed-point diagnostic: at a stationary point with lambda = 0, each missing
// w_s with p-1 <= s <= n1-p+1 equals the average over the p embeddings
// containing it of the plan-conditional mean of the matched coordinate.
inline EmIdentityReport em_identity_check(const ImputationResult& result, const TimeSeriesPanel& panel,
                                          const TwiConfig& cfg) {
  const Index n = panel.n();
  cfg.validate(n);
  const EmbeddingView view(n, panel.d(), cfg.p, cfg.n1);
  check_plan_shape(result.plan, view);
  const Matrix& P = result.plan.matrix;
  const Matrix& w = result.imputed;
  const Vector row_mass = P.rowwise().sum();
  EmIdentityReport rep;
  for (Index col = 0; col < panel.d(); ++col) {
    for (Index s = cfg.p - 1; s <= cfg.n1 - cfg.p + 1; ++s) {
      if (!panel.missing(s, col)) continue;
      double avg = 0.0;
      for (Index i = s; i <= s + cfg.p - 1; ++i) {
        const Index row = i - (cfg.p - 1);
        double cond = 0.0;
        for (Index jc = 0; jc < P.cols(); ++jc) {
          const double pij = P(row, jc);
          if (pij == 0.0) continue;
          const Index j = view.post_time(jc);
          cond += pij * w(j - i + s, col);
        }
        avg += cond / row_mass(row);
      }
      avg /= static_cast<double>(cfg.p);
      rep.max_violation = std::max(rep.max_violation, std::abs(avg - w(s, col)));
      ++rep.checked;
    }
  }
  return rep;
}

}  // namespace twimpute
