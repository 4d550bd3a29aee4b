#pragma once

#include "twimpute/core_types.hpp"
#include "twimpute/embed.hpp"

#include <cmath>
#include <vector>

namespace twimpute {

// A nonzero coupling weight between the pre-cut-off embedding ending at time
// `pre` and the post-cut-off embedding ending at time `post`.
struct Coupling {
  Index pre;
  Index post;
  double weight;
};

inline std::vector<Coupling> plan_support(const TransportPlan& plan, const EmbeddingView& view) {
  std::vector<Coupling> out;
  for (Index j = 0; j < plan.cols(); ++j)
    for (Index i = 0; i < plan.rows(); ++i) {
      const double w = plan.matrix(i, j);
      if (w > 0.0) out.push_back({view.pre_time(i), view.post_time(j), w});
    }
  return out;
}

inline void check_plan_shape(const TransportPlan& plan, const EmbeddingView& view) {
  if (plan.rows() != view.pre_count() || plan.cols() != view.post_count()) {
    throw ConfigError("transport plan is " + std::to_string(plan.rows()) + "x" + std::to_string(plan.cols()) +
                      ", expected " + std::to_string(view.pre_count()) + "x" + std::to_string(view.post_count()));
  }
}

// F(w, Pi) = sum_ij pi_ij ||v_i(w) - v_j(w)||^k + (lambda/2) ||w||_F^2,
// evaluated directly from the embeddings.
inline double eval_F(const Matrix& w, const TransportPlan& plan, const TwiConfig& cfg) {
  cfg.validate(w.rows());
  const EmbeddingView view(w, cfg);
  check_plan_shape(plan, view);
  const double k = cfg.cost_order;
  double total = 0.0;
  for (Index j = 0; j < plan.cols(); ++j) {
    const Index tj = view.post_time(j);
    for (Index i = 0; i < plan.rows(); ++i) {
      const double pij = plan.matrix(i, j);
      if (pij == 0.0) continue;
      const Index ti = view.pre_time(i);
      const double s = window_sqdist(w, ti, w, tj, cfg.p);
      total += pij * (k == 2.0 ? s : std::pow(std::sqrt(s), k));
    }
  }
  return total + 0.5 * cfg.lambda * w.squaredNorm();
}

// H(Pi) = sum_{h<p} A_h(Pi) + (lambda/2) I, kept in sparse form: the
// diagonal plus the coupling list, with each coupling (i, j) contributing
// -pi_ij at positions (i-h, j-h) and (j-h, i-h) for h = 0..p-1.
class QuadraticForm {
 public:
  QuadraticForm(const TransportPlan& plan, const TwiConfig& cfg, Index n)
      : n_(n), p_(cfg.p), n1_(cfg.n1), lambda_(cfg.lambda) {
    cfg.validate(n);
    if (cfg.cost_order != 2.0) {
      throw ConfigError("the quadratic form H(Pi) exists only for the squared Euclidean cost (k = 2)");
    }
    const EmbeddingView view(n, 1, cfg.p, cfg.n1);
    check_plan_shape(plan, view);
    couplings_ = plan_support(plan, view);
    diag_ = Vector::Constant(n, 0.5 * lambda_);
    const double wr = 1.0 / static_cast<double>(view.pre_count());
    const double wc = 1.0 / static_cast<double>(view.post_count());
    for (Index h = 0; h < p_; ++h) {
      for (Index t = p_ - 1; t <= n1_; ++t) diag_(t - h) += wr;
      for (Index t = n1_ + 1; t < n_; ++t) diag_(t - h) += wc;
    }
  }

  Index n() const { return n_; }
  Index p() const { return p_; }
  Index n1() const { return n1_; }
  double lambda() const { return lambda_; }
  const Vector& diagonal() const { return diag_; }
  const std::vector<Coupling>& couplings() const { return couplings_; }

  Vector apply(const Vector& w) const {
    Vector y = diag_.cwiseProduct(w);
    for (const auto& c : couplings_) {
      for (Index h = 0; h < p_; ++h) {
        y(c.pre - h) -= c.weight * w(c.post - h);
        y(c.post - h) -= c.weight * w(c.pre - h);
      }
    }
    return y;
  }

  Matrix apply(const Matrix& w) const {
    Matrix y(w.rows(), w.cols());
    for (Index col = 0; col < w.cols(); ++col) y.col(col) = apply(Vector(w.col(col)));
    return y;
  }

  // sum over columns of w_l^T H w_l.
  double value(const Matrix& w) const {
    double s = 0.0;
    for (Index col = 0; col < w.cols(); ++col) {
      const Vector wc = w.col(col);
      s += wc.dot(apply(wc));
    }
    return s;
  }

  Matrix dense() const {
    Matrix H = diag_.asDiagonal();
    for (const auto& c : couplings_) {
      for (Index h = 0; h < p_; ++h) {
        H(c.pre - h, c.post - h) -= c.weight;
        H(c.post - h, c.pre - h) -= c.weight;
      }
    }
    return H;
  }

  // Largest eigenvalue estimate from power iteration (deterministic start).
  double max_eigenvalue(int iters = 20) const {
    Vector v = Vector::LinSpaced(n_, 1.0, 2.0);
    v.normalize();
    double est = 0.0;
    for (int it = 0; it < iters; ++it) {
      Vector hv = apply(v);
      const double nrm = hv.norm();
      if (nrm == 0.0) return 0.0;
      est = v.dot(hv);
      v = hv / nrm;
    }
    return std::max(est, apply(v).dot(v));
  }

 private:
  Index n_;
  Index p_;
  Index n1_;
  double lambda_;
  Vector diag_;
  std::vector<Coupling> couplings_;
};

inline QuadraticForm assemble_H(const TransportPlan& plan, const TwiConfig& cfg, Index n) {
  return QuadraticForm(plan, cfg, n);
}

// Gradient of F in w for any cost order k >= 1. For k = 2 this equals 2 H w.
// At coincident embeddings with k = 1 the zero subgradient is used.
inline Matrix gradient_F(const Matrix& w, const TransportPlan& plan, const TwiConfig& cfg) {
  const EmbeddingView view(w, cfg);
  check_plan_shape(plan, view);
  const double k = cfg.cost_order;
  Matrix g = cfg.lambda * w;
  for (Index j = 0; j < plan.cols(); ++j) {
    const Index tj = view.post_time(j);
    for (Index i = 0; i < plan.rows(); ++i) {
      const double pij = plan.matrix(i, j);
      if (pij == 0.0) continue;
      const Index ti = view.pre_time(i);
      const double s = window_sqdist(w, ti, w, tj, cfg.p);
      double scale;
      if (k == 2.0) {
        scale = 2.0;
      } else if (s == 0.0) {
        continue;
      } else {
        scale = k * std::pow(s, 0.5 * k - 1.0);
      }
      for (Index col = 0; col < w.cols(); ++col) {
        const Vector gv = pij * scale * (w.col(col).segment(ti - cfg.p + 1, cfg.p) - w.col(col).segment(tj - cfg.p + 1, cfg.p));
        g.col(col).segment(ti - cfg.p + 1, cfg.p) += gv;
        g.col(col).segment(tj - cfg.p + 1, cfg.p) -= gv;
      }
    }
  }
  return g;
}

}  // namespace twimpute
