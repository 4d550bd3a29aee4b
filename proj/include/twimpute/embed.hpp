#pragma once

#include "twimpute/core_types.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace twimpute {

// Index bookkeeping for the delay embeddings on either side of the cut-off.
// Pre-cut-off embeddings live at t = p-1..n1, post-cut-off at t = n1+1..n-1.
struct EmbeddingView {
  Index n = 0;
  Index d = 1;
  Index p = 1;
  Index n1 = 0;

  EmbeddingView(Index n_, Index d_, Index p_, Index n1_) : n(n_), d(d_), p(p_), n1(n1_) {}
  EmbeddingView(const Matrix& w, const TwiConfig& cfg) : EmbeddingView(w.rows(), w.cols(), cfg.p, cfg.n1) {}

  Index pre_count() const { return n1 - p + 2; }
  Index post_count() const { return n - n1 - 1; }
  Index embed_dim() const { return p * d; }
  Index pre_time(Index row) const { return p - 1 + row; }
  Index post_time(Index col) const { return n1 + 1 + col; }

  std::vector<Index> indices_pre() const {
    std::vector<Index> out;
    for (Index t = p - 1; t <= n1; ++t) out.push_back(t);
    return out;
  }
  std::vector<Index> indices_post() const {
    std::vector<Index> out;
    for (Index t = n1 + 1; t < n; ++t) out.push_back(t);
    return out;
  }
};

// (w_{i,1}, ..., w_{i-p+1,1}, w_{i,2}, ..., w_{i-p+1,d})
inline Vector embed_vector(const Matrix& w, Index i, Index p) {
  if (p < 1 || i < p - 1 || i >= w.rows()) {
    throw ConfigError("embedding index " + std::to_string(i) + " out of range for p=" + std::to_string(p));
  }
  Vector v(p * w.cols());
  for (Index col = 0; col < w.cols(); ++col) {
    for (Index h = 0; h < p; ++h) v(col * p + h) = w(i - h, col);
  }
  return v;
}

// ||v_i(a) - v_j(b)||^2. Differences are formed coordinate by coordinate so
// that identical embeddings give exactly 0. The lag window is read forward as
// a contiguous segment: GCC 11 at -O3 miscompiled the equivalent backward
// loop over w(i - h, col) for multivariate panels.
inline double window_sqdist(const Matrix& a, Index i, const Matrix& b, Index j, Index p) {
  double s = 0.0;
  for (Index col = 0; col < a.cols(); ++col)
    s += (a.col(col).segment(i - p + 1, p) - b.col(col).segment(j - p + 1, p)).squaredNorm();
  return s;
}

// ||v_i(a) - v_j(b)||^k for every i in rows_a, j in rows_b.
inline Matrix pairwise_embedding_cost(const Matrix& a, std::span<const Index> rows_a, const Matrix& b,
                                      std::span<const Index> rows_b, Index p, double k) {
  if (b.cols() != a.cols()) throw ConfigError("embedding sources have different column counts");
  Matrix out(static_cast<Index>(rows_a.size()), static_cast<Index>(rows_b.size()));
  const bool squared = (k == 2.0);
  for (Index jj = 0; jj < out.cols(); ++jj) {
    const Index tj = rows_b[static_cast<std::size_t>(jj)];
    for (Index ii = 0; ii < out.rows(); ++ii) {
      const double s = window_sqdist(a, rows_a[static_cast<std::size_t>(ii)], b, tj, p);
      out(ii, jj) = squared ? s : std::pow(std::sqrt(s), k);
    }
  }
  return out;
}

// Cost matrix between the pre- and post-cut-off embeddings of w.
inline Matrix cost_matrix(const Matrix& w, const TwiConfig& cfg) {
  cfg.validate(w.rows());
  const EmbeddingView view(w, cfg);
  const auto pre = view.indices_pre();
  const auto post = view.indices_post();
  return pairwise_embedding_cost(w, pre, w, post, cfg.p, cfg.cost_order);
}

}  // namespace twimpute
