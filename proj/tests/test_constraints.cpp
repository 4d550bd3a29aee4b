#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace twimpute;
using twtest::Gen;

namespace {

TimeSeriesPanel all_missing(Index n, Index d) { return TimeSeriesPanel(Matrix::Zero(n, d), Mask::Constant(n, d, true)); }

// Projection of a row onto {sum = 1, lo <= x <= hi} by bisection on the shift.
Vector capped_simplex_bisect(const Vector& x, double lo, double hi) {
  auto total = [&](double tau) { return (x.array() - tau).cwiseMax(lo).cwiseMin(hi).sum(); };
  double a = x.minCoeff() - hi - 1.0;
  double b = x.maxCoeff() - lo + 1.0;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    (total(m) > 1.0 ? a : b) = m;
  }
  return (x.array() - 0.5 * (a + b)).cwiseMax(lo).cwiseMin(hi).matrix();
}

// Affine projection from the KKT system [I K^T; K 0].
Vector kkt_projection(const Matrix& K, const Vector& b, const Vector& x) {
  const Index N = x.size();
  const Index m = K.rows();
  Matrix A = Matrix::Zero(N + m, N + m);
  A.topLeftCorner(N, N).setIdentity();
  A.topRightCorner(N, m) = K.transpose();
  A.bottomLeftCorner(m, N) = K;
  Vector rhs(N + m);
  rhs << x, b;
  return A.fullPivLu().solve(rhs).head(N);
}

std::vector<ConstraintSet> assorted_sets(Gen& g, const TimeSeriesPanel& panel) {
  std::vector<ConstraintSet> out;
  out.push_back(ConstraintSet::observed(panel));
  const Index n = panel.n();
  const Index d = panel.d();
  Matrix lo = Matrix::Constant(n, d, -0.5), hi = Matrix::Constant(n, d, 0.5);
  for (Index col = 0; col < d; ++col)
    for (Index t = 0; t < n; ++t)
      if (!panel.missing(t, col)) {
        lo(t, col) = std::min(lo(t, col), panel.values()(t, col));
        hi(t, col) = std::max(hi(t, col), panel.values()(t, col));
      }
  out.push_back(ConstraintSet::box(panel, lo, hi));
  const Matrix K = g.normal_matrix(3, n * d);
  out.push_back(ConstraintSet::linear(K, g.normal_matrix(3, 1).col(0), n, d));
  out.push_back(ConstraintSet::simplex(all_missing(n, 3), false));
  out.push_back(ConstraintSet::simplex(all_missing(n, 3), true));
  return out;
}

}  // namespace

TEST(Project, ObservedFeasiblePointUnchanged) {
  Gen g(1);
  const Matrix x = g.normal_matrix(20, 2);
  const TimeSeriesPanel panel(x, g.random_mask(20, 2, 0.3));
  const auto C = ConstraintSet::observed(panel);
  EXPECT_EQ(C.project(x), x);
}

TEST(Project, ObservedCellsAreOverwritten) {
  Matrix x(3, 1);
  x << 1, 2, 3;
  Mask m(3, 1);
  m << false, true, false;
  const auto C = ConstraintSet::observed(TimeSeriesPanel(x, m));
  Matrix y(3, 1);
  y << 9, 9, 9;
  const Matrix py = C.project(y);
  EXPECT_EQ(py(0, 0), 1);
  EXPECT_EQ(py(1, 0), 9);
  EXPECT_EQ(py(2, 0), 3);
}

TEST(Project, AffineSimplexRowExample) {
  const auto C = ConstraintSet::simplex(all_missing(1, 3), false);
  Matrix row(1, 3);
  row << 0.5, 0.7, 0.0;
  const Matrix pr = C.project(row);
  const double shift = 0.2 / 3.0;
  EXPECT_NEAR(pr(0, 0), 0.5 - shift, 1e-15);
  EXPECT_NEAR(pr(0, 1), 0.7 - shift, 1e-15);
  EXPECT_NEAR(pr(0, 2), 0.0 - shift, 1e-15);
  EXPECT_NEAR(pr.sum(), 1.0, 1e-15);
}

TEST(Project, CappedSimplexMatchesBisection) {
  Gen g(2);
  const auto C = ConstraintSet::simplex(all_missing(50, 4), true);
  const Matrix x = g.normal_matrix(50, 4) * 0.8;
  const Matrix px = C.project(x);
  for (Index t = 0; t < 50; ++t) {
    const Vector oracle = capped_simplex_bisect(x.row(t).transpose(), 0.0, 1.0);
    EXPECT_LT((px.row(t).transpose() - oracle).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_TRUE(C.contains(px, 1e-12));
}

TEST(Project, SimplexWithObservedCell) {
  Matrix x(1, 3);
  x << 0.2, 0.0, 0.0;
  Mask m(1, 3);
  m << false, true, true;
  const auto C = ConstraintSet::simplex(TimeSeriesPanel(x, m), true);
  Matrix y(1, 3);
  y << 0.9, 0.9, 0.1;
  const Matrix py = C.project(y);
  EXPECT_EQ(py(0, 0), 0.2);
  // Remaining mass 0.8 split by shifting (0.9, 0.1) down by 0.1.
  EXPECT_NEAR(py(0, 1), 0.8, 1e-14);
  EXPECT_NEAR(py(0, 2), 0.0, 1e-14);
}

TEST(Project, LinearResidualAndKktOracle) {
  Gen g(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.integer(5, 30);
    const Index m = g.integer(1, 4);
    const Matrix K = g.normal_matrix(m, n);
    const Vector b = g.normal_matrix(m, 1).col(0);
    const auto C = ConstraintSet::linear(K, b, n);
    const Matrix x = g.normal_matrix(n, 1);
    const Matrix px = C.project(x);
    EXPECT_LT((K * px.col(0) - b).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((px.col(0) - kkt_projection(K, b, x.col(0))).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Project, RankDeficientConsistentSystemAccepted) {
  Matrix K(2, 3);
  K << 1, 1, 0, 2, 2, 0;
  Vector b(2);
  b << 1, 2;
  const auto C = ConstraintSet::linear(K, b, 3);
  const Matrix px = C.project(Matrix::Zero(3, 1));
  EXPECT_NEAR(px(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(px(1, 0), 0.5, 1e-12);
  b(1) = 3;
  EXPECT_THROW(ConstraintSet::linear(K, b, 3), InfeasibleError);
}

TEST(Project, BoxExcludingObservedValueNamesCell) {
  Matrix x(3, 1);
  x << 0.5, 2.0, 0.1;
  Mask m(3, 1);
  m << false, false, true;
  try {
    ConstraintSet::box(TimeSeriesPanel(x, m), 0.0, 1.0);
    FAIL() << "expected InfeasibleError";
  } catch (const InfeasibleError& e) {
    EXPECT_NE(std::string(e.what()).find("(1, 0)"), std::string::npos) << e.what();
  }
}

TEST(Project, IdempotentForAllKinds) {
  Gen g(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = g.integer(6, 25);
    const TimeSeriesPanel panel(g.normal_matrix(n, 3) * 0.3, g.random_mask(n, 3, 0.4));
    for (const auto& C : assorted_sets(g, panel)) {
      const Matrix x = g.normal_matrix(n, C.d());
      const Matrix once = C.project(x);
      EXPECT_LT((C.project(once) - once).cwiseAbs().maxCoeff(), 1e-10) << to_string(C.kind());
    }
  }
}

TEST(Project, NonExpansiveForAllKinds) {
  Gen g(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = g.integer(6, 25);
    const TimeSeriesPanel panel(g.normal_matrix(n, 3) * 0.3, g.random_mask(n, 3, 0.4));
    for (const auto& C : assorted_sets(g, panel)) {
      for (int k = 0; k < 5; ++k) {
        const Matrix x = g.normal_matrix(n, C.d());
        const Matrix y = g.normal_matrix(n, C.d());
        EXPECT_LE((C.project(x) - C.project(y)).norm(), (x - y).norm() + 1e-10) << to_string(C.kind());
      }
    }
  }
}

TEST(Project, DykstraLandsInIntersection) {
  Gen g(6);
  const Index n = 12;
  // Sum of all entries fixed, each entry in [0, 1].
  const Matrix K = Matrix::Ones(1, n);
  Vector b(1);
  b << 4.0;
  const auto C = ConstraintSet::linear(K, b, n).with_box(Matrix::Zero(n, 1), Matrix::Ones(n, 1));
  const Matrix x = g.normal_matrix(n, 1);
  const Matrix px = C.project(x);
  EXPECT_TRUE(C.contains(px, 1e-8));
  // Same set is a capped simplex scaled by 4: compare with bisection.
  auto total = [&](double tau) { return (x.array() - tau).cwiseMax(0.0).cwiseMin(1.0).sum(); };
  double lo = -10, hi = 10;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (lo + hi);
    (total(m) > 4.0 ? lo : hi) = m;
  }
  const Vector oracle = (x.array() - 0.5 * (lo + hi)).cwiseMax(0.0).cwiseMin(1.0).matrix();
  EXPECT_LT((px.col(0) - oracle).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(CumSum, FullyObservedGivesThreeEqualities) {
  Vector x(4);
  x << 1, 3, 2, 5;
  const auto C = build_cumsum_constraints(TimeSeriesPanel::from_series(x));
  EXPECT_EQ(C.K().rows(), 3);
  EXPECT_EQ(C.n(), 3);
  const Matrix w = C.project(Matrix::Zero(3, 1));
  EXPECT_NEAR(w(0, 0), 2, 1e-12);
  EXPECT_NEAR(w(1, 0), -1, 1e-12);
  EXPECT_NEAR(w(2, 0), 3, 1e-12);
}

TEST(CumSum, TelescopingSingleEquality) {
  Matrix x(4, 1);
  x << 0, 0, 0, 6;
  Mask m(4, 1);
  m << false, true, true, false;
  const auto C = build_cumsum_constraints(TimeSeriesPanel(x, m));
  ASSERT_EQ(C.K().rows(), 1);
  EXPECT_EQ(C.K(), Matrix::Ones(1, 3));
  EXPECT_EQ(C.b()(0), 6.0);
  // All three differences touch a missing level, so none is pinned.
  EXPECT_EQ(C.observed_mask().count(), 3);
}

TEST(CumSum, FewerThanTwoObservedThrows) {
  Matrix x(3, 1);
  x << 1, 0, 0;
  Mask m(3, 1);
  m << false, true, true;
  EXPECT_THROW(build_cumsum_constraints(TimeSeriesPanel(x, m)), ConfigError);
}

TEST(CumSum, ReconstructionReproducesObservedLevels) {
  Gen g(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Index n = g.integer(10, 80);
    Vector x(n);
    x(0) = g.normal();
    for (Index t = 1; t < n; ++t) x(t) = x(t - 1) + g.normal();
    Mask m = g.random_mask(n, 1, 0.3);
    m(0, 0) = trial % 2 == 0;  // sometimes the anchor is not x_0
    m(n - 1, 0) = false;
    m(n / 2, 0) = false;
    const TimeSeriesPanel raw(Matrix(x), m);
    const auto C = build_cumsum_constraints(raw);
    const Matrix w = C.project(g.normal_matrix(n - 1, 1) * 3.0);
    ASSERT_TRUE(C.contains(w, 1e-9));
    const Vector level = integrate_differences(w.col(0), raw);
    for (Index t = 0; t < n; ++t)
      if (!m(t, 0)) { EXPECT_NEAR(level(t), x(t), 1e-9) << "t=" << t; }
  }
}

TEST(CumSum, DifferencePanelMaskRule) {
  Matrix x(4, 1);
  x << 1, 2, 4, 7;
  Mask m(4, 1);
  m << false, false, true, false;
  const auto dp = difference_panel(TimeSeriesPanel(x, m));
  EXPECT_FALSE(dp.missing(0, 0));
  EXPECT_EQ(dp.values()(0, 0), 1.0);
  EXPECT_TRUE(dp.missing(1, 0));
  EXPECT_TRUE(dp.missing(2, 0));
}
