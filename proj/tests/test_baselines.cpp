#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace twimpute;
using twtest::Gen;

namespace {

TimeSeriesPanel with_gaps(std::initializer_list<double> vals, std::initializer_list<int> gaps) {
  Vector x(static_cast<Index>(vals.size()));
  Index i = 0;
  for (double v : vals) x(i++) = v;
  Mask m = Mask::Constant(x.size(), 1, false);
  for (int g : gaps) m(g, 0) = true;
  return TimeSeriesPanel(Matrix(x), m);
}

}  // namespace

TEST(Baselines, LinearMidpoint) {
  const Matrix w = impute_baseline(with_gaps({1, 0, 3}, {1}), BaselineMethod::linear());
  EXPECT_EQ(w(1, 0), 2.0);
}

TEST(Baselines, LinearInteriorAndFlatEnds) {
  const Matrix w = impute_baseline(with_gaps({0, 1, 0, 0, 4, 0}, {0, 2, 3, 5}), BaselineMethod::linear());
  EXPECT_EQ(w(0, 0), 1.0);
  EXPECT_EQ(w(2, 0), 2.0);
  EXPECT_EQ(w(3, 0), 3.0);
  EXPECT_EQ(w(5, 0), 4.0);
}

TEST(Baselines, MeanFill) {
  const Matrix w = impute_baseline(with_gaps({2, 0, 4}, {1}), BaselineMethod::mean());
  EXPECT_EQ(w(1, 0), 3.0);
}

TEST(Baselines, LocfCarriesForwardAndBackfillsLeadingGap) {
  const Matrix w = impute_baseline(with_gaps({0, 5, 0, 0, 7}, {0, 2, 3}), BaselineMethod::locf());
  EXPECT_EQ(w(0, 0), 5.0);
  EXPECT_EQ(w(2, 0), 5.0);
  EXPECT_EQ(w(3, 0), 5.0);
}

TEST(Baselines, AllMissingColumnRejected) {
  EXPECT_THROW(impute_baseline(with_gaps({0, 0}, {0, 1}), BaselineMethod::mean()), ConfigError);
  EXPECT_THROW(impute_baseline(with_gaps({1, 0}, {1}), BaselineMethod::linear()), ConfigError);
}

TEST(Baselines, ObservedCellsUntouched) {
  Gen g(1);
  const Matrix x = g.normal_matrix(50, 2);
  const TimeSeriesPanel p(x, g.random_mask(50, 2, 0.3));
  for (auto m : {BaselineMethod::linear(), BaselineMethod::locf(), BaselineMethod::mean(),
                 BaselineMethod::scalar_filter()}) {
    const Matrix w = impute_baseline(p, m);
    EXPECT_TRUE(w.allFinite());
    for (Index c = 0; c < 2; ++c)
      for (Index t = 0; t < 50; ++t)
        if (!p.missing(t, c)) { EXPECT_EQ(w(t, c), x(t, c)); }
  }
}

TEST(ScalarFilter, SingleGapMatchesOlsIntervention) {
  Gen g(2);
  for (int trial = 0; trial < 10; ++trial) {
    const Index n = 200;
    Vector x(n);
    double v = 0.0;
    for (Index t = 0; t < n; ++t) x(t) = v = 0.8 * v + g.normal();
    const Index s = g.integer(5, n - 5);
    Mask m = Mask::Constant(n, 1, false);
    m(s, 0) = true;
    const TimeSeriesPanel panel(Matrix(x), m);
    ScalarFilterOptions opt;
    opt.ar_order = 1;
    opt.ridge = 0.0;
    const Matrix w = impute_baseline(panel, BaselineMethod::scalar_filter(opt));

    // Oracle: y_t = c + a y_{t-1} + beta 1{t=s} + e_t with y_s set to zero,
    // solved by Householder QR of the design matrix.
    Vector y = x;
    y(s) = 0.0;
    Matrix X = Matrix::Zero(n - 1, 3);
    Vector rhs(n - 1);
    for (Index t = 1; t < n; ++t) {
      X(t - 1, 0) = 1.0;
      X(t - 1, 1) = y(t - 1);
      X(t - 1, 2) = t == s ? 1.0 : 0.0;
      rhs(t - 1) = y(t);
    }
    const Vector theta = X.householderQr().solve(rhs);
    EXPECT_NEAR(w(s, 0), -theta(2), 1e-9);
  }
}

TEST(ScalarFilter, EarlyGapGetsFittedMean) {
  Gen g(3);
  const Index n = 300;
  Vector x(n);
  double v = 0.0;
  for (Index t = 0; t < n; ++t) x(t) = v = 2.0 + 0.5 * (v - 2.0) + 0.3 * g.normal();
  Mask m = Mask::Constant(n, 1, false);
  m(0, 0) = true;
  const Matrix w = impute_baseline(TimeSeriesPanel(Matrix(x), m), BaselineMethod::scalar_filter());
  EXPECT_NEAR(w(0, 0), 2.0, 0.2);
}

TEST(ScalarFilter, InvalidOptions) {
  ScalarFilterOptions opt;
  opt.ar_order = 0;
  EXPECT_THROW(impute_baseline(with_gaps({1, 0, 3, 4}, {1}), BaselineMethod::scalar_filter(opt)), ConfigError);
}
