#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace twimpute;
using twtest::Gen;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("twimpute_core_" + name)).string();
}

}  // namespace

TEST(Panel, MaskedCellsAreIgnoredByEquality) {
  Matrix a(2, 1), b(2, 1);
  a << 1.0, 5.0;
  b << 1.0, -7.0;
  Mask m(2, 1);
  m << false, true;
  EXPECT_EQ(TimeSeriesPanel(a, m), TimeSeriesPanel(b, m));
  EXPECT_EQ(TimeSeriesPanel(a, m).missing_count(), 1);
}

TEST(Panel, RejectsShapeMismatchAndEmpty) {
  EXPECT_THROW(TimeSeriesPanel(Matrix::Zero(3, 1), Mask::Constant(2, 1, false)), ConfigError);
  EXPECT_THROW(TimeSeriesPanel(Matrix(0, 1), Mask(0, 1)), ConfigError);
}

TEST(Config, CutoffBoundsFollowLagOrder) {
  TwiConfig cfg;
  cfg.p = 6;
  cfg.n1 = 5;
  EXPECT_THROW(cfg.validate(100), ConfigError);  // n1 must exceed p-1
  cfg.n1 = 6;
  EXPECT_NO_THROW(cfg.validate(100));
  cfg.n1 = 94;
  EXPECT_THROW(cfg.validate(100), ConfigError);  // n1 < n-p
  cfg.n1 = 93;
  EXPECT_NO_THROW(cfg.validate(100));
  cfg.lambda = -1.0;
  EXPECT_THROW(cfg.validate(100), ConfigError);
  EXPECT_EQ(TwiConfig::defaults_for(1000).n1, 400);
}

TEST(Csv, BlankCellIsMissing) {
  const auto p = parse_csv("1.0\n\n3.0");
  ASSERT_EQ(p.n(), 3);
  ASSERT_EQ(p.d(), 1);
  EXPECT_FALSE(p.missing(0, 0));
  EXPECT_TRUE(p.missing(1, 0));
  EXPECT_FALSE(p.missing(2, 0));
  EXPECT_EQ(p.values()(2, 0), 3.0);
}

TEST(Csv, NaTokenMarksOneCell) {
  const auto p = parse_csv("1,2\n3,NA");
  ASSERT_EQ(p.n(), 2);
  ASSERT_EQ(p.d(), 2);
  EXPECT_EQ(p.missing_count(), 1);
  EXPECT_TRUE(p.missing(1, 1));
}

TEST(Csv, RaggedRowReportsIndex) {
  try {
    parse_csv("1,2\n3\n4,5\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos);
  }
}

TEST(Csv, EmptyInputIsRejected) { EXPECT_THROW(parse_csv(""), ParseError); }

TEST(Csv, HeaderRowIsSkipped) {
  const auto p = parse_csv("a,b\n1,2\n", default_missing_tokens(), true);
  EXPECT_EQ(p.n(), 1);
  EXPECT_EQ(p.values()(0, 1), 2.0);
}

TEST(Csv, CustomMissingTokens) {
  const auto p = parse_csv("1\n-999\n2\n", {"-999"});
  EXPECT_TRUE(p.missing(1, 0));
}

TEST(Csv, MissingCountMatchesIndependentTextScan) {
  Gen g(11);
  std::string text;
  // Exactly 300 NaN cells at positions chosen by a shuffled index list.
  std::vector<int> idx(1000);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), g.rng);
  std::vector<bool> miss(1000, false);
  for (int k = 0; k < 300; ++k) miss[static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])] = true;
  for (int i = 0; i < 1000; ++i) {
    if (miss[static_cast<std::size_t>(i)]) {
      text += "NaN\n";
    } else {
      text += std::to_string(g.normal()) + "\n";
    }
  }
  const std::string path = temp_path("count.csv");
  write_text(path, text);
  const auto p = read_csv(path);
  std::size_t scanned = 0;
  for (std::size_t pos = text.find("NaN"); pos != std::string::npos; pos = text.find("NaN", pos + 1)) ++scanned;
  EXPECT_EQ(static_cast<std::size_t>(p.missing_count()), scanned);
  EXPECT_EQ(p.missing_count(), 300);
  std::remove(path.c_str());
}

TEST(Csv, SingleValueFormatting) {
  const std::string path = temp_path("one.csv");
  write_csv(TimeSeriesPanel(Matrix::Constant(1, 1, 0.5)), path);
  std::ifstream in(path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(s, "0.5\n");
  std::remove(path.c_str());
}

TEST(Csv, CompletePanelHasNoNaN) {
  Gen g(3);
  const auto text = format_csv(TimeSeriesPanel(g.normal_matrix(20, 3)));
  EXPECT_EQ(text.find("NaN"), std::string::npos);
}

TEST(Csv, RoundTripPropertyOnRandomPanels) {
  Gen g(2024);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = g.integer(1, 40);
    const Index d = g.integer(1, 4);
    Matrix v = g.normal_matrix(n, d);
    // Mix magnitudes so shortest round-trip formatting is exercised.
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < n; ++i) v(i, j) *= std::pow(10.0, static_cast<double>(g.integer(-12, 12)));
    const TimeSeriesPanel p(v, g.random_mask(n, d, 0.3));
    const std::string path = temp_path("rt.csv");
    write_csv(p, path);
    const auto q = read_csv(path);
    ASSERT_EQ(q.n(), n);
    ASSERT_EQ(q.d(), d);
    EXPECT_TRUE((q.mask() == p.mask()).all());
    for (Index j = 0; j < d; ++j)
      for (Index i = 0; i < n; ++i)
        if (!p.missing(i, j)) { EXPECT_EQ(q.values()(i, j), p.values()(i, j)); }
    std::remove(path.c_str());
  }
}

TEST(Result, SegmentsSplitTrace) {
  ImputationResult r;
  r.objective_trace = {5, 4, 4, 3, 2, 2};
  r.segment_offsets = {0, 2, 4};
  ASSERT_EQ(r.segment_count(), 3u);
  EXPECT_EQ(r.segment(1), (std::vector<double>{4, 3}));
  EXPECT_EQ(r.segment(2), (std::vector<double>{2, 2}));
}
