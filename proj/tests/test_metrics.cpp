#include "oracles.hpp"

#include "cxr/metrics.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace cxr;

namespace {

const std::vector<ScoredSample> kFour{{0.9, 1}, {0.8, 0}, {0.7, 1}, {0.1, 0}};

}  // namespace

TEST(Confusion, DegenerateThresholds) {
  const auto c0 = confusion_at(kFour, 0.0);
  EXPECT_EQ(c0.fp, 2);
  EXPECT_EQ(c0.fn, 0);
  const auto top = confusion_at(kFour, std::nextafter(0.9, 1.0));
  EXPECT_EQ(top.tp, 0);
  EXPECT_EQ(top.fp, 0);
  EXPECT_THROW(confusion_at(kFour, 1.5), ContractError);
  EXPECT_THROW(confusion_at({}, 0.5), ContractError);
}

TEST(Confusion, MatchesCountingOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = oracle::random_scores(rng, 50, false);
    const double t = rng.uniform();
    EXPECT_EQ(confusion_at(s, t), oracle::tally(s, t));
  }
}

TEST(Ratios, PublishedFoldCounts) {
  const ConfusionCounts test0{121, 0, 381, 135};
  EXPECT_NEAR(*recall(test0), 121.0 / 256.0, 1e-15);
  EXPECT_NEAR(*recall(test0), 0.47, 0.005);
  EXPECT_DOUBLE_EQ(*precision(test0), 1.0);
  EXPECT_DOUBLE_EQ(*specificity(test0), 1.0);
  const ConfusionCounts test4{146, 0, 381, 115};
  EXPECT_NEAR(*recall(test4), 146.0 / 261.0, 1e-15);
  EXPECT_NEAR(*recall(test4), 0.56, 0.005);
}

TEST(Ratios, UndefinedWhenDenominatorIsZero) {
  EXPECT_FALSE(precision({0, 0, 5, 5}).has_value());
  EXPECT_FALSE(recall({0, 3, 5, 0}).has_value());
  EXPECT_FALSE(specificity({5, 0, 0, 5}).has_value());
}

TEST(Curves, FourSampleEnumeration) {
  const Curve roc = roc_curve(kFour);
  const std::vector<std::pair<double, double>> roc_pts{{0, 0}, {0, 0.5}, {0.5, 0.5}, {0.5, 1}, {1, 1}};
  ASSERT_EQ(roc.points.size(), roc_pts.size());
  for (std::size_t i = 0; i < roc_pts.size(); ++i) {
    EXPECT_DOUBLE_EQ(roc.points[i].x, roc_pts[i].first);
    EXPECT_DOUBLE_EQ(roc.points[i].y, roc_pts[i].second);
  }
  EXPECT_TRUE(std::isinf(roc.points[0].threshold));
  EXPECT_DOUBLE_EQ(auc(roc), 0.75);

  const Curve pr = pr_curve(kFour);
  const std::vector<std::pair<double, double>> pr_pts{{0, 1}, {0.5, 1}, {0.5, 0.5}, {1, 2.0 / 3}, {1, 0.5}};
  ASSERT_EQ(pr.points.size(), pr_pts.size());
  for (std::size_t i = 0; i < pr_pts.size(); ++i) {
    EXPECT_DOUBLE_EQ(pr.points[i].x, pr_pts[i].first);
    EXPECT_DOUBLE_EQ(pr.points[i].y, pr_pts[i].second);
  }
}

TEST(Curves, PerfectSeparation) {
  const std::vector<ScoredSample> s{{0.9, 1}, {0.8, 1}, {0.3, 0}, {0.2, 0}};
  const Curve roc = roc_curve(s);
  bool corner = false;
  for (const auto& p : roc.points) corner = corner || (p.x == 0.0 && p.y == 1.0);
  EXPECT_TRUE(corner);
  EXPECT_DOUBLE_EQ(auc(roc), 1.0);
  EXPECT_DOUBLE_EQ(auc(pr_curve(s)), 1.0);
}

TEST(Curves, DiagonalAndSingleClass) {
  Curve diag;
  diag.points = {{0, 0, 1}, {1, 1, 0}};
  EXPECT_DOUBLE_EQ(auc(diag), 0.5);
  EXPECT_THROW(roc_curve(std::vector<ScoredSample>{{0.5, 1}, {0.4, 1}}), std::invalid_argument);
}

TEST(Curves, IndependentLabelsHugDiagonal) {
  Rng rng(2);
  std::vector<ScoredSample> s;
  for (int i = 0; i < 10000; ++i) s.push_back({rng.uniform(), rng.bernoulli(0.5)});
  EXPECT_NEAR(auc(roc_curve(s)), 0.5, 0.05);
}

TEST(Curves, TrapezoidEqualsRankStatistic) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_scores(rng, 2 + static_cast<int>(rng.below(49)));
    EXPECT_NEAR(auc(roc_curve(s)), oracle::rank_auc(s), 1e-12);
  }
}

TEST(ScoresCsv, RoundTripAndErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "cxr_test_metrics";
  std::filesystem::create_directories(dir);
  write_scores_csv(kFour, dir / "s.csv");
  EXPECT_EQ(read_scores_csv(dir / "s.csv"), kFour);
  std::ofstream(dir / "bad.csv") << "score,label\n0.5,normal\nabc,1\n";
  EXPECT_THROW(read_scores_csv(dir / "bad.csv"), std::runtime_error);
  write_curve_csv(roc_curve(kFour), dir / "roc.csv");
  EXPECT_NE(curve_svg(roc_curve(kFour), "ROC").find("<svg"), std::string::npos);
}
