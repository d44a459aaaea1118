#include "oracles.hpp"

#include "cxr/report.hpp"
#include "cxr/threshold.hpp"

#include <gtest/gtest.h>

#include <cstdio>

using namespace cxr;

namespace {

// The published five-fold table: (roc_auc, pr_auc, threshold, tp, fp, tn, fn).
struct PublishedRow {
  double roc, pr, threshold;
  long tp, fp, tn, fn;
  double recall_printed;
};
const std::array<PublishedRow, 5> kTable{{
    {0.92, 0.91, 0.99, 121, 0, 381, 135, 0.47},
    {0.89, 0.88, 0.99, 122, 0, 390, 146, 0.46},
    {0.93, 0.91, 0.98, 138, 0, 378, 117, 0.54},
    {0.88, 0.88, 0.99, 119, 0, 387, 141, 0.46},
    {0.90, 0.90, 0.81, 146, 0, 381, 115, 0.56},
}};

XvalReport published_report() {
  std::vector<FoldReport> folds;
  for (std::size_t i = 0; i < kTable.size(); ++i) {
    const auto& r = kTable[i];
    folds.push_back(fold_from_counts(static_cast<int>(i), r.roc, r.pr, r.threshold, {r.tp, r.fp, r.tn, r.fn}));
  }
  return xval_report(std::move(folds));
}

std::string two_places(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

bool zero_fp_point_exists(const std::vector<ScoredSample>& s) {
  double max_abnormal = -1, max_normal = -1;
  for (const auto& x : s) {
    double& m = x.label ? max_normal : max_abnormal;
    m = std::max(m, x.score);
  }
  return max_normal > max_abnormal;
}

}  // namespace

TEST(Threshold, SeparablePairPicksMidpoint) {
  const std::vector<ScoredSample> s{{0.2, 0}, {0.9, 1}};
  const auto r = optimize_threshold(s, ThresholdMethod::kSweep);
  EXPECT_DOUBLE_EQ(r.threshold, 0.55);
  EXPECT_DOUBLE_EQ(*r.precision, 1.0);
  EXPECT_DOUBLE_EQ(*r.recall, 1.0);
  const auto d = optimize_threshold(s, ThresholdMethod::kDirect);
  EXPECT_GT(d.threshold, 0.2);
  EXPECT_LE(d.threshold, 0.9);
  EXPECT_EQ(d.counts, r.counts);
}

TEST(Threshold, SingleClassIsRejected) {
  const std::vector<ScoredSample> s{{0.2, 1}, {0.9, 1}};
  try {
    optimize_threshold(s, ThresholdMethod::kSweep);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("both classes required"), std::string::npos);
  }
}

TEST(Threshold, DirectAgreesWithSweep) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_scores(rng, 2 + static_cast<int>(rng.below(59)));
    const auto sweep = optimize_threshold(s, ThresholdMethod::kSweep);
    const auto direct = optimize_threshold(s, ThresholdMethod::kDirect);
    ASSERT_EQ(direct.counts, sweep.counts) << "trial " << trial;
    ASSERT_EQ(direct.precision, sweep.precision);
    ASSERT_EQ(direct.recall, sweep.recall);
    EXPECT_EQ(direct.counts, oracle::tally(s, direct.threshold));
  }
}

TEST(Threshold, ZeroFalsePositivesWheneverPossible) {
  Rng rng(2);
  int exercised = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = oracle::random_scores(rng, 5 + static_cast<int>(rng.below(40)));
    if (!zero_fp_point_exists(s)) continue;
    ++exercised;
    for (auto m : {ThresholdMethod::kSweep, ThresholdMethod::kDirect}) {
      const auto r = optimize_threshold(s, m);
      EXPECT_EQ(r.counts.fp, 0);
      EXPECT_GT(r.counts.tp, 0);
    }
  }
  EXPECT_GT(exercised, 50);
}

TEST(Threshold, ObjectiveRanksPrecisionFirst) {
  const std::vector<ScoredSample> s{{0.95, 1}, {0.9, 0}, {0.8, 1}, {0.7, 1}, {0.1, 0}};
  // t=0.93: precision 1, recall 1/3. t=0.5: precision 3/4, recall 1.
  EXPECT_GT(threshold_objective(s, 0.93), threshold_objective(s, 0.5));
  EXPECT_EQ(threshold_objective(s, 1.0), 0.0);
}

TEST(Report, PublishedTableArithmetic) {
  const XvalReport rep = published_report();
  for (std::size_t i = 0; i < kTable.size(); ++i) {
    EXPECT_NEAR(*rep.folds[i].recall, kTable[i].recall_printed, 0.005) << "fold " << i;
    EXPECT_EQ(two_places(*rep.folds[i].specificity), "1.00");
  }
  EXPECT_EQ(two_places(rep.average.tp), "129.20");
  EXPECT_EQ(two_places(rep.average.tn), "383.40");
  EXPECT_EQ(two_places(rep.average.fn), "130.80");
  EXPECT_EQ(two_places(rep.average.recall), "0.50");
  EXPECT_EQ(two_places(rep.average.roc_auc), "0.90");
  EXPECT_EQ(two_places(rep.average.threshold), "0.95");
  EXPECT_EQ(two_places(rep.std.tp), "12.07");
  EXPECT_EQ(two_places(rep.std.tn), "4.93");
  EXPECT_EQ(two_places(rep.std.fn), "14.08");
  EXPECT_EQ(two_places(rep.std.recall), "0.05");
  EXPECT_EQ(two_places(rep.std.threshold), "0.08");
  EXPECT_EQ(two_places(rep.std.roc_auc), "0.02");
  EXPECT_EQ(rep.min.tp, 119);
  EXPECT_EQ(rep.max.fn, 146);
  EXPECT_EQ(two_places(rep.min.recall), "0.46");
  EXPECT_EQ(two_places(rep.max.recall), "0.56");

  const std::string table = format_table(rep);
  EXPECT_NE(table.find("129.20"), std::string::npos);
  EXPECT_NE(table.find("Specificity"), std::string::npos);
}

TEST(Report, PrintedRecallsAverageToHalf) {
  double sum = 0;
  for (const auto& r : kTable) sum += r.recall_printed;
  EXPECT_EQ(two_places(sum / 5), "0.50");
  long tp = 0;
  for (const auto& r : kTable) tp += r.tp;
  EXPECT_DOUBLE_EQ(tp / 5.0, 129.2);
}

TEST(Report, SingleFoldDegenerates) {
  const XvalReport rep = xval_report({fold_from_counts(0, 0.8, 0.7, 0.6, {3, 0, 4, 2})});
  EXPECT_EQ(rep.min.tp, rep.max.tp);
  EXPECT_EQ(rep.min.recall, rep.average.recall);
  EXPECT_EQ(rep.std.tp, 0.0);
  EXPECT_EQ(rep.std.recall, 0.0);
}

TEST(Report, JsonSchemaAndRoundTrip) {
  const XvalReport rep = published_report();
  const auto j = to_json(rep);
  ASSERT_TRUE(j.contains("folds") && j.contains("summary"));
  ASSERT_EQ(j["folds"].size(), 5u);
  for (const auto& f : j["folds"])
    for (const char* key : {"fold", "roc_auc", "pr_auc", "threshold", "tp", "fp", "tn", "fn", "precision", "recall",
                            "specificity"})
      EXPECT_TRUE(f.contains(key)) << key;
  for (const char* row : {"min", "max", "average", "std"})
    for (const char* key : {"roc_auc", "pr_auc", "threshold", "tp", "fp", "tn", "fn", "recall", "specificity"})
      EXPECT_TRUE(j["summary"][row].contains(key)) << row << "." << key;

  const auto path = std::filesystem::temp_directory_path() / "cxr_report.json";
  write_report_json(rep, path);
  EXPECT_EQ(to_json(read_report_json(path)).dump(), j.dump());
}
