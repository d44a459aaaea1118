#pragma once

#include "cxr/metrics.hpp"
#include "cxr/threshold.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace cxr {

/// One row of the cross-validation table.
struct FoldReport {
  int fold = 0;
  double roc_auc = 0.0;
  double pr_auc = 0.0;
  double threshold = 0.0;
  ConfusionCounts counts;
  std::optional<double> precision, recall, specificity;
};

/// Summary statistics over folds for one column set. Std is the sample
/// standard deviation (n - 1 denominator); it is 0 for a single fold.
struct SummaryRow {
  std::string name;
  double roc_auc = 0, pr_auc = 0, threshold = 0;
  double tp = 0, fp = 0, tn = 0, fn = 0;
  double recall = 0, specificity = 0;
};

struct XvalReport {
  std::vector<FoldReport> folds;
  SummaryRow min, max, average, std;
};

/// Curves, AUCs and the precision-optimal operating point for one fold's scores.
FoldReport evaluate_fold(int fold, std::span<const ScoredSample> scores, ThresholdMethod method,
                         const DirectConfig& direct = {});

/// Fills in recall/specificity/precision from the counts.
FoldReport fold_from_counts(int fold, double roc_auc, double pr_auc, double threshold,
                            const ConfusionCounts& counts);

XvalReport xval_report(std::vector<FoldReport> folds);

nlohmann::ordered_json to_json(const XvalReport& report);
/// Plain-text table, columns: Test, ROC AUC, PR AUC, Threshold, TP, FP, TN, FN, Recall, Specificity.
std::string format_table(const XvalReport& report);

void write_report_json(const XvalReport& report, const std::filesystem::path& path);
XvalReport read_report_json(const std::filesystem::path& path);

}  // namespace cxr
