#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cxr {

struct ScoredSample {
  double score = 0.0;  // probability of Normal, in [0,1]
  int label = 0;       // 1 Normal, 0 Abnormal

  bool operator==(const ScoredSample&) const = default;
};

struct ConfusionCounts {
  long tp = 0, fp = 0, tn = 0, fn = 0;

  long total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Predicts Normal iff score >= threshold.
ConfusionCounts confusion_at(std::span<const ScoredSample> scores, double threshold);

/// Ratios are empty when their denominator is zero.
std::optional<double> recall(const ConfusionCounts& c);
std::optional<double> precision(const ConfusionCounts& c);
std::optional<double> specificity(const ConfusionCounts& c);

enum class CurveKind { kRoc, kPr };

struct CurvePoint {
  double x = 0.0;
  double y = 0.0;
  double threshold = 0.0;
};

/// ROC: x = 1 - specificity, y = recall. PR: x = recall, y = precision.
/// Points run from the strictest threshold (+inf, nothing predicted Normal)
/// down through every distinct score; tied scores form a single point.
struct Curve {
  CurveKind kind = CurveKind::kRoc;
  std::vector<CurvePoint> points;
};

Curve roc_curve(std::span<const ScoredSample> scores);
/// The +inf starting point of the PR curve has recall 0 and precision 1.
Curve pr_curve(std::span<const ScoredSample> scores);

/// Trapezoidal area over x, clipped to [0,1]. Requires x non-decreasing.
double auc(const Curve& curve);

void write_curve_csv(const Curve& curve, const std::filesystem::path& path);
std::string curve_svg(const Curve& curve, const std::string& title);
void write_curve_svg(const Curve& curve, const std::string& title, const std::filesystem::path& path);

/// CSV with header `score,label`; label accepts 0/1 or normal/abnormal.
std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path);
void write_scores_csv(std::span<const ScoredSample> scores, const std::filesystem::path& path);

}  // namespace cxr
