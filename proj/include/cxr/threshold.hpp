#pragma once

#include "cxr/direct.hpp"
#include "cxr/metrics.hpp"

#include <span>
#include <string>

namespace cxr {

enum class ThresholdMethod { kSweep, kDirect };

std::string to_string(ThresholdMethod m);
ThresholdMethod threshold_method_from_string(const std::string& s);

struct ThresholdResult {
  double threshold = 0.0;
  ConfusionCounts counts;
  std::optional<double> precision, recall, specificity;
  /// Objective value J at the threshold.
  double objective = 0.0;
  int evaluations = 0;
};

/// Operating-point objective J(t) = precision(t) + recall(t) / (2 N^2) with
/// undefined precision scored as 0. Distinct precisions over N samples differ
/// by at least 1/N^2, so J ranks thresholds by precision first and recall second.
double threshold_objective(std::span<const ScoredSample> scores, double t);

/// Maximizes J over t in [0,1].
///
/// kSweep evaluates J at 0, 1 and the midpoints between consecutive distinct
/// scores, which covers every plateau of the piecewise-constant J. kDirect
/// runs DIRECT on -J(phi(u)) over u in [0,1], where phi is the strictly
/// increasing piecewise-linear map sending u = i/(m+1) to the i-th of the m
/// distinct scores (and 0, 1 to the box ends), so every plateau of J is
/// an interval of width 1/(m+1) in u.
ThresholdResult optimize_threshold(std::span<const ScoredSample> scores, ThresholdMethod method,
                                   const DirectConfig& direct = {});

}  // namespace cxr
