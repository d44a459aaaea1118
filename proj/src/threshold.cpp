#include "cxr/threshold.hpp"

#include "cxr/tensor.hpp"

#include <algorithm>
#include <stdexcept>

namespace cxr {

std::string to_string(ThresholdMethod m) { return m == ThresholdMethod::kSweep ? "sweep" : "direct"; }

ThresholdMethod threshold_method_from_string(const std::string& s) {
  if (s == "sweep") return ThresholdMethod::kSweep;
  if (s == "direct") return ThresholdMethod::kDirect;
  throw std::invalid_argument("unknown threshold method '" + s + "' (expected sweep or direct)");
}

double threshold_objective(std::span<const ScoredSample> scores, double t) {
  const ConfusionCounts c = confusion_at(scores, t);
  const double n = static_cast<double>(scores.size());
  const double lambda = 1.0 / (2.0 * n * n);
  return precision(c).value_or(0.0) + lambda * recall(c).value_or(0.0);
}

namespace {

std::vector<double> distinct_scores(std::span<const ScoredSample> scores) {
  long pos = 0, neg = 0;
  std::vector<double> s;
  for (const auto& x : scores) {
    (x.label == 1 ? pos : neg)++;
    s.push_back(x.score);
  }
  if (pos == 0 || neg == 0) throw ContractError("optimize_threshold: both classes required");
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

ThresholdResult finish(std::span<const ScoredSample> scores, double t, int evaluations) {
  ThresholdResult r;
  r.threshold = t;
  r.counts = confusion_at(scores, t);
  r.precision = precision(r.counts);
  r.recall = recall(r.counts);
  r.specificity = specificity(r.counts);
  r.objective = threshold_objective(scores, t);
  r.evaluations = evaluations;
  return r;
}

}  // namespace

ThresholdResult optimize_threshold(std::span<const ScoredSample> scores, ThresholdMethod method,
                                   const DirectConfig& direct) {
  const std::vector<double> s = distinct_scores(scores);

  if (method == ThresholdMethod::kSweep) {
    std::vector<double> candidates{0.0};
    for (std::size_t i = 0; i + 1 < s.size(); ++i) candidates.push_back(0.5 * (s[i] + s[i + 1]));
    candidates.push_back(1.0);
    double best_t = candidates.front();
    double best_j = -1.0;
    for (double t : candidates) {
      const double j = threshold_objective(scores, t);
      if (j > best_j) {
        best_j = j;
        best_t = t;
      }
    }
    return finish(scores, best_t, static_cast<int>(candidates.size()));
  }

  // Knots (u_i, t_i): (0,0), (i/(m+1), s_i) for i = 1..m, (1,1).
  const std::size_t m = s.size();
  std::vector<double> knot_t{0.0};
  knot_t.insert(knot_t.end(), s.begin(), s.end());
  knot_t.push_back(1.0);
  auto phi = [&](double u) {
    const double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(m + 1);
    const auto seg = std::min(static_cast<std::size_t>(pos), m);
    const double frac = pos - static_cast<double>(seg);
    if (frac <= 0.0) return knot_t[seg];
    return std::clamp(knot_t[seg] + frac * (knot_t[seg + 1] - knot_t[seg]), 0.0, 1.0);
  };

  DirectConfig cfg = direct;
  cfg.bounds = {{0.0, 1.0}};
  const auto result =
      direct_minimize([&](const Eigen::VectorXd& u) { return -threshold_objective(scores, phi(u[0])); }, cfg);
  return finish(scores, phi(result.best_point[0]), static_cast<int>(result.trace.size()));
}

}  // namespace cxr
