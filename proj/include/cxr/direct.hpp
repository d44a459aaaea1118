#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace cxr {

/// Box-constrained DIRECT (DIviding RECTangles) global minimizer.
///
/// The box is normalized to the unit hypercube. Each iteration selects the
/// potentially-optimal rectangles, i.e. those on the lower-right convex hull
/// of (size, value) that also promise an improvement of at least
/// eps_balance * |f_min| for some Lipschitz constant, and trisects each one
/// along all of its longest sides. Dimensions are split in order of the best
/// value sampled along them, so the best new point lands in the largest child.
///
/// With `locally_biased` (the default) rectangle size is the longest side and
/// only one rectangle per size class is selected; otherwise size is the
/// half-diagonal and every rectangle tied at a class minimum is selected.
///
/// Evaluations never exceed max_evals: a selected rectangle is divided only if
/// all of its new samples fit in the remaining budget.
struct DirectConfig {
  int max_evals = 200;
  double eps_balance = 1e-4;
  double size_tol = 1e-6;
  bool locally_biased = true;
  std::vector<std::pair<double, double>> bounds;

  void validate() const;
};

struct DirectEval {
  Eigen::VectorXd point;
  double value = 0.0;
};

struct DirectResult {
  Eigen::VectorXd best_point;
  double best_value = 0.0;
  int iterations = 0;
  std::vector<DirectEval> trace;
  /// Incumbent value after each iteration (non-increasing).
  std::vector<double> incumbent_history;
};

class DirectNanError : public std::runtime_error {
 public:
  DirectNanError(const std::string& what, Eigen::VectorXd point)
      : std::runtime_error(what), point_(std::move(point)) {}
  const Eigen::VectorXd& point() const { return point_; }

 private:
  Eigen::VectorXd point_;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

DirectResult direct_minimize(const Objective& f, const DirectConfig& cfg);

/// CSV: eval_index,x0,x1,...,value
void write_direct_trace(const DirectResult& result, const std::filesystem::path& path);

}  // namespace cxr
