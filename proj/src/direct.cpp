#include "cxr/direct.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace cxr {

namespace {

struct HyperRect {
  Eigen::VectorXd center;  // unit-cube coordinates
  Eigen::VectorXi level;   // side length along dim i is 3^-level[i]
  double value = 0.0;
};

double side(int level) { return std::pow(3.0, -level); }

class Search {
 public:
  Search(const Objective& f, const DirectConfig& cfg) : f_(f), cfg_(cfg), dim_(static_cast<int>(cfg.bounds.size())) {
    lo_.resize(dim_);
    width_.resize(dim_);
    for (int i = 0; i < dim_; ++i) {
      lo_[i] = cfg.bounds[i].first;
      width_[i] = cfg.bounds[i].second - cfg.bounds[i].first;
    }
  }

  DirectResult run() {
    HyperRect root{Eigen::VectorXd::Constant(dim_, 0.5), Eigen::VectorXi::Zero(dim_), 0.0};
    root.value = evaluate(root.center);
    rects_.push_back(root);
    best_ = 0;

    while (evals() < cfg_.max_evals) {
      if (side(rects_[best_].level.minCoeff()) < cfg_.size_tol) break;
      const auto selected = potentially_optimal();
      bool divided = false;
      for (std::size_t idx : selected) {
        if (evals() + division_cost(idx) > cfg_.max_evals) continue;
        divide(idx);
        divided = true;
      }
      ++result_.iterations;
      result_.incumbent_history.push_back(rects_[best_].value);
      if (!divided) break;
    }

    result_.best_point = to_box(rects_[best_].center);
    result_.best_value = rects_[best_].value;
    return std::move(result_);
  }

 private:
  int evals() const { return static_cast<int>(result_.trace.size()); }

  // Two samples per longest side.
  int division_cost(std::size_t idx) const {
    const auto& level = rects_[idx].level;
    return 2 * static_cast<int>((level.array() == level.minCoeff()).count());
  }

  Eigen::VectorXd to_box(const Eigen::VectorXd& u) const {
    Eigen::VectorXd x = lo_ + width_.cwiseProduct(u);
    // Guard against rounding past the upper bound.
    for (int i = 0; i < dim_; ++i) x[i] = std::clamp(x[i], cfg_.bounds[i].first, cfg_.bounds[i].second);
    return x;
  }

  double evaluate(const Eigen::VectorXd& u) {
    const Eigen::VectorXd x = to_box(u);
    const double v = f_(x);
    if (std::isnan(v)) {
      std::ostringstream msg;
      msg << "DIRECT objective returned NaN at (";
      for (int i = 0; i < dim_; ++i) msg << (i ? ", " : "") << x[i];
      msg << ")";
      throw DirectNanError(msg.str(), x);
    }
    result_.trace.push_back({x, v});
    return v;
  }

  double size_of(const HyperRect& r) const {
    if (cfg_.locally_biased) return side(r.level.minCoeff());
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += side(r.level[i]) * side(r.level[i]);
    return 0.5 * std::sqrt(s);
  }

  // Size class key: exact for the longest-side measure; the sorted level
  // multiset for the half-diagonal measure.
  std::vector<int> size_key(const HyperRect& r) const {
    if (cfg_.locally_biased) return {r.level.minCoeff()};
    std::vector<int> k(r.level.data(), r.level.data() + dim_);
    std::sort(k.begin(), k.end());
    return k;
  }

  std::vector<std::size_t> potentially_optimal() const {
    struct Group {
      double size;
      double fmin;
      std::vector<std::size_t> members;  // rectangles attaining fmin
    };
    std::map<std::vector<int>, Group> by_key;
    for (std::size_t i = 0; i < rects_.size(); ++i) {
      const auto& r = rects_[i];
      auto [it, inserted] = by_key.try_emplace(size_key(r), Group{size_of(r), r.value, {i}});
      if (inserted) continue;
      Group& g = it->second;
      if (r.value < g.fmin) {
        g.fmin = r.value;
        g.members = {i};
      } else if (r.value == g.fmin) {
        g.members.push_back(i);
      }
    }
    std::vector<Group> groups;
    for (auto& [key, g] : by_key) groups.push_back(std::move(g));
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.size < b.size; });

    const double fmin = rects_[best_].value;
    const double threshold = fmin - cfg_.eps_balance * std::abs(fmin);
    std::vector<std::size_t> chosen;
    for (std::size_t j = 0; j < groups.size(); ++j) {
      const Group& g = groups[j];
      double k_low = -std::numeric_limits<double>::infinity();
      double k_high = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < groups.size(); ++i) {
        if (i == j) continue;
        if (groups[i].size == g.size) {
          if (groups[i].fmin < g.fmin) k_low = std::numeric_limits<double>::infinity();
          continue;
        }
        const double slope = (g.fmin - groups[i].fmin) / (g.size - groups[i].size);
        if (groups[i].size < g.size) k_low = std::max(k_low, slope);
        else k_high = std::min(k_high, slope);
      }
      if (k_low > k_high || k_high <= 0.0) continue;
      if (std::isfinite(k_high) && g.fmin - k_high * g.size > threshold) continue;
      if (cfg_.locally_biased) chosen.push_back(g.members.front());
      else chosen.insert(chosen.end(), g.members.begin(), g.members.end());
    }
    // Largest rectangles first keeps the order deterministic and global-first.
    std::reverse(chosen.begin(), chosen.end());
    return chosen;
  }

  void divide(std::size_t idx) {
    const HyperRect parent = rects_[idx];
    const int max_level = parent.level.minCoeff();
    const double delta = side(max_level) / 3.0;

    struct Probe {
      int dim;
      double w;
      HyperRect lower, upper;
    };
    std::vector<Probe> probes;
    for (int i = 0; i < dim_; ++i) {
      if (parent.level[i] != max_level) continue;
      Probe p{i, 0.0, parent, parent};
      p.lower.center[i] -= delta;
      p.upper.center[i] += delta;
      p.lower.value = evaluate(p.lower.center);
      p.upper.value = evaluate(p.upper.center);
      p.w = std::min(p.lower.value, p.upper.value);
      probes.push_back(std::move(p));
    }
    std::stable_sort(probes.begin(), probes.end(), [](const Probe& a, const Probe& b) { return a.w < b.w; });

    HyperRect center = parent;
    for (std::size_t k = 0; k < probes.size(); ++k) {
      const int d = probes[k].dim;
      center.level[d] += 1;
      // Children split along this and every earlier (better) dimension.
      for (HyperRect* child : {&probes[k].lower, &probes[k].upper}) {
        for (std::size_t m = 0; m <= k; ++m) child->level[probes[m].dim] += 1;
        rects_.push_back(*child);
        if (child->value < rects_[best_].value) best_ = rects_.size() - 1;
      }
    }
    rects_[idx] = center;
  }

  const Objective& f_;
  const DirectConfig& cfg_;
  int dim_;
  Eigen::VectorXd lo_, width_;
  std::vector<HyperRect> rects_;
  std::size_t best_ = 0;
  DirectResult result_;
};

}  // namespace

void DirectConfig::validate() const {
  if (bounds.empty()) throw std::invalid_argument("DIRECT: no bounds given");
  for (const auto& [lo, hi] : bounds)
    if (!(lo < hi)) throw std::invalid_argument("DIRECT: each bound needs lo < hi");
  if (max_evals < 1) throw std::invalid_argument("DIRECT: max_evals must be >= 1");
  if (!(eps_balance >= 0)) throw std::invalid_argument("DIRECT: eps_balance must be >= 0");
  if (!(size_tol >= 0)) throw std::invalid_argument("DIRECT: size_tol must be >= 0");
}

DirectResult direct_minimize(const Objective& f, const DirectConfig& cfg) {
  cfg.validate();
  return Search(f, cfg).run();
}

void write_direct_trace(const DirectResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  const auto dim = result.trace.empty() ? 0 : result.trace.front().point.size();
  out << "eval_index";
  for (Eigen::Index i = 0; i < dim; ++i) out << ",x" << i;
  out << ",value\n";
  char buf[64];
  for (std::size_t e = 0; e < result.trace.size(); ++e) {
    out << e;
    for (Eigen::Index i = 0; i < dim; ++i) {
      std::snprintf(buf, sizeof buf, ",%.17g", result.trace[e].point[i]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g\n", result.trace[e].value);
    out << buf;
  }
}

}  // namespace cxr
