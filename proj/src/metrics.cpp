#include "cxr/metrics.hpp"

#include "cxr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace cxr {

namespace {

void require_label(int label) {
  if (label != 0 && label != 1) throw ContractError("scored sample label must be 0 or 1, got " + std::to_string(label));
}

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

struct Sweep {
  long positives = 0, negatives = 0;
  // Cumulative (tp, fp) after admitting each distinct score, highest first.
  std::vector<double> thresholds;
  std::vector<long> tp, fp;
};

Sweep sweep(std::span<const ScoredSample> scores) {
  Sweep s;
  std::vector<ScoredSample> sorted(scores.begin(), scores.end());
  for (const auto& x : sorted) {
    require_label(x.label);
    if (!std::isfinite(x.score)) throw ContractError("non-finite score");
    (x.label == 1 ? s.positives : s.negatives)++;
  }
  if (s.positives == 0 || s.negatives == 0)
    throw ContractError("curve requires both classes (got " + std::to_string(s.positives) + " positive, " +
                        std::to_string(s.negatives) + " negative)");
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  long tp = 0, fp = 0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double t = sorted[i].score;
    for (; i < sorted.size() && sorted[i].score == t; ++i) (sorted[i].label == 1 ? tp : fp)++;
    s.thresholds.push_back(t);
    s.tp.push_back(tp);
    s.fp.push_back(fp);
  }
  return s;
}

}  // namespace

ConfusionCounts confusion_at(std::span<const ScoredSample> scores, double threshold) {
  if (scores.empty()) throw ContractError("confusion_at: empty score list");
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ContractError("confusion_at: threshold " + std::to_string(threshold) + " outside [0,1]");
  ConfusionCounts c;
  for (const auto& s : scores) {
    require_label(s.label);
    const bool predicted_normal = s.score >= threshold;
    if (s.label == 1) (predicted_normal ? c.tp : c.fn)++;
    else (predicted_normal ? c.fp : c.tn)++;
  }
  return c;
}

std::optional<double> recall(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fn); }
std::optional<double> precision(const ConfusionCounts& c) { return ratio(c.tp, c.tp + c.fp); }
std::optional<double> specificity(const ConfusionCounts& c) { return ratio(c.tn, c.tn + c.fp); }

Curve roc_curve(std::span<const ScoredSample> scores) {
  const Sweep s = sweep(scores);
  Curve c{CurveKind::kRoc, {}};
  c.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < s.thresholds.size(); ++i)
    c.points.push_back({static_cast<double>(s.fp[i]) / s.negatives, static_cast<double>(s.tp[i]) / s.positives,
                        s.thresholds[i]});
  return c;
}

Curve pr_curve(std::span<const ScoredSample> scores) {
  const Sweep s = sweep(scores);
  Curve c{CurveKind::kPr, {}};
  c.points.push_back({0.0, 1.0, std::numeric_limits<double>::infinity()});
  for (std::size_t i = 0; i < s.thresholds.size(); ++i)
    c.points.push_back({static_cast<double>(s.tp[i]) / s.positives,
                        static_cast<double>(s.tp[i]) / static_cast<double>(s.tp[i] + s.fp[i]), s.thresholds[i]});
  return c;
}

double auc(const Curve& curve) {
  if (curve.points.size() < 2) throw ContractError("auc: curve needs at least 2 points");
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    if (b.x < a.x) throw ContractError("auc: curve x values are not sorted at point " + std::to_string(i));
    area += (b.x - a.x) * (a.y + b.y) / 2.0;
  }
  return std::clamp(area, 0.0, 1.0);
}

void write_curve_csv(const Curve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "threshold,x,y\n";
  char buf[96];
  for (const auto& p : curve.points) {
    if (std::isinf(p.threshold)) std::snprintf(buf, sizeof buf, "inf,%.10g,%.10g\n", p.x, p.y);
    else std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g\n", p.threshold, p.x, p.y);
    out << buf;
  }
}

std::string curve_svg(const Curve& curve, const std::string& title) {
  const double size = 320, margin = 48;
  auto px = [&](double x) { return margin + x * size; };
  auto py = [&](double y) { return margin + (1 - y) * size; };
  const bool roc = curve.kind == CurveKind::kRoc;
  std::ostringstream svg;
  svg.setf(std::ios::fixed);
  svg.precision(2);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin << "\" height=\""
      << size + 2 * margin << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << size << "\" height=\"" << size
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    svg << "<text x=\"" << px(v) << "\" y=\"" << py(0) + 16 << "\" text-anchor=\"middle\">" << v << "</text>\n";
    svg << "<text x=\"" << px(0) - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\">" << v << "</text>\n";
  }
  if (roc)
    svg << "<line x1=\"" << px(0) << "\" y1=\"" << py(0) << "\" x2=\"" << px(1) << "\" y2=\"" << py(1)
        << "\" stroke=\"#bbb\" stroke-dasharray=\"4 4\"/>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"";
  for (const auto& p : curve.points) svg << px(p.x) << ',' << py(p.y) << ' ';
  svg << "\"/>\n";
  svg << "<text x=\"" << px(0.5) << "\" y=\"" << margin - 18 << "\" text-anchor=\"middle\">" << title
      << " (AUC = " << auc(curve) << ")</text>\n";
  svg << "<text x=\"" << px(0.5) << "\" y=\"" << py(0) + 34 << "\" text-anchor=\"middle\">"
      << (roc ? "1 - specificity" : "recall") << "</text>\n";
  svg << "<text transform=\"translate(14," << py(0.5) << ") rotate(-90)\" text-anchor=\"middle\">"
      << (roc ? "recall" : "precision") << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_curve_svg(const Curve& curve, const std::string& title, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << curve_svg(curve, title);
}

std::vector<ScoredSample> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scores file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("malformed scores CSV: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "score,label") throw std::runtime_error("malformed scores CSV: header must be 'score,label'");
  std::vector<ScoredSample> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    const std::string where = "malformed scores CSV at line " + std::to_string(line_no);
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw std::runtime_error(where + ": expected 2 columns");
    ScoredSample s;
    try {
      std::size_t used = 0;
      const std::string score_text = line.substr(0, comma);
      s.score = std::stod(score_text, &used);
      if (used != score_text.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error(where + ": bad score");
    }
    if (!(s.score >= 0.0 && s.score <= 1.0)) throw std::runtime_error(where + ": score outside [0,1]");
    const std::string label = line.substr(comma + 1);
    if (label == "1" || label == "normal") s.label = 1;
    else if (label == "0" || label == "abnormal") s.label = 0;
    else throw std::runtime_error(where + ": bad label '" + label + "'");
    out.push_back(s);
  }
  return out;
}

void write_scores_csv(std::span<const ScoredSample> scores, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "score,label\n";
  char buf[64];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, "%.17g,%d\n", s.score, s.label);
    out << buf;
  }
}

}  // namespace cxr
