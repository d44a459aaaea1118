#include "cxr/report.hpp"

#include "cxr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

namespace cxr {

FoldReport fold_from_counts(int fold, double roc_auc, double pr_auc, double threshold,
                            const ConfusionCounts& counts) {
  FoldReport r;
  r.fold = fold;
  r.roc_auc = roc_auc;
  r.pr_auc = pr_auc;
  r.threshold = threshold;
  r.counts = counts;
  r.precision = precision(counts);
  r.recall = recall(counts);
  r.specificity = specificity(counts);
  return r;
}

FoldReport evaluate_fold(int fold, std::span<const ScoredSample> scores, ThresholdMethod method,
                         const DirectConfig& direct) {
  if (scores.empty()) throw ContractError("fold " + std::to_string(fold) + " has no scores");
  const double roc = auc(roc_curve(scores));
  const double pr = auc(pr_curve(scores));
  const ThresholdResult t = optimize_threshold(scores, method, direct);
  return fold_from_counts(fold, roc, pr, t.threshold, t.counts);
}

XvalReport xval_report(std::vector<FoldReport> folds) {
  if (folds.empty()) throw ContractError("xval_report: no folds");
  XvalReport rep;
  rep.folds = std::move(folds);

  using Column = std::function<double(const FoldReport&)>;
  const std::vector<std::pair<double SummaryRow::*, Column>> columns{
      {&SummaryRow::roc_auc, [](const FoldReport& f) { return f.roc_auc; }},
      {&SummaryRow::pr_auc, [](const FoldReport& f) { return f.pr_auc; }},
      {&SummaryRow::threshold, [](const FoldReport& f) { return f.threshold; }},
      {&SummaryRow::tp, [](const FoldReport& f) { return static_cast<double>(f.counts.tp); }},
      {&SummaryRow::fp, [](const FoldReport& f) { return static_cast<double>(f.counts.fp); }},
      {&SummaryRow::tn, [](const FoldReport& f) { return static_cast<double>(f.counts.tn); }},
      {&SummaryRow::fn, [](const FoldReport& f) { return static_cast<double>(f.counts.fn); }},
      {&SummaryRow::recall, [](const FoldReport& f) { return f.recall.value_or(std::nan("")); }},
      {&SummaryRow::specificity, [](const FoldReport& f) { return f.specificity.value_or(std::nan("")); }},
  };
  rep.min.name = "Min";
  rep.max.name = "Max";
  rep.average.name = "Average";
  rep.std.name = "Std";
  const double n = static_cast<double>(rep.folds.size());
  for (const auto& [member, get] : columns) {
    Eigen::ArrayXd v(rep.folds.size());
    for (std::size_t i = 0; i < rep.folds.size(); ++i) v[static_cast<Eigen::Index>(i)] = get(rep.folds[i]);
    const double mean = v.mean();
    rep.min.*member = v.minCoeff();
    rep.max.*member = v.maxCoeff();
    rep.average.*member = mean;
    rep.std.*member = rep.folds.size() > 1 ? std::sqrt((v - mean).square().sum() / (n - 1)) : 0.0;
  }
  return rep;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json summary_json(const SummaryRow& r) {
  return {{"roc_auc", r.roc_auc}, {"pr_auc", r.pr_auc}, {"threshold", r.threshold},
          {"tp", r.tp},           {"fp", r.fp},         {"tn", r.tn},
          {"fn", r.fn},           {"recall", r.recall}, {"specificity", r.specificity}};
}

std::string fmt2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string cell(const std::string& s, int width) { return s + std::string(std::max<int>(1, width - static_cast<int>(s.size())), ' '); }

}  // namespace

nlohmann::ordered_json to_json(const XvalReport& report) {
  nlohmann::ordered_json j;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : report.folds) {
    j["folds"].push_back({{"fold", f.fold},
                          {"roc_auc", f.roc_auc},
                          {"pr_auc", f.pr_auc},
                          {"threshold", f.threshold},
                          {"tp", f.counts.tp},
                          {"fp", f.counts.fp},
                          {"tn", f.counts.tn},
                          {"fn", f.counts.fn},
                          {"precision", optional_json(f.precision)},
                          {"recall", optional_json(f.recall)},
                          {"specificity", optional_json(f.specificity)}});
  }
  j["summary"] = {{"min", summary_json(report.min)},
                  {"max", summary_json(report.max)},
                  {"average", summary_json(report.average)},
                  {"std", summary_json(report.std)}};
  return j;
}

std::string format_table(const XvalReport& report) {
  constexpr int w = 12;
  std::string out;
  for (const char* h : {"Test", "ROC AUC", "PR AUC", "Threshold", "TP", "FP", "TN", "FN", "Recall", "Specificity"})
    out += cell(h, w);
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? fmt2(*v) : std::string("n/a"); };
  for (const auto& f : report.folds) {
    out += cell(std::to_string(f.fold), w) + cell(fmt2(f.roc_auc), w) + cell(fmt2(f.pr_auc), w) +
           cell(fmt2(f.threshold), w) + cell(std::to_string(f.counts.tp), w) + cell(std::to_string(f.counts.fp), w) +
           cell(std::to_string(f.counts.tn), w) + cell(std::to_string(f.counts.fn), w) + cell(opt(f.recall), w) +
           cell(opt(f.specificity), w);
    out += '\n';
  }
  out += std::string(10 * w, '-') + '\n';
  for (const SummaryRow* r : {&report.min, &report.max, &report.average, &report.std}) {
    // Min and Max of integer counts stay integers, as in the fold rows.
    const bool integral = r == &report.min || r == &report.max;
    auto count = [&](double v) { return integral ? std::to_string(std::lround(v)) : fmt2(v); };
    out += cell(r->name, w) + cell(fmt2(r->roc_auc), w) + cell(fmt2(r->pr_auc), w) + cell(fmt2(r->threshold), w) +
           cell(count(r->tp), w) + cell(count(r->fp), w) + cell(count(r->tn), w) + cell(count(r->fn), w) +
           cell(fmt2(r->recall), w) + cell(fmt2(r->specificity), w);
    out += '\n';
  }
  return out;
}

void write_report_json(const XvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << to_json(report).dump(2) << '\n';
}

XvalReport read_report_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report '" + path.string() + "'");
  const auto j = nlohmann::json::parse(in);
  std::vector<FoldReport> folds;
  for (const auto& f : j.at("folds")) {
    ConfusionCounts c{f.at("tp").get<long>(), f.at("fp").get<long>(), f.at("tn").get<long>(), f.at("fn").get<long>()};
    folds.push_back(fold_from_counts(f.at("fold").get<int>(), f.at("roc_auc").get<double>(),
                                     f.at("pr_auc").get<double>(), f.at("threshold").get<double>(), c));
  }
  return xval_report(std::move(folds));
}

}  // namespace cxr
