// cxrscreen: synthetic data, splits, training, evaluation and cross-validation
// for the normal/abnormal chest radiograph screener.

#include "cxr/pipeline.hpp"
#include "cxr/weight_archive.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace cxr;

namespace {

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> direct;  // flag values that map to config keys
};

// Options that every experiment command shares. Explicit flags map onto
// config keys; --set accepts any key.
void add_config_flags(CLI::App* cmd, ConfigFlags& f) {
  cmd->add_option("-c,--config", f.file, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.sets, "override a config key (key=value), repeatable");
  for (const auto& [flag, key] : std::vector<std::pair<std::string, std::string>>{
           {"--profile", "profile"}, {"--manifest", "manifest"}, {"--seed", "seed"},
           {"--epochs", "epochs"}, {"--batch-size", "batch_size"}, {"--lr", "lr"},
           {"--stem", "stem"}, {"--features", "features_file"}, {"--threshold-method", "threshold_method"},
           {"--threshold-source", "threshold_source"}}) {
    cmd->add_option_function<std::string>(
        flag, [&f, key = key](const std::string& v) { f.direct[key] = v; }, "sets config key '" + key + "'");
  }
}

RunConfig build_config(const ConfigFlags& f) {
  std::map<std::string, std::string> overrides = f.direct;
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return load_run_config(f.file, overrides);
}

// Rows of the manifest used by train/eval: everything, or one side of a fold.
std::vector<std::size_t> select_rows(const std::vector<Sample>& samples, const std::string& folds_file, int fold,
                                     bool test_side) {
  if (folds_file.empty()) {
    std::vector<std::size_t> all(samples.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  for (const auto& f : read_folds(folds_file))
    if (f.fold == fold) return rows_for_patients(samples, test_side ? f.test_patients : f.train_patients);
  throw std::invalid_argument("fold " + std::to_string(fold) + " not found in '" + folds_file + "'");
}

void print_threshold(const ThresholdResult& t) {
  auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string("n/a"); };
  std::printf("threshold   %.6f\n", t.threshold);
  std::printf("TP %ld  FP %ld  TN %ld  FN %ld\n", t.counts.tp, t.counts.fp, t.counts.tn, t.counts.fn);
  std::printf("precision   %s\nrecall      %s\nspecificity %s\n", opt(t.precision).c_str(), opt(t.recall).c_str(),
              opt(t.specificity).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chest radiograph normal/abnormal screening"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic labelled dataset");
  SynthOptions so;
  std::string synth_out;
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--patients", so.n_patients, "number of patients")->check(CLI::PositiveNumber);
  synth->add_option("--max-images", so.max_images_per_patient, "images per patient, at most")
      ->check(CLI::PositiveNumber);
  synth->add_option("--size", so.size, "image side in pixels")->check(CLI::Range(16, 4096));
  synth->add_option("--seed", so.seed, "random seed");
  synth->add_option("--ext", so.extension, "image format")->check(CLI::IsMember({".png", ".pgm"}));

  // split
  auto* split = app.add_subcommand("split", "patient-grouped k-fold split");
  std::string split_manifest, split_out;
  int split_k = 5;
  std::uint64_t split_seed = 0;
  bool split_stratify = false;
  split->add_option("--manifest", split_manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
  split->add_option("-k,--k", split_k, "number of folds")->check(CLI::Range(2, 1000));
  split->add_option("--seed", split_seed, "random seed");
  split->add_flag("--stratify", split_stratify, "balance Normal/Abnormal patients across folds");
  split->add_option("-o,--out", split_out, "folds JSON")->required();

  // features
  auto* feats = app.add_subcommand("features", "export random-stem feature maps for a manifest");
  ConfigFlags feat_cfg;
  std::string feat_out;
  add_config_flags(feats, feat_cfg);
  feats->add_option("-o,--out", feat_out, "feature archive")->required();

  // train
  auto* train = app.add_subcommand("train", "train a model");
  ConfigFlags train_cfg;
  std::string train_out, train_folds;
  int train_fold = 0;
  add_config_flags(train, train_cfg);
  train->add_option("--folds", train_folds, "folds JSON; trains on the fold's training patients")
      ->check(CLI::ExistingFile);
  train->add_option("--fold", train_fold, "fold index");
  train->add_option("-o,--out", train_out, "output directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "score images and write ROC/PR curves");
  ConfigFlags eval_cfg;
  std::string eval_out, eval_folds, eval_weights;
  int eval_fold = 0;
  add_config_flags(eval, eval_cfg);
  eval->add_option("--weights", eval_weights, "weight archive")->required()->check(CLI::ExistingFile);
  eval->add_option("--folds", eval_folds, "folds JSON; scores the fold's test patients")->check(CLI::ExistingFile);
  eval->add_option("--fold", eval_fold, "fold index");
  eval->add_option("-o,--out", eval_out, "output directory")->required();

  // threshold
  auto* thresh = app.add_subcommand("threshold", "choose the operating threshold for a scores file");
  std::string thresh_scores, thresh_method = "sweep", thresh_out;
  DirectConfig thresh_direct;
  thresh->add_option("--scores", thresh_scores, "scores CSV")->required()->check(CLI::ExistingFile);
  thresh->add_option("--method", thresh_method, "sweep or direct")->check(CLI::IsMember({"sweep", "direct"}));
  thresh->add_option("--max-evals", thresh_direct.max_evals, "DIRECT evaluation budget")
      ->check(CLI::PositiveNumber);
  thresh->add_option("-o,--out", thresh_out, "write the result as JSON");

  // xval
  auto* xval = app.add_subcommand("xval", "full k-fold cross-validation");
  ConfigFlags xval_cfg;
  add_config_flags(xval, xval_cfg);
  xval->add_option_function<std::string>(
      "-o,--out", [&](const std::string& v) { xval_cfg.direct["output_dir"] = v; }, "output directory");
  xval->add_flag_function(
      "--parallel-folds", [&](std::int64_t) { xval_cfg.direct["parallel_folds"] = "true"; },
      "run folds on separate threads");

  // report
  auto* report = app.add_subcommand("report", "print the cross-validation table");
  std::string report_in, report_json, report_method = "sweep";
  std::vector<std::string> report_scores;
  report->add_option("--in", report_in, "report JSON")->check(CLI::ExistingFile);
  report->add_option("--scores", report_scores, "per-fold scores CSVs, in fold order")->check(CLI::ExistingFile);
  report->add_option("--method", report_method, "threshold method for --scores")
      ->check(CLI::IsMember({"sweep", "direct"}));
  report->add_option("--json", report_json, "also write the report as JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      std::cout << synth_dataset(so, synth_out).string() << '\n';
    } else if (*split) {
      const auto samples = load_manifest(split_manifest);
      const auto folds = grouped_kfold(samples, split_k, split_seed, split_stratify);
      write_folds(folds, split_out);
      for (const auto& f : folds)
        std::printf("fold %d: %zu train patients, %zu test patients\n", f.fold, f.train_patients.size(),
                    f.test_patients.size());
    } else if (*feats) {
      const RunConfig cfg = build_config(feat_cfg);
      export_stem_features(cfg, feat_out);
    } else if (*train) {
      RunConfig cfg = build_config(train_cfg);
      cfg.validate();
      const fs::path out = resolve_output_dir(train_out);
      fs::create_directories(out);
      const auto samples = load_manifest(cfg.manifest);
      const InputSet all = load_inputs(cfg, samples);
      cfg.model = model_config_for(cfg, all);
      const InputSet set = all.subset(select_rows(samples, train_folds, train_fold, false));
      Rng rng(init_seed(cfg.seed, train_fold));
      Model<float> model = build_model<float>(cfg.model, rng);
      TrainConfig tc = cfg.train;
      tc.seed = train_seed(cfg.seed, train_fold);
      try {
        const TrainResult r = set.train(model, tc);
        write_loss_csv(r.epoch_loss, out / "loss.csv");
        std::printf("trained %zu samples, %ld steps, final loss %.6f\n", set.size(), r.steps, r.epoch_loss.back());
      } catch (const DivergenceError& e) {
        write_loss_csv(e.partial_log(), out / "loss.csv");
        throw StageError("train", e.what());
      }
      save_weights(model, out / "weights.nsw");
      write_run_config(cfg, out / "config.txt");
    } else if (*eval) {
      RunConfig cfg = build_config(eval_cfg);
      cfg.validate();
      const fs::path out = resolve_output_dir(eval_out);
      fs::create_directories(out);
      const auto samples = load_manifest(cfg.manifest);
      const InputSet all = load_inputs(cfg, samples);
      cfg.model = model_config_for(cfg, all);
      const InputSet set = all.subset(select_rows(samples, eval_folds, eval_fold, true));
      Rng rng(0);
      Model<float> model = build_model<float>(cfg.model, rng);
      load_weights(model, eval_weights);
      const auto scores = set.score(model);
      write_score_artifacts(scores, out);
      std::printf("ROC AUC %.4f\nPR AUC  %.4f\n", auc(roc_curve(scores)), auc(pr_curve(scores)));
    } else if (*thresh) {
      const auto scores = read_scores_csv(thresh_scores);
      const auto t = optimize_threshold(scores, threshold_method_from_string(thresh_method), thresh_direct);
      print_threshold(t);
      if (!thresh_out.empty()) {
        XvalReport one;
        one.folds = {fold_from_counts(0, auc(roc_curve(scores)), auc(pr_curve(scores)), t.threshold, t.counts)};
        std::ofstream(thresh_out) << to_json(one)["folds"][0].dump(2) << '\n';
      }
    } else if (*xval) {
      const XvalReport rep = run_xval(build_config(xval_cfg));
      std::cout << format_table(rep);
    } else if (*report) {
      if (report_in.empty() == report_scores.empty())
        throw std::invalid_argument("report: give exactly one of --in or --scores");
      XvalReport rep;
      if (!report_in.empty()) {
        rep = read_report_json(report_in);
      } else {
        std::vector<FoldReport> folds;
        for (std::size_t i = 0; i < report_scores.size(); ++i) {
          const auto scores = read_scores_csv(report_scores[i]);
          folds.push_back(evaluate_fold(static_cast<int>(i), scores, threshold_method_from_string(report_method)));
        }
        rep = xval_report(std::move(folds));
      }
      std::cout << format_table(rep);
      if (!report_json.empty()) write_report_json(rep, report_json);
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
