#include "cxr/pipeline.hpp"

#include "cxr/weight_archive.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <thread>

namespace cxr {

namespace fs = std::filesystem;

InputSet InputSet::images(std::vector<UnitImage> images, std::vector<int> labels) {
  if (images.size() != labels.size()) throw ContractError("input set: image and label counts differ");
  InputSet s;
  s.images_ = std::move(images);
  s.labels_ = std::move(labels);
  return s;
}

InputSet InputSet::features(TensorF features, std::vector<int> labels) {
  if (features.rank() != 4 || static_cast<std::size_t>(features.dim(0)) != labels.size())
    throw ContractError("input set: feature tensor " + shape_str(features.shape()) + " does not match " +
                        std::to_string(labels.size()) + " labels");
  InputSet s;
  s.is_features_ = true;
  s.features_ = std::move(features);
  s.labels_ = std::move(labels);
  return s;
}

InputSet InputSet::subset(const std::vector<std::size_t>& rows) const {
  std::vector<int> labels;
  for (auto r : rows) labels.push_back(labels_.at(r));
  if (!is_features_) {
    std::vector<UnitImage> imgs;
    for (auto r : rows) imgs.push_back(images_[r]);
    return images(std::move(imgs), std::move(labels));
  }
  Shape s = features_.shape();
  s[0] = static_cast<int>(rows.size());
  TensorF f(s);
  const std::size_t per = features_.numel() / labels_.size();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(features_.data() + rows[i] * per, per, f.data() + i * per);
  return features(std::move(f), std::move(labels));
}

TrainResult InputSet::train(Model<float>& model, const TrainConfig& cfg) const {
  if (is_features_) return train_on_features(model, features_, labels_, cfg);
  return train_model(model, BatchSource(images_, labels_), cfg);
}

std::vector<ScoredSample> InputSet::score(const Model<float>& model, int batch_size) const {
  if (!is_features_) return score_split(model, BatchSource(images_, labels_), batch_size);
  std::vector<ScoredSample> out;
  for (std::size_t start = 0; start < size(); start += batch_size) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(size(), start + batch_size); ++i) rows.push_back(i);
    const InputSet chunk = subset(rows);
    const auto p = predict(model, chunk.features_);
    for (std::size_t i = 0; i < rows.size(); ++i) out.push_back({p[i], labels_[rows[i]]});
  }
  return out;
}

InputSet load_inputs(const RunConfig& cfg, const std::vector<Sample>& samples) {
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  if (cfg.model.stem == StemKind::kPrecomputed) {
    TensorF f = import_features(cfg.features_file, cfg.model.stem_out_channels);
    if (static_cast<std::size_t>(f.dim(0)) != samples.size())
      throw ContractError("features file has " + std::to_string(f.dim(0)) + " rows but the manifest lists " +
                          std::to_string(samples.size()) + " images");
    return InputSet::features(std::move(f), std::move(labels));
  }
  std::vector<UnitImage> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(preprocess(read_image(s.image_path), cfg.imaging));
  return InputSet::images(std::move(images), std::move(labels));
}

ModelConfig model_config_for(const RunConfig& cfg, const InputSet& inputs) {
  ModelConfig m = cfg.model;
  if (inputs.is_features()) {
    // Spatial dims come from the stored feature maps.
    const Shape s = inputs.feature_shape();
    m.input_height = s[2];
    m.input_width = s[3];
  }
  return m;
}

std::vector<std::size_t> rows_for_patients(const std::vector<Sample>& samples,
                                           const std::vector<std::string>& patients) {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (wanted.count(samples[i].patient_id)) rows.push_back(i);
  return rows;
}

std::pair<std::vector<std::string>, std::vector<std::string>> validation_split(
    const std::vector<Sample>& samples, const std::vector<std::string>& train_patients, double fraction,
    std::uint64_t seed) {
  std::map<std::string, bool> has_normal;
  for (const auto& s : samples) has_normal[s.patient_id] = has_normal[s.patient_id] || s.label == kNormal;
  std::vector<std::string> normal, abnormal;
  for (const auto& p : train_patients) (has_normal[p] ? normal : abnormal).push_back(p);
  Rng rng(seed);
  rng.shuffle(normal.begin(), normal.end());
  rng.shuffle(abnormal.begin(), abnormal.end());
  std::vector<std::string> fit, val;
  for (auto* group : {&normal, &abnormal}) {
    if (group->empty()) continue;
    std::size_t n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(group->size())));
    n_val = std::clamp<std::size_t>(n_val, 1, group->size() > 1 ? group->size() - 1 : 1);
    val.insert(val.end(), group->begin(), group->begin() + n_val);
    fit.insert(fit.end(), group->begin() + n_val, group->end());
  }
  std::sort(fit.begin(), fit.end());
  std::sort(val.begin(), val.end());
  return {fit, val};
}

std::uint64_t init_seed(std::uint64_t seed, int fold) { return derive_seed(seed, 0x494e4954u, fold); }
std::uint64_t train_seed(std::uint64_t seed, int fold) { return derive_seed(seed, 0x5452414eu, fold); }

void write_score_artifacts(const std::vector<ScoredSample>& scores, const fs::path& dir) {
  write_scores_csv(scores, dir / "scores.csv");
  const Curve roc = roc_curve(scores);
  const Curve pr = pr_curve(scores);
  write_curve_csv(roc, dir / "roc.csv");
  write_curve_csv(pr, dir / "pr.csv");
  write_curve_svg(roc, "ROC", dir / "roc.svg");
  write_curve_svg(pr, "Precision-Recall", dir / "pr.svg");
}

namespace {

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_fold_json(const FoldReport& r, const fs::path& path) {
  XvalReport one;
  one.folds = {r};
  auto j = to_json(one)["folds"][0];
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace

FoldReport run_fold(const RunConfig& cfg, const std::vector<Sample>& samples, const InputSet& inputs,
                    const FoldSplit& split, const fs::path& dir) {
  const std::string tag = "fold " + std::to_string(split.fold) + ": ";
  stage("output", [&] { fs::create_directories(dir); });

  std::vector<std::string> fit_patients = split.train_patients, val_patients;
  if (cfg.threshold_source == ThresholdSource::kValidation)
    std::tie(fit_patients, val_patients) =
        validation_split(samples, split.train_patients, cfg.validation_fraction,
                         derive_seed(cfg.seed, 0x56414cu, split.fold));

  const InputSet train_set = inputs.subset(rows_for_patients(samples, fit_patients));
  const InputSet test_set = inputs.subset(rows_for_patients(samples, split.test_patients));

  Model<float> model = stage("init", [&] {
    if (train_set.size() == 0) throw std::runtime_error(tag + "no training samples");
    if (test_set.size() == 0) throw std::runtime_error(tag + "no test samples");
    Rng rng(init_seed(cfg.seed, split.fold));
    return build_model<float>(cfg.model, rng);
  });

  stage("train", [&] {
    TrainConfig tc = cfg.train;
    tc.seed = train_seed(cfg.seed, split.fold);
    try {
      const TrainResult tr = train_set.train(model, tc);
      write_loss_csv(tr.epoch_loss, dir / "loss.csv");
    } catch (const DivergenceError& e) {
      write_loss_csv(e.partial_log(), dir / "loss.csv");
      throw std::runtime_error(tag + e.what());
    }
    save_weights(model, dir / "weights.nsw");
  });

  const auto test_scores = stage("score", [&] {
    auto s = test_set.score(model);
    write_score_artifacts(s, dir);
    return s;
  });

  const FoldReport report = stage("threshold", [&] {
    if (cfg.threshold_source == ThresholdSource::kTest)
      return evaluate_fold(split.fold, test_scores, cfg.threshold_method, cfg.direct);
    const InputSet val_set = inputs.subset(rows_for_patients(samples, val_patients));
    const auto val_scores = val_set.score(model);
    write_scores_csv(val_scores, dir / "validation_scores.csv");
    const ThresholdResult t = optimize_threshold(val_scores, cfg.threshold_method, cfg.direct);
    return fold_from_counts(split.fold, auc(roc_curve(test_scores)), auc(pr_curve(test_scores)), t.threshold,
                            confusion_at(test_scores, t.threshold));
  });
  stage("report", [&] { write_fold_json(report, dir / "fold_report.json"); });
  return report;
}

XvalReport run_xval(const RunConfig& cfg_in) {
  RunConfig cfg = cfg_in;
  stage("config", [&] { cfg.validate(); });
  const fs::path out = resolve_output_dir(cfg.output_dir);
  stage("output", [&] {
    fs::create_directories(out);
    write_run_config(cfg, out / "config.txt");
  });

  const auto samples = stage("manifest", [&] { return load_manifest(cfg.manifest); });
  const auto folds = stage("split", [&] {
    auto f = cfg.folds_file.empty() ? grouped_kfold(samples, cfg.k, cfg.seed, cfg.stratify)
                                    : read_folds(cfg.folds_file);
    write_folds(f, out / "folds.json");
    return f;
  });
  const InputSet inputs = stage("preprocess", [&] { return load_inputs(cfg, samples); });
  cfg.model = model_config_for(cfg, inputs);

  std::vector<FoldReport> reports(folds.size());
  auto fold_dir = [&](const FoldSplit& f) { return out / ("fold_" + std::to_string(f.fold)); };
  if (cfg.parallel_folds && folds.size() > 1) {
    std::vector<std::exception_ptr> errors(folds.size());
    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < folds.size(); ++i) {
      workers.emplace_back([&, i] {
        try {
          reports[i] = run_fold(cfg, samples, inputs, folds[i], fold_dir(folds[i]));
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  } else {
    for (std::size_t i = 0; i < folds.size(); ++i)
      reports[i] = run_fold(cfg, samples, inputs, folds[i], fold_dir(folds[i]));
  }

  return stage("report", [&] {
    XvalReport rep = xval_report(std::move(reports));
    write_report_json(rep, out / "report.json");
    std::ofstream txt(out / "report.txt", std::ios::trunc);
    txt << format_table(rep);
    return rep;
  });
}

void export_stem_features(const RunConfig& cfg, const fs::path& out) {
  RunConfig c = cfg;
  c.model.stem = StemKind::kRandom;
  const auto samples = stage("manifest", [&] { return load_manifest(c.manifest); });
  stage("features", [&] {
    Rng rng(init_seed(c.seed, -1));
    const Model<float> model = build_model<float>(c.model, rng);
    const int C = c.model.stem_out_channels, h = c.model.feature_height(), w = c.model.feature_width();
    TensorF all({static_cast<int>(samples.size()), C, h, w});
    const std::size_t per = static_cast<std::size_t>(C) * h * w;
    constexpr std::size_t chunk = 32;
    for (std::size_t start = 0; start < samples.size(); start += chunk) {
      std::vector<std::size_t> rows;
      for (std::size_t i = start; i < std::min(samples.size(), start + chunk); ++i) rows.push_back(i);
      std::vector<UnitImage> imgs;
      for (auto r : rows)
        imgs.push_back(stage("preprocess", [&] { return preprocess(read_image(samples[r].image_path), c.imaging); }));
      const auto f = stem_forward(model, Var<float>(to_tensor(imgs)));
      std::copy_n(f.value().data(), rows.size() * per, all.data() + start * per);
    }
    export_features(all, out);
  });
}

}  // namespace cxr
