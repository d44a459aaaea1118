#pragma once

#include "cxr/config.hpp"
#include "cxr/dataset.hpp"
#include "cxr/report.hpp"
#include "cxr/train.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace cxr {

/// A failure inside a named pipeline stage (e.g. "train", "threshold").
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Network inputs for a set of samples: preprocessed images for the random
/// stem, or rows of a precomputed feature tensor.
class InputSet {
 public:
  static InputSet images(std::vector<UnitImage> images, std::vector<int> labels);
  static InputSet features(TensorF features, std::vector<int> labels);

  std::size_t size() const { return labels_.size(); }
  const std::vector<int>& labels() const { return labels_; }
  bool is_features() const { return is_features_; }
  /// Shape of the stored feature tensor; empty for image sets.
  Shape feature_shape() const { return is_features_ ? features_.shape() : Shape{}; }
  /// Same kind of set restricted to `rows`, in the given order.
  InputSet subset(const std::vector<std::size_t>& rows) const;

  TrainResult train(Model<float>& model, const TrainConfig& cfg) const;
  std::vector<ScoredSample> score(const Model<float>& model, int batch_size = 64) const;

 private:
  bool is_features_ = false;
  std::vector<UnitImage> images_;
  TensorF features_;
  std::vector<int> labels_;
};

/// Loads every manifest sample as network input according to `cfg`
/// (preprocessing images, or importing `cfg.features_file`).
InputSet load_inputs(const RunConfig& cfg, const std::vector<Sample>& samples);

/// Model config with spatial sizes taken from the inputs (feature maps for
/// the precomputed stem).
ModelConfig model_config_for(const RunConfig& cfg, const InputSet& inputs);

/// Row indices of `samples` whose patient is in `patients`.
std::vector<std::size_t> rows_for_patients(const std::vector<Sample>& samples,
                                           const std::vector<std::string>& patients);

/// Splits training patients into (fit, validation). Normal and Abnormal
/// patients are sampled separately so both classes reach the validation set.
std::pair<std::vector<std::string>, std::vector<std::string>> validation_split(
    const std::vector<Sample>& samples, const std::vector<std::string>& train_patients, double fraction,
    std::uint64_t seed);

/// Seeds for fold `fold`'s weight initialization and training stream.
std::uint64_t init_seed(std::uint64_t seed, int fold);
std::uint64_t train_seed(std::uint64_t seed, int fold);

/// Writes scores.csv, roc.csv/svg, pr.csv/svg into `dir`.
void write_score_artifacts(const std::vector<ScoredSample>& scores, const std::filesystem::path& dir);

/// Trains and evaluates one fold, writing weights.nsw, loss.csv, scores
/// (and validation_scores.csv when thresholding on validation), curves and
/// fold_report.json into `dir`.
FoldReport run_fold(const RunConfig& cfg, const std::vector<Sample>& samples, const InputSet& inputs,
                    const FoldSplit& split, const std::filesystem::path& dir);

/// Full cross-validation: split, then per fold train, score, threshold; writes
/// config.txt, folds.json, fold_<i>/..., report.json and report.txt under the
/// resolved output directory. Throws StageError naming the failing stage.
XvalReport run_xval(const RunConfig& cfg);

/// Exports random-stem features [N,C,h,w] of every manifest image.
void export_stem_features(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace cxr
