#pragma once

#include "cxr/dataset.hpp"
#include "cxr/metrics.hpp"
#include "cxr/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

namespace cxr {

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 50;
  int batch_size = 400;
  std::uint64_t seed = 0;
  bool freeze_stem = false;
  bool augment = true;

  void validate() const;
};

template <typename Scalar>
struct AdamState {
  std::vector<Tensor<Scalar>> m, v;
  long t = 0;
};

/// One Adam update of a single tensor at (already incremented) step t.
template <typename Scalar>
void adam_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& m, Tensor<Scalar>& v,
                 long t, const TrainConfig& cfg);

/// Increments state.t, then applies Adam to every trainable parameter using
/// its accumulated gradient. Throws if any gradient is non-finite, naming
/// the parameter, before modifying anything.
template <typename Scalar>
void adam_step(std::vector<Parameter<Scalar>>& params, AdamState<Scalar>& state, const TrainConfig& cfg);

/// Thrown when the training loss becomes non-finite; carries the epochs completed so far.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::vector<double> partial_log)
      : std::runtime_error(what), log_(std::move(partial_log)) {}
  const std::vector<double>& partial_log() const { return log_; }

 private:
  std::vector<double> log_;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean BCE per sample, one entry per epoch
  long steps = 0;
};

/// Supplies the network input and [B,1] labels for the given sample indices.
using BatchProvider =
    std::function<std::pair<TensorF, TensorF>(const std::vector<std::size_t>& indices, int epoch)>;

/// Mini-batch Adam on BCE. Sample order is reshuffled each epoch from
/// cfg.seed; stochastic layers draw from a stream derived from (seed, epoch, batch).
TrainResult train_model(Model<float>& model, std::size_t n_samples, const BatchProvider& batches,
                        const TrainConfig& cfg);

/// Trains on preprocessed images (augmented when cfg.augment is set).
TrainResult train_model(Model<float>& model, const BatchSource& data, const TrainConfig& cfg);

/// Trains a precomputed-feature model on a fixed [N,C,h,w] feature tensor.
TrainResult train_on_features(Model<float>& model, const TensorF& features, const std::vector<int>& labels,
                              const TrainConfig& cfg);

/// Eval-mode probabilities for an input batch, in input order.
std::vector<double> predict(const Model<float>& model, const TensorF& batch);

/// Eval-mode scores for every sample of `data`, computed in chunks of `batch_size`.
std::vector<ScoredSample> score_split(const Model<float>& model, const BatchSource& data, int batch_size = 64);

void write_loss_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path);

extern template void adam_update<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&,
                                        long, const TrainConfig&);
extern template void adam_update<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&,
                                         Tensor<double>&, long, const TrainConfig&);
extern template void adam_step<float>(std::vector<Parameter<float>>&, AdamState<float>&, const TrainConfig&);
extern template void adam_step<double>(std::vector<Parameter<double>>&, AdamState<double>&, const TrainConfig&);

}  // namespace cxr
