#include "cxr/train.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace cxr {

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ContractError("train: lr must be > 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) throw ContractError("train: betas must be in (0,1)");
  if (!(eps > 0)) throw ContractError("train: eps must be > 0");
  if (epochs < 1) throw ContractError("train: epochs must be >= 1");
  if (batch_size < 1) throw ContractError("train: batch_size must be >= 1");
}

template <typename Scalar>
void adam_update(Tensor<Scalar>& param, const Tensor<Scalar>& grad, Tensor<Scalar>& m, Tensor<Scalar>& v, long t,
                 const TrainConfig& cfg) {
  if (param.shape() != grad.shape() || m.shape() != param.shape() || v.shape() != param.shape())
    throw ContractError("adam: parameter " + shape_str(param.shape()) + " and gradient " + shape_str(grad.shape()) +
                        " shapes are not aligned");
  if (t < 1) throw ContractError("adam: step counter must be incremented before use");
  const Scalar b1 = Scalar(cfg.beta1), b2 = Scalar(cfg.beta2);
  m.array() = b1 * m.array() + (Scalar(1) - b1) * grad.array();
  v.array() = b2 * v.array() + (Scalar(1) - b2) * grad.array().square();
  const Scalar c1 = Scalar(1) - Scalar(std::pow(cfg.beta1, static_cast<double>(t)));
  const Scalar c2 = Scalar(1) - Scalar(std::pow(cfg.beta2, static_cast<double>(t)));
  param.array() -= Scalar(cfg.lr) * (m.array() / c1) / ((v.array() / c2).sqrt() + Scalar(cfg.eps));
}

template <typename Scalar>
void adam_step(std::vector<Parameter<Scalar>>& params, AdamState<Scalar>& state, const TrainConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.push_back(Tensor<Scalar>::zeros(p.var.shape()));
      state.v.push_back(Tensor<Scalar>::zeros(p.var.shape()));
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam: state does not match parameter list");
  for (const auto& p : params)
    if (p.var.requires_grad() && !p.var.grad().all_finite())
      throw std::runtime_error("adam: non-finite gradient in parameter '" + p.name + "'");
  ++state.t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.var.requires_grad()) continue;
    adam_update(p.var.mutable_value(), p.var.grad(), state.m[i], state.v[i], state.t, cfg);
  }
}

template void adam_update<float>(Tensor<float>&, const Tensor<float>&, Tensor<float>&, Tensor<float>&, long,
                                 const TrainConfig&);
template void adam_update<double>(Tensor<double>&, const Tensor<double>&, Tensor<double>&, Tensor<double>&, long,
                                  const TrainConfig&);
template void adam_step<float>(std::vector<Parameter<float>>&, AdamState<float>&, const TrainConfig&);
template void adam_step<double>(std::vector<Parameter<double>>&, AdamState<double>&, const TrainConfig&);

TrainResult train_model(Model<float>& model, std::size_t n_samples, const BatchProvider& batches,
                        const TrainConfig& cfg) {
  cfg.validate();
  if (n_samples == 0) throw ContractError("train: empty training set");
  if (cfg.freeze_stem) model.set_trainable("stem.", false);

  AdamState<float> state;
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n_samples);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.seed, 0x5348u, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_samples; start += cfg.batch_size, ++batch_index) {
      const std::vector<std::size_t> idx(order.begin() + start,
                                         order.begin() + std::min(n_samples, start + cfg.batch_size));
      auto [input, labels] = batches(idx, epoch);
      Rng layer_rng(derive_seed(cfg.seed, 0x4c59u + static_cast<std::uint64_t>(epoch), batch_index));
      model.zero_grad();
      const auto probs = forward(model, Var<float>(std::move(input)), Mode::kTrain, layer_rng);
      const auto loss = bce_loss(probs, labels);
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw DivergenceError("training diverged: loss is " + std::to_string(value) + " at epoch " +
                                  std::to_string(epoch),
                              result.epoch_loss);
      }
      backward(loss);
      adam_step(model.parameters(), state, cfg);
      loss_sum += value * static_cast<double>(idx.size());
      ++result.steps;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n_samples));
  }
  return result;
}

TrainResult train_model(Model<float>& model, const BatchSource& data, const TrainConfig& cfg) {
  return train_model(
      model, data.size(),
      [&](const std::vector<std::size_t>& idx, int epoch) {
        Batch b = data.load(idx, epoch, cfg.seed, Mode::kTrain, cfg.augment);
        return std::make_pair(std::move(b.images), std::move(b.labels));
      },
      cfg);
}

TrainResult train_on_features(Model<float>& model, const TensorF& features, const std::vector<int>& labels,
                              const TrainConfig& cfg) {
  if (features.rank() != 4 || static_cast<std::size_t>(features.dim(0)) != labels.size())
    throw ContractError("train_on_features: feature tensor " + shape_str(features.shape()) + " does not match " +
                        std::to_string(labels.size()) + " labels");
  const std::size_t per = features.numel() / labels.size();
  return train_model(
      model, labels.size(),
      [&](const std::vector<std::size_t>& idx, int) {
        Shape s = features.shape();
        s[0] = static_cast<int>(idx.size());
        TensorF x(s);
        TensorF y({static_cast<int>(idx.size()), 1});
        for (std::size_t i = 0; i < idx.size(); ++i) {
          std::copy_n(features.data() + idx[i] * per, per, x.data() + i * per);
          y[i] = static_cast<float>(labels[idx[i]]);
        }
        return std::make_pair(std::move(x), std::move(y));
      },
      cfg);
}

std::vector<double> predict(const Model<float>& model, const TensorF& batch) {
  Rng unused(0);
  const auto probs = forward(model, Var<float>(batch), Mode::kEval, unused);
  std::vector<double> out(probs.value().numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs.value()[i];
  return out;
}

std::vector<ScoredSample> score_split(const Model<float>& model, const BatchSource& data, int batch_size) {
  std::vector<ScoredSample> out;
  out.reserve(data.size());
  for (const auto& idx : data.batch_indices(batch_size, 0, 0, Mode::kEval)) {
    const Batch b = data.load(idx, 0, 0, Mode::kEval);
    const auto p = predict(model, b.images);
    for (std::size_t i = 0; i < idx.size(); ++i) out.push_back({p[i], data.labels()[idx[i]]});
  }
  return out;
}

void write_loss_csv(const std::vector<double>& epoch_loss, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t e = 0; e < epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g\n", e, epoch_loss[e]);
    out << buf;
  }
}

}  // namespace cxr
