#pragma once

#include "cxr/ops.hpp"

#include <string>
#include <vector>

namespace cxr {

struct BlockConfig {
  int in_channels = 320;
  int branch_channels = 160;
  int kernel = 5;
  int dilation = 2;
  double spatial_dropout_rate = 0.2;
  bool post_add_activation = true;
  // 1x1 projection on the skip path, required when 2*branch_channels != in_channels.
  bool use_projection = false;

  int out_channels() const { return 2 * branch_channels; }
  void validate() const;
};

enum class StemKind { kRandom, kPrecomputed };

std::string to_string(StemKind kind);
StemKind stem_kind_from_string(const std::string& s);

struct ModelConfig {
  int input_height = 128;
  int input_width = 128;
  StemKind stem = StemKind::kRandom;
  int stem_out_channels = 320;
  int num_blocks = 4;
  int kernel = 5;
  int dilation = 2;
  double block_dropout_rate = 0.2;
  double head_dropout_rate = 0.5;
  double noise_sigma = 1.0;
  bool post_add_activation = true;

  void validate() const;
  BlockConfig block_config() const;
  /// Channel widths of the three stride-2 stem convolutions.
  std::vector<int> stem_channels() const;
  /// Spatial size of the stem output (three stride-2 "same" stages).
  int feature_height() const;
  int feature_width() const;
};

template <typename Scalar>
struct Parameter {
  std::string name;
  Var<Scalar> var;
};

/// Weights of one Dilated ResNet Block. Projection weights are empty unless
/// the block config enables the projection.
template <typename Scalar>
struct BlockWeights {
  Var<Scalar> standard_kernel, standard_bias;
  Var<Scalar> dilated_kernel, dilated_bias;
  Var<Scalar> projection_kernel, projection_bias;
};

template <typename Scalar>
class Model {
 public:
  Model() = default;
  explicit Model(ModelConfig cfg) : cfg_(std::move(cfg)) {}

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }
  std::vector<Parameter<Scalar>>& parameters() { return params_; }

  const Var<Scalar>& param(const std::string& name) const;
  Var<Scalar> add_parameter(std::string name, Tensor<Scalar> value);

  BlockWeights<Scalar> block(int index) const;

  /// Enables or disables gradients for every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  ModelConfig cfg_;
  std::vector<Parameter<Scalar>> params_;
};

/// Parallel standard and dilated convolutions, channel concat, spatial dropout,
/// residual add, then optional ReLU. Output shape equals input shape.
template <typename Scalar>
Var<Scalar> dilated_resnet_block(const Var<Scalar>& x, const BlockWeights<Scalar>& w,
                                 const BlockConfig& cfg, Mode mode, Rng& rng);

/// Random fan-in scaled normal initialization, zero biases. Parameter names:
/// stem.conv{1,2,3}.{weight,bias}, block{i}.{standard,dilated,projection}.{weight,bias},
/// head.{weight,bias}.
template <typename Scalar>
Model<Scalar> build_model(const ModelConfig& cfg, Rng& rng);

/// Runs the random stem on [N,1,H,W] images, giving [N,C,h,w] features.
template <typename Scalar>
Var<Scalar> stem_forward(const Model<Scalar>& model, const Var<Scalar>& images);

/// Everything after the stem: noise, blocks, pooling, dropout, dense, sigmoid.
template <typename Scalar>
Var<Scalar> head_forward(const Model<Scalar>& model, const Var<Scalar>& features, Mode mode,
                         Rng& rng);

/// Probabilities [N,1]. Input is [N,1,H,W] images for the random stem or
/// [N,C,h,w] features for the precomputed stem.
template <typename Scalar>
Var<Scalar> forward(const Model<Scalar>& model, const Var<Scalar>& batch, Mode mode, Rng& rng);

#define CXR_DECLARE_MODEL(S)                                                                 \
  extern template class Model<S>;                                                            \
  extern template Var<S> dilated_resnet_block(const Var<S>&, const BlockWeights<S>&,         \
                                              const BlockConfig&, Mode, Rng&);               \
  extern template Model<S> build_model(const ModelConfig&, Rng&);                            \
  extern template Var<S> stem_forward(const Model<S>&, const Var<S>&);                       \
  extern template Var<S> head_forward(const Model<S>&, const Var<S>&, Mode, Rng&);           \
  extern template Var<S> forward(const Model<S>&, const Var<S>&, Mode, Rng&);

CXR_DECLARE_MODEL(float)
CXR_DECLARE_MODEL(double)
#undef CXR_DECLARE_MODEL

}  // namespace cxr
