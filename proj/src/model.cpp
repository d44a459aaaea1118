#include "cxr/model.hpp"

#include <cmath>
#include <stdexcept>

namespace cxr {

void BlockConfig::validate() const {
  if (in_channels < 1 || branch_channels < 1)
    throw ContractError("block: channel counts must be positive");
  if (kernel < 1 || dilation < 1) throw ContractError("block: kernel and dilation must be >= 1");
  if (!(spatial_dropout_rate >= 0.0 && spatial_dropout_rate < 1.0))
    throw ContractError("block: spatial dropout rate must be in [0,1)");
  if (!use_projection && out_channels() != in_channels)
    throw ContractError("block: 2*branch_channels (" + std::to_string(out_channels()) +
                        ") != in_channels (" + std::to_string(in_channels) +
                        ") and no projection is enabled");
}

std::string to_string(StemKind kind) {
  return kind == StemKind::kRandom ? "random" : "precomputed";
}

StemKind stem_kind_from_string(const std::string& s) {
  if (s == "random" || s == "random-stem") return StemKind::kRandom;
  if (s == "precomputed" || s == "precomputed-features") return StemKind::kPrecomputed;
  throw std::invalid_argument("unknown stem kind '" + s + "'");
}

void ModelConfig::validate() const {
  if (input_height < 1 || input_width < 1) throw ContractError("model: input size must be positive");
  if (num_blocks < 1) throw ContractError("model: num_blocks must be >= 1");
  if (stem_out_channels < 2 || stem_out_channels % 2 != 0)
    throw ContractError("model: stem_out_channels must be even and >= 2, got " +
                        std::to_string(stem_out_channels));
  if (!(noise_sigma >= 0.0)) throw ContractError("model: noise_sigma must be >= 0");
  if (!(head_dropout_rate >= 0.0 && head_dropout_rate < 1.0))
    throw ContractError("model: head dropout rate must be in [0,1)");
  block_config().validate();
}

BlockConfig ModelConfig::block_config() const {
  BlockConfig b;
  b.in_channels = stem_out_channels;
  b.branch_channels = stem_out_channels / 2;
  b.kernel = kernel;
  b.dilation = dilation;
  b.spatial_dropout_rate = block_dropout_rate;
  b.post_add_activation = post_add_activation;
  return b;
}

std::vector<int> ModelConfig::stem_channels() const {
  // 1 -> C/5 -> 2C/5 -> C; for C = 320 this is 64, 128, 320.
  return {std::max(1, stem_out_channels / 5), std::max(1, 2 * stem_out_channels / 5),
          stem_out_channels};
}

namespace {
int stride2_stages(int extent) {
  for (int i = 0; i < 3; ++i) extent = (extent + 1) / 2;
  return extent;
}
}  // namespace

int ModelConfig::feature_height() const {
  return stem == StemKind::kRandom ? stride2_stages(input_height) : input_height;
}
int ModelConfig::feature_width() const {
  return stem == StemKind::kRandom ? stride2_stages(input_width) : input_width;
}

template <typename Scalar>
const Var<Scalar>& Model<Scalar>::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw std::out_of_range("model has no parameter '" + name + "'");
}

template <typename Scalar>
Var<Scalar> Model<Scalar>::add_parameter(std::string name, Tensor<Scalar> value) {
  for (const auto& p : params_)
    if (p.name == name) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Var<Scalar> v(std::move(value), true);
  params_.push_back({std::move(name), v});
  return v;
}

template <typename Scalar>
BlockWeights<Scalar> Model<Scalar>::block(int index) const {
  const std::string prefix = "block" + std::to_string(index) + ".";
  BlockWeights<Scalar> w;
  w.standard_kernel = param(prefix + "standard.weight");
  w.standard_bias = param(prefix + "standard.bias");
  w.dilated_kernel = param(prefix + "dilated.weight");
  w.dilated_bias = param(prefix + "dilated.bias");
  for (const auto& p : params_) {
    if (p.name == prefix + "projection.weight") w.projection_kernel = p.var;
    if (p.name == prefix + "projection.bias") w.projection_bias = p.var;
  }
  return w;
}

template <typename Scalar>
void Model<Scalar>::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& p : params_)
    if (p.name.starts_with(prefix)) p.var.node()->requires_grad = trainable;
}

template <typename Scalar>
std::size_t Model<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().numel();
  return n;
}

template <typename Scalar>
void Model<Scalar>::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

template <typename Scalar>
Var<Scalar> dilated_resnet_block(const Var<Scalar>& x, const BlockWeights<Scalar>& w,
                                 const BlockConfig& cfg, Mode mode, Rng& rng) {
  cfg.validate();
  if (x.shape().size() != 4 || x.shape()[1] != cfg.in_channels)
    throw ContractError("block: input " + shape_str(x.shape()) + " does not have " +
                        std::to_string(cfg.in_channels) + " channels");
  const Conv2dOptions standard{1, 1, Padding::kSame};
  const Conv2dOptions dilated{1, cfg.dilation, Padding::kSame};
  auto a = conv2d(x, w.standard_kernel, w.standard_bias, standard);
  auto b = conv2d(x, w.dilated_kernel, w.dilated_bias, dilated);
  auto merged = spatial_dropout(concat_channels(a, b), cfg.spatial_dropout_rate, mode, rng);
  Var<Scalar> skip = x;
  if (cfg.use_projection) {
    if (!w.projection_kernel) throw ContractError("block: projection enabled but weights missing");
    skip = conv2d(x, w.projection_kernel, w.projection_bias, standard);
  }
  auto out = add(merged, skip);
  return cfg.post_add_activation ? relu(out) : out;
}

namespace {

template <typename Scalar>
Tensor<Scalar> fan_in_normal(Shape shape, int fan_in, Rng& rng) {
  Tensor<Scalar> t(std::move(shape));
  const double std_dev = std::sqrt(2.0 / fan_in);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = Scalar(std_dev * rng.normal());
  return t;
}

template <typename Scalar>
void add_conv(Model<Scalar>& m, const std::string& name, int out, int in, int k, Rng& rng) {
  m.add_parameter(name + ".weight", fan_in_normal<Scalar>({out, in, k, k}, in * k * k, rng));
  m.add_parameter(name + ".bias", Tensor<Scalar>::zeros({out}));
}

}  // namespace

template <typename Scalar>
Model<Scalar> build_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model<Scalar> m(cfg);
  if (cfg.stem == StemKind::kRandom) {
    const auto ch = cfg.stem_channels();
    add_conv(m, "stem.conv1", ch[0], 1, 5, rng);
    add_conv(m, "stem.conv2", ch[1], ch[0], 5, rng);
    add_conv(m, "stem.conv3", ch[2], ch[1], 5, rng);
  }
  const BlockConfig bc = cfg.block_config();
  for (int i = 0; i < cfg.num_blocks; ++i) {
    const std::string prefix = "block" + std::to_string(i);
    add_conv(m, prefix + ".standard", bc.branch_channels, bc.in_channels, bc.kernel, rng);
    add_conv(m, prefix + ".dilated", bc.branch_channels, bc.in_channels, bc.kernel, rng);
  }
  const int c = cfg.stem_out_channels;
  m.add_parameter("head.weight", fan_in_normal<Scalar>({c, 1}, c, rng));
  m.add_parameter("head.bias", Tensor<Scalar>::zeros({1}));
  return m;
}

template <typename Scalar>
Var<Scalar> stem_forward(const Model<Scalar>& model, const Var<Scalar>& images) {
  const auto& cfg = model.config();
  if (cfg.stem != StemKind::kRandom) throw ContractError("stem_forward: model has no random stem");
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 1 || s[2] != cfg.input_height || s[3] != cfg.input_width)
    throw ContractError("forward: expected images [N,1," + std::to_string(cfg.input_height) + "," +
                        std::to_string(cfg.input_width) + "], got " + shape_str(s));
  const Conv2dOptions down{2, 1, Padding::kSame};
  // Unit-interval pixels are shifted to zero mid-grey before the first conv.
  Tensor<Scalar> shift(images.shape());
  shift.array().setConstant(Scalar(-0.5));
  const auto centered = add(images, Var<Scalar>(std::move(shift)));
  auto h = relu(conv2d(centered, model.param("stem.conv1.weight"), model.param("stem.conv1.bias"), down));
  h = relu(conv2d(h, model.param("stem.conv2.weight"), model.param("stem.conv2.bias"), down));
  return conv2d(h, model.param("stem.conv3.weight"), model.param("stem.conv3.bias"), down);
}

template <typename Scalar>
Var<Scalar> head_forward(const Model<Scalar>& model, const Var<Scalar>& features, Mode mode,
                         Rng& rng) {
  const auto& cfg = model.config();
  const Shape& s = features.shape();
  if (s.size() != 4 || s[1] != cfg.stem_out_channels)
    throw ContractError("forward: features " + shape_str(s) + " do not have " +
                        std::to_string(cfg.stem_out_channels) + " channels");
  auto h = gaussian_noise(features, cfg.noise_sigma, mode, rng);
  const BlockConfig bc = cfg.block_config();
  for (int i = 0; i < cfg.num_blocks; ++i) h = dilated_resnet_block(h, model.block(i), bc, mode, rng);
  auto pooled = dropout(global_avg_pool(h), cfg.head_dropout_rate, mode, rng);
  return sigmoid(dense(pooled, model.param("head.weight"), model.param("head.bias")));
}

template <typename Scalar>
Var<Scalar> forward(const Model<Scalar>& model, const Var<Scalar>& batch, Mode mode, Rng& rng) {
  const auto& cfg = model.config();
  if (cfg.stem == StemKind::kRandom) return head_forward(model, stem_forward(model, batch), mode, rng);
  const Shape& s = batch.shape();
  if (s.size() != 4 || s[2] != cfg.input_height || s[3] != cfg.input_width)
    throw ContractError("forward: expected features [N," + std::to_string(cfg.stem_out_channels) +
                        "," + std::to_string(cfg.input_height) + "," +
                        std::to_string(cfg.input_width) + "], got " + shape_str(s));
  return head_forward(model, batch, mode, rng);
}

#define CXR_INSTANTIATE_MODEL(S)                                                             \
  template class Model<S>;                                                                   \
  template Var<S> dilated_resnet_block(const Var<S>&, const BlockWeights<S>&,                \
                                       const BlockConfig&, Mode, Rng&);                      \
  template Model<S> build_model(const ModelConfig&, Rng&);                                   \
  template Var<S> stem_forward(const Model<S>&, const Var<S>&);                              \
  template Var<S> head_forward(const Model<S>&, const Var<S>&, Mode, Rng&);                  \
  template Var<S> forward(const Model<S>&, const Var<S>&, Mode, Rng&);

CXR_INSTANTIATE_MODEL(float)
CXR_INSTANTIATE_MODEL(double)

}  // namespace cxr
