#include "oracles.hpp"

#include "cxr/train.hpp"
#include "cxr/weight_archive.hpp"

#include <gtest/gtest.h>

using namespace cxr;

namespace {

// Ten Adam steps on f(theta) = theta^2 through the library, returning the trace.
std::vector<double> adam_trace(const TrainConfig& cfg, double theta0, int steps) {
  std::vector<Parameter<double>> params{{"theta", Var<double>(TensorD::from({1}, {theta0}), true)}};
  AdamState<double> state;
  std::vector<double> trace;
  for (int i = 0; i < steps; ++i) {
    params[0].var.zero_grad();
    backward(sum(mul(params[0].var, params[0].var)));
    adam_step(params, state, cfg);
    trace.push_back(params[0].var.value()[0]);
  }
  return trace;
}

ModelConfig toy_config() {
  ModelConfig c;
  c.stem = StemKind::kPrecomputed;
  c.stem_out_channels = 2;
  c.num_blocks = 1;
  c.kernel = 3;
  c.input_height = c.input_width = 1;
  c.noise_sigma = 0.0;
  c.block_dropout_rate = 0.0;
  c.head_dropout_rate = 0.0;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<Parameter<double>> params{{"w", Var<double>(TensorD::from({3}, {1, -2, 3}), true)}};
  params[0].var.node()->grad_ref();  // explicit zero gradient
  AdamState<double> state;
  adam_step(params, state, TrainConfig{});
  EXPECT_EQ(params[0].var.value(), TensorD::from({3}, {1, -2, 3}));
}

TEST(Adam, FirstStepMagnitude) {
  TrainConfig cfg;
  TensorD theta = TensorD::from({1}, {0.0}), m({1}), v({1});
  adam_update(theta, TensorD::from({1}, {1.0}), m, v, 1, cfg);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(theta[0], -1e-4 * (1.0 / (1.0 + 1e-8)), 1e-18);
}

TEST(Adam, MatchesReferenceRecurrence) {
  TrainConfig cfg;
  cfg.lr = 0.1;
  const auto trace = adam_trace(cfg, 1.0, 10);
  oracle::ScalarAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  double theta = 1.0;
  for (int i = 0; i < 10; ++i) {
    theta = ref.step(theta, 2 * theta);
    EXPECT_NEAR(trace[i], theta, 1e-12) << "step " << i;
  }
}

TEST(Adam, RejectsNonFiniteGradient) {
  std::vector<Parameter<double>> params{{"head.weight", Var<double>(TensorD::from({1}, {1}), true)}};
  params[0].var.node()->grad_ref()[0] = std::nan("");
  AdamState<double> state;
  try {
    adam_step(params, state, TrainConfig{});
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("head.weight"), std::string::npos);
  }
  EXPECT_EQ(state.t, 0);
}

TEST(Train, ToySetConverges) {
  Rng rng(1);
  const int n = 40;
  TensorF x({n, 2, 1, 1});
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 2;
    const float a = static_cast<float>(rng.uniform(0.5, 1.0)), b = static_cast<float>(rng.uniform(0.0, 0.3));
    x[2 * i] = y[i] ? a : b;
    x[2 * i + 1] = y[i] ? b : a;
  }
  auto model = build_model<float>(toy_config(), rng);
  TrainConfig cfg;
  cfg.lr = 0.02;
  cfg.batch_size = n;
  cfg.epochs = 200;
  const auto r = train_on_features(model, x, y, cfg);
  EXPECT_EQ(r.steps, 200);
  EXPECT_LT(r.epoch_loss.back(), 0.1);
}

TEST(Train, SameSeedSameWeightsAndLogLength) {
  ModelConfig c;
  c.stem_out_channels = 10;
  c.input_height = c.input_width = 16;
  c.num_blocks = 1;
  std::vector<UnitImage> imgs;
  std::vector<int> labels;
  Rng data(2);
  for (int i = 0; i < 12; ++i) {
    imgs.push_back(UnitImage::Random(16, 16).abs());
    labels.push_back(i % 2);
  }
  const BatchSource src(imgs, labels);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 17;
  cfg.lr = 1e-3;
  Rng r1(3), r2(3);
  auto a = build_model<float>(c, r1), b = build_model<float>(c, r2);
  const auto ra = train_model(a, src, cfg);
  const auto rb = train_model(b, src, cfg);
  EXPECT_EQ(ra.epoch_loss.size(), 3u);
  EXPECT_EQ(ra.epoch_loss, rb.epoch_loss);
  for (std::size_t i = 0; i < a.parameters().size(); ++i)
    EXPECT_EQ(a.parameters()[i].var.value(), b.parameters()[i].var.value()) << a.parameters()[i].name;
}

TEST(Score, BatchEqualsSingleAndIsRepeatable) {
  ModelConfig c;
  c.stem_out_channels = 10;
  c.input_height = c.input_width = 16;
  Rng rng(4);
  const auto model = build_model<float>(c, rng);
  std::vector<UnitImage> imgs;
  for (int i = 0; i < 7; ++i) imgs.push_back(UnitImage::Random(16, 16).abs());
  const BatchSource src(imgs, std::vector<int>(7, 1));
  const auto batched = score_split(model, src, 7);
  EXPECT_EQ(batched, score_split(model, src, 7));
  const auto single = score_split(model, src, 1);
  ASSERT_EQ(batched.size(), single.size());
  for (std::size_t i = 0; i < single.size(); ++i) {
    EXPECT_NEAR(batched[i].score, single[i].score, 1e-6);
    EXPECT_GT(batched[i].score, 0.0);
    EXPECT_LT(batched[i].score, 1.0);
  }
}

TEST(Train, ImportedFeaturesMatchFrozenStem) {
  ModelConfig rc;
  rc.stem_out_channels = 10;
  rc.input_height = rc.input_width = 16;
  rc.num_blocks = 1;
  Rng rng(5);
  auto frozen = build_model<float>(rc, rng);

  std::vector<UnitImage> imgs;
  std::vector<int> labels;
  for (int i = 0; i < 9; ++i) {
    imgs.push_back(UnitImage::Random(16, 16).abs());
    labels.push_back(i % 3 == 0);
  }
  const auto feats = stem_forward(frozen, Var<float>(to_tensor(imgs))).value();
  const auto path = std::filesystem::temp_directory_path() / "cxr_frozen_features.nsw";
  export_features(feats, path);

  ModelConfig pc = rc;
  pc.stem = StemKind::kPrecomputed;
  pc.input_height = rc.feature_height();
  pc.input_width = rc.feature_width();
  Rng unused(6);
  auto head_only = build_model<float>(pc, unused);
  for (auto& p : head_only.parameters()) p.var.mutable_value() = frozen.param(p.name).value();

  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  cfg.seed = 8;
  cfg.augment = false;
  cfg.freeze_stem = true;
  const auto stem_before = frozen.param("stem.conv1.weight").value();
  train_model(frozen, BatchSource(imgs, labels), cfg);
  train_on_features(head_only, import_features(path, 10), labels, cfg);

  EXPECT_EQ(frozen.param("stem.conv1.weight").value(), stem_before);
  for (const auto& p : head_only.parameters()) {
    const TensorD a = p.var.value().cast<double>(), b = frozen.param(p.name).value().cast<double>();
    EXPECT_LT(oracle::rel_error(a, b), 1e-6) << p.name;
  }
}

TEST(Train, DivergenceReportsPartialLog) {
  Rng rng(9);
  auto model = build_model<float>(toy_config(), rng);
  TensorF x = TensorF::constant({4, 2, 1, 1}, std::numeric_limits<float>::quiet_NaN());
  TrainConfig cfg;
  cfg.epochs = 2;
  try {
    train_on_features(model, x, {0, 1, 0, 1}, cfg);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_TRUE(e.partial_log().empty());
  }
}
