// Acceptance checks: prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include "oracles.hpp"

#include "cxr/direct.hpp"
#include "cxr/pipeline.hpp"
#include "cxr/report.hpp"
#include "cxr/threshold.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

using namespace cxr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
  double secs = 0.0;  // filled in by the caller unless the check times itself
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1: finite-difference checks of every differentiable op and a one-block network.
Outcome gradient_suite() {
  using oracle::grad_check;
  using oracle::random_tensor;
  Rng rng(101);
  double worst = 0.0;
  auto track = [&](double e) { worst = std::max(worst, e); };
  track(grad_check([](const auto& v) { return add(v[0], v[1]); }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));
  track(grad_check([](const auto& v) { return mul(v[0], v[1]); }, {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)}));
  {
    TensorD x = random_tensor({3, 4}, rng, 0.1, 1.0);
    for (std::size_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    track(grad_check([](const auto& v) { return relu(v[0]); }, {x}));
  }
  track(grad_check([](const auto& v) { return sigmoid(v[0]); }, {random_tensor({3, 4}, rng, -4, 4)}));
  track(grad_check([](const auto& v) { return reshape(v[0], {12}); }, {random_tensor({3, 4}, rng)}));
  track(grad_check([](const auto& v) { return sum(v[0]); }, {random_tensor({3, 4}, rng)}));
  for (const Conv2dOptions opt : {Conv2dOptions{1, 1, Padding::kSame}, Conv2dOptions{2, 1, Padding::kSame},
                                  Conv2dOptions{1, 2, Padding::kSame}, Conv2dOptions{1, 1, Padding::kValid}})
    track(grad_check([&](const auto& v) { return conv2d(v[0], v[1], v[2], opt); },
                     {random_tensor({2, 2, 6, 5}, rng), random_tensor({3, 2, 3, 3}, rng), random_tensor({3}, rng)}));
  track(grad_check([](const auto& v) { return concat_channels(v[0], v[1]); },
                   {random_tensor({1, 2, 3, 3}, rng), random_tensor({1, 1, 3, 3}, rng)}));
  track(grad_check([](const auto& v) { return slice_channels(v[0], 1, 3); }, {random_tensor({1, 4, 3, 3}, rng)}));
  track(grad_check([](const auto& v) { return dense(v[0], v[1], v[2]); },
                   {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng), random_tensor({2}, rng)}));
  track(grad_check([](const auto& v) { return global_avg_pool(v[0]); }, {random_tensor({2, 3, 4, 4}, rng)}));
  track(grad_check([](const auto& v) { Rng r(5); return spatial_dropout(v[0], 0.3, Mode::kTrain, r); },
                   {random_tensor({2, 5, 3, 3}, rng)}));
  track(grad_check([](const auto& v) { Rng r(6); return dropout(v[0], 0.3, Mode::kTrain, r); }, {random_tensor({4, 6}, rng)}));
  track(grad_check([](const auto& v) { Rng r(7); return gaussian_noise(v[0], 1.0, Mode::kTrain, r); },
                   {random_tensor({4, 6}, rng)}));
  const TensorD y = TensorD::from({4, 1}, {1, 0, 1, 0});
  track(grad_check([&](const auto& v) { return reshape(bce_loss(v[0], y), {1}); }, {random_tensor({4, 1}, rng, 0.05, 0.95)}));

  ModelConfig micro;
  micro.stem = StemKind::kPrecomputed;
  micro.stem_out_channels = 2;
  micro.num_blocks = 1;
  micro.kernel = 3;
  micro.input_height = micro.input_width = 4;
  auto model = build_model<double>(micro, rng);
  track(oracle::model_grad_error(model, random_tensor({3, 2, 4, 4}, rng), TensorD::from({3, 1}, {1, 0, 1}), 1000));
  return {worst < 1e-4, "worst relative error " + fmt("%.2e", worst)};
}

// 2: dilation 2 equals the zero-inserted kernel at dilation 1.
Outcome dilation_oracle() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int c = 1 + static_cast<int>(rng.below(3)), f = 1 + static_cast<int>(rng.below(3));
    const int k = 2 + static_cast<int>(rng.below(3));
    const TensorF x = oracle::random_tensor_as<float>({1 + static_cast<int>(rng.below(2)), c,
                                                       4 + static_cast<int>(rng.below(8)), 4 + static_cast<int>(rng.below(8))}, rng);
    const TensorF w = oracle::random_tensor_as<float>({f, c, k, k}, rng);
    const TensorF b = oracle::random_tensor_as<float>({f}, rng);
    const auto a = conv2d(Var<float>(x), Var<float>(w), Var<float>(b), {1, 2, Padding::kSame});
    const auto z = conv2d(Var<float>(x), Var<float>(oracle::zero_insert(w, 2)), Var<float>(b), {1, 1, Padding::kSame});
    if (a.shape() != z.shape()) return {false, "shape mismatch at trial " + std::to_string(trial)};
    // Each output sums at most c*k*k products of magnitude <= 1.
    const double bound = 4 * std::numeric_limits<float>::epsilon() * (c * k * k + 1);
    for (std::size_t i = 0; i < a.value().numel(); ++i)
      worst = std::max(worst, std::abs(double(a.value()[i]) - z.value()[i]) / bound);
  }
  return {worst <= 1.0, "max deviation " + fmt("%.3f", worst) + " of the float rounding bound"};
}

// 3: Adam against an independent scalar recurrence.
Outcome adam_oracle() {
  TrainConfig cfg;
  TensorD theta = TensorD::from({1}, {0.0}), m({1}), v({1});
  adam_update(theta, TensorD::from({1}, {1.0}), m, v, 1, cfg);
  const double first = -theta[0];
  const bool first_ok = std::abs(first - 1e-4 / (1 + 1e-8)) < 1e-18;

  cfg.lr = 0.1;
  std::vector<Parameter<double>> params{{"theta", Var<double>(TensorD::from({1}, {1.0}), true)}};
  AdamState<double> state;
  oracle::ScalarAdam ref{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  double ref_theta = 1.0, worst = 0.0;
  for (int i = 0; i < 10; ++i) {
    params[0].var.zero_grad();
    backward(sum(mul(params[0].var, params[0].var)));
    adam_step(params, state, cfg);
    ref_theta = ref.step(ref_theta, 2 * ref_theta);
    worst = std::max(worst, std::abs(params[0].var.value()[0] - ref_theta));
  }
  return {first_ok && worst <= 1e-12, "first step " + fmt("%.12g", first) + ", 10-step max deviation " + fmt("%.1e", worst)};
}

// 4: the published five-fold table recomputed from its counts.
Outcome metrics_fixtures() {
  const std::array<std::array<long, 4>, 5> counts{{{121, 0, 381, 135}, {122, 0, 390, 146}, {138, 0, 378, 117},
                                                   {119, 0, 387, 141}, {146, 0, 381, 115}}};
  const std::array<double, 5> printed_recall{0.47, 0.46, 0.54, 0.46, 0.56};
  std::vector<FoldReport> folds;
  bool ok = true;
  for (int i = 0; i < 5; ++i) {
    const ConfusionCounts c{counts[i][0], counts[i][1], counts[i][2], counts[i][3]};
    folds.push_back(fold_from_counts(i, 0, 0, 0, c));
    ok = ok && std::abs(*recall(c) - printed_recall[i]) <= 0.005 && std::abs(*specificity(c) - 1.0) <= 0.005;
  }
  const XvalReport rep = xval_report(folds);
  const std::string avg_recall = fmt("%.2f", rep.average.recall), avg_tp = fmt("%.2f", rep.average.tp);
  ok = ok && avg_recall == "0.50" && avg_tp == "129.20";
  ok = ok && std::abs(*recall(ConfusionCounts{121, 0, 381, 135}) - 121.0 / 256) < 1e-15;
  ok = ok && std::abs(*recall(ConfusionCounts{146, 0, 381, 115}) - 146.0 / 261) < 1e-15;
  return {ok, "average recall " + avg_recall + ", average TP " + avg_tp};
}

// 5: trapezoidal ROC AUC against the pairwise rank statistic.
Outcome auc_oracle() {
  Rng rng(505);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_scores(rng, 2 + static_cast<int>(rng.below(49)));
    worst = std::max(worst, std::abs(auc(roc_curve(s)) - oracle::rank_auc(s)));
  }
  return {worst <= 1e-12, "max deviation " + fmt("%.1e", worst)};
}

// 6: DIRECT on an analytic 1-D minimum and a multimodal 2-D surface.
Outcome direct_checks() {
  DirectConfig c1;
  c1.bounds = {{0, 1}};
  c1.max_evals = 100;
  const auto r1 = direct_minimize([](const Eigen::VectorXd& x) { return (x[0] - 0.3) * (x[0] - 0.3); }, c1);
  const double err1 = std::abs(r1.best_point[0] - 0.3);

  auto f2 = [](double x, double y) {
    return (x - 0.2) * (x - 0.2) + (y - 0.7) * (y - 0.7) + 0.3 * std::sin(10 * x) * std::sin(10 * y);
  };
  double grid = HUGE_VAL;
  for (int i = 0; i < 400; ++i)
    for (int j = 0; j < 400; ++j) grid = std::min(grid, f2(i / 399.0, j / 399.0));
  DirectConfig c2;
  c2.bounds = {{0, 1}, {0, 1}};
  c2.max_evals = 200;
  const auto r2 = direct_minimize([&](const Eigen::VectorXd& p) { return f2(p[0], p[1]); }, c2);
  const double gap = r2.best_value - grid;
  const bool ok = err1 < 1e-3 && r1.trace.size() <= 100 && gap < 1e-2 && r2.trace.size() <= 200;
  return {ok, "|x-0.3| " + fmt("%.1e", err1) + " in " + std::to_string(r1.trace.size()) + " evals; 2-D gap " +
                  fmt("%.1e", gap) + " in " + std::to_string(r2.trace.size()) + " evals"};
}

// 7: DIRECT thresholding equals the exhaustive sweep, and zero false positives whenever attainable.
Outcome threshold_equivalence() {
  Rng rng(707);
  int zero_fp_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = oracle::random_scores(rng, 2 + static_cast<int>(rng.below(59)));
    const auto sweep = optimize_threshold(s, ThresholdMethod::kSweep);
    const auto direct = optimize_threshold(s, ThresholdMethod::kDirect);
    if (direct.counts != sweep.counts || direct.precision != sweep.precision || direct.recall != sweep.recall)
      return {false, "disagreement on set " + std::to_string(trial)};
    double max_normal = -1, max_abnormal = -1;
    for (const auto& x : s) {
      double& m = x.label ? max_normal : max_abnormal;
      m = std::max(m, x.score);
    }
    if (max_normal > max_abnormal) {
      ++zero_fp_cases;
      if (direct.counts.fp != 0 || direct.counts.tp == 0) return {false, "non-zero FP on set " + std::to_string(trial)};
    }
  }
  return {true, "200 sets agree; FP=0 on all " + std::to_string(zero_fp_cases) + " sets where attainable"};
}

// 8: CLAHE identities and monotone tile mappings.
Outcome clahe_checks() {
  Rng rng(808);
  for (int v : {0, 90, 255}) {
    const GrayImage img = GrayImage::Constant(48, 40, static_cast<std::uint8_t>(v));
    const GrayImage out = clahe(img);
    if (!(out == out(0, 0)).all()) return {false, "constant image not preserved"};
  }
  auto random_gray = [&](int h, int w) {
    GrayImage img(h, w);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<std::uint8_t>(rng.below(256));
    return img;
  };
  for (int i = 0; i < 10; ++i) {
    const GrayImage img = random_gray(25 + i, 31 + 2 * i);
    if (!(clahe(img, {1, 1, HUGE_VAL}) == oracle::equalize(img)).all()) return {false, "plain equalization mismatch"};
  }
  for (int i = 0; i < 50; ++i) {
    const GrayImage img = random_gray(30 + static_cast<int>(rng.below(50)), 30 + static_cast<int>(rng.below(50)));
    for (const auto& lut : clahe_tiles(img).mappings)
      for (int v = 1; v < 256; ++v)
        if (lut[v] < lut[v - 1]) return {false, "non-monotone mapping on image " + std::to_string(i)};
  }
  return {true, "constant identity, 1x1 equalization, 50 images monotone"};
}

RunConfig desk_run(const fs::path& manifest, const fs::path& out) {
  return load_run_config({}, {{"profile", "desk-scale"},
                              {"manifest", manifest.string()},
                              {"output_dir", out.string()},
                              {"seed", "2024"}});
}

// 9 and 10: the desk-scale cross-validation and its reproducibility.
std::pair<Outcome, Outcome> end_to_end(const fs::path& work) {
  fs::remove_all(work);
  SynthOptions so;
  so.n_patients = 100;
  so.size = 64;
  so.seed = 2024;
  const auto manifest = synth_dataset(so, work / "data");

  const auto t0 = Clock::now();
  const RunConfig cfg = desk_run(manifest, work / "run1");
  Outcome e2e;
  XvalReport rep;
  try {
    rep = run_xval(cfg);
  } catch (const std::exception& e) {
    return {{false, e.what()}, {false, "first run failed"}};
  }
  const double secs = seconds_since(t0);
  bool precise = true;
  for (const auto& f : rep.folds) precise = precise && f.precision && *f.precision == 1.0;
  e2e.secs = secs;
  e2e.ok = rep.folds.size() == 5 && secs < 600 && rep.average.roc_auc >= 0.90 && precise;
  e2e.detail = "64x64, batch " + std::to_string(cfg.train.batch_size) + ", " + std::to_string(cfg.train.epochs) +
               " epochs: mean ROC AUC " + fmt("%.4f", rep.average.roc_auc) + ", precision 1.0 on " +
               (precise ? "every fold" : "NOT every fold") + ", " + fmt("%.0f", secs) + " s";

  Outcome det;
  const auto t1 = Clock::now();
  try {
    run_xval(desk_run(manifest, work / "run2"));
    det.ok = slurp(work / "run1" / "report.json") == slurp(work / "run2" / "report.json");
    det.detail = det.ok ? "report JSON byte-identical across runs" : "report JSON differs between runs";
  } catch (const std::exception& e) {
    det = {false, e.what()};
  }
  det.secs = seconds_since(t1);
  return {e2e, det};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "cxr_acceptance";
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const Criterion fast[] = {
      {1, "gradient suite", 60, gradient_suite},
      {2, "dilation oracle", 10, dilation_oracle},
      {3, "Adam oracle", 1, adam_oracle},
      {4, "metrics fixtures", 1, metrics_fixtures},
      {5, "AUC oracle", 10, auc_oracle},
      {6, "DIRECT", 5, direct_checks},
      {7, "threshold equivalence", 30, threshold_equivalence},
      {8, "CLAHE", 30, clahe_checks},
  };
  int failures = 0;
  auto report = [&](int id, const char* name, const Outcome& o, double secs, double limit) {
    const bool ok = o.ok && secs < limit;
    failures += !ok;
    std::printf("%s criterion %d (%s): %s [%.2f s, limit %.0f s]\n", ok ? "PASS" : "FAIL", id, name, o.detail.c_str(),
                secs, limit);
    std::fflush(stdout);
  };
  for (const auto& c : fast) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(c.id, c.name, o, seconds_since(t0), c.limit_s);
  }
  const auto t0 = Clock::now();
  const auto [e2e, det] = end_to_end(work);
  const double both = seconds_since(t0);
  report(9, "end-to-end desk-scale run", e2e, e2e.secs, 600);
  report(10, "determinism", det, det.secs, 600);
  std::printf("end-to-end total %.0f s\n", both);
  return failures == 0 ? 0 : 1;
}
