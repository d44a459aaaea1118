#pragma once
// Independent reference implementations used to check the library.

#include "cxr/imaging.hpp"
#include "cxr/model.hpp"
#include "cxr/metrics.hpp"
#include "cxr/ops.hpp"
#include "cxr/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using cxr::Tensor;
using cxr::TensorD;
using cxr::Var;

inline TensorD random_tensor(cxr::Shape shape, cxr::Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

template <typename Scalar>
Tensor<Scalar> random_tensor_as(cxr::Shape shape, cxr::Rng& rng) {
  return random_tensor(std::move(shape), rng).template cast<Scalar>();
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
inline double rel_error(const TensorD& a, const TensorD& b) {
  const double scale = std::max(a.array().matrix().norm(), b.array().matrix().norm());
  if (scale == 0.0) return 0.0;
  return (a.array() - b.array()).matrix().norm() / scale;
}

using Graph = std::function<Var<double>(const std::vector<Var<double>>&)>;

/// Projects the graph output onto a fixed random direction so every output
/// entry contributes, then compares reverse-mode gradients of every input with
/// central differences. Returns the worst relative error over inputs.
inline double grad_check(const Graph& graph, const std::vector<TensorD>& inputs, double h = 1e-5,
                         std::uint64_t seed = 99) {
  auto loss_of = [&](const std::vector<Var<double>>& vars, const TensorD& dir) {
    const auto out = graph(vars);
    return cxr::sum(cxr::mul(out, Var<double>(dir)));
  };
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.emplace_back(t, true);
  const auto probe = graph(vars);
  cxr::Rng rng(seed);
  const TensorD dir = random_tensor(probe.shape(), rng);
  const auto loss = loss_of(vars, dir);
  cxr::backward(loss);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    TensorD numeric(inputs[k].shape());
    for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
      auto eval = [&](double delta) {
        std::vector<Var<double>> v;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
          TensorD t = inputs[j];
          if (j == k) t[i] += delta;
          v.emplace_back(t, false);
        }
        return loss_of(v, dir).value()[0];
      };
      numeric[i] = (eval(h) - eval(-h)) / (2 * h);
    }
    worst = std::max(worst, rel_error(vars[k].grad(), numeric));
  }
  return worst;
}

/// Central differences over (a strided subset of) every parameter of a
/// double model, with stochastic layers replayed from a fixed seed. Returns
/// the worst per-parameter relative error.
inline double model_grad_error(cxr::Model<double>& model, const TensorD& x, const TensorD& y,
                               std::size_t max_entries) {
  auto loss_value = [&] {
    cxr::Rng rng(77);
    return cxr::bce_loss(cxr::forward(model, Var<double>(x), cxr::Mode::kTrain, rng), y);
  };
  model.zero_grad();
  cxr::backward(loss_value());
  double worst = 0.0;
  const double h = 1e-5;
  for (auto& p : model.parameters()) {
    const TensorD analytic = p.var.grad();
    TensorD numeric(analytic.shape()), sampled(analytic.shape());
    const std::size_t n = p.var.value().numel();
    const std::size_t step = n > max_entries ? n / max_entries : 1;
    for (std::size_t i = 0; i < n; i += step) {
      double& w = p.var.mutable_value()[i];
      const double saved = w;
      w = saved + h;
      const double up = loss_value().value()[0];
      w = saved - h;
      const double down = loss_value().value()[0];
      w = saved;
      numeric[i] = (up - down) / (2 * h);
      sampled[i] = analytic[i];
    }
    worst = std::max(worst, rel_error(sampled, numeric));
  }
  return worst;
}

/// "Same" padding split computed from first principles.
inline std::pair<int, int> same_geometry(int in, int k, int stride, int dilation) {
  const int out = (in + stride - 1) / stride;
  const int span = (k - 1) * dilation + 1;
  const int total = std::max((out - 1) * stride + span - in, 0);
  return {out, total / 2};
}

/// Direct sliding-window convolution, kernel [F,C,kh,kw], input [N,C,H,W].
template <typename Scalar>
Tensor<Scalar> conv_reference(const Tensor<Scalar>& x, const Tensor<Scalar>& w, const Tensor<Scalar>& b,
                              int stride, int dilation, bool same) {
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int oh, ow, ph = 0, pw = 0;
  if (same) {
    std::tie(oh, ph) = same_geometry(H, kh, stride, dilation);
    std::tie(ow, pw) = same_geometry(W, kw, stride, dilation);
  } else {
    oh = (H - (kh - 1) * dilation - 1) / stride + 1;
    ow = (W - (kw - 1) * dilation - 1) / stride + 1;
  }
  Tensor<Scalar> out({N, F, oh, ow});
  for (int n = 0; n < N; ++n)
    for (int f = 0; f < F; ++f)
      for (int y = 0; y < oh; ++y)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = b[f];
          for (int c = 0; c < C; ++c)
            for (int i = 0; i < kh; ++i)
              for (int j = 0; j < kw; ++j) {
                const int iy = y * stride - ph + i * dilation;
                const int ix = xx * stride - pw + j * dilation;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(w.at(f, c, i, j)) * x.at(n, c, iy, ix);
              }
          out.at(n, f, y, xx) = static_cast<Scalar>(acc);
        }
  return out;
}

/// Kernel with (d-1) zeros inserted between taps: k x k becomes ((k-1)d+1) square.
template <typename Scalar>
Tensor<Scalar> zero_insert(const Tensor<Scalar>& w, int d) {
  const int F = w.dim(0), C = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  Tensor<Scalar> out({F, C, (kh - 1) * d + 1, (kw - 1) * d + 1});
  for (int f = 0; f < F; ++f)
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < kh; ++i)
        for (int j = 0; j < kw; ++j) out.at(f, c, i * d, j * d) = w.at(f, c, i, j);
  return out;
}

/// Probability that a random Normal outranks a random Abnormal, ties count half.
inline double rank_auc(const std::vector<cxr::ScoredSample>& s) {
  double wins = 0.0;
  long pairs = 0;
  for (const auto& a : s)
    for (const auto& b : s)
      if (a.label == 1 && b.label == 0) {
        ++pairs;
        wins += a.score > b.score ? 1.0 : (a.score == b.score ? 0.5 : 0.0);
      }
  return wins / static_cast<double>(pairs);
}

inline cxr::ConfusionCounts tally(const std::vector<cxr::ScoredSample>& s, double t) {
  cxr::ConfusionCounts c;
  for (const auto& x : s) {
    const bool normal_pred = x.score >= t;
    if (normal_pred && x.label == 1) ++c.tp;
    if (normal_pred && x.label == 0) ++c.fp;
    if (!normal_pred && x.label == 0) ++c.tn;
    if (!normal_pred && x.label == 1) ++c.fn;
  }
  return c;
}

/// Global histogram equalization: v -> round(255 * cdf(v) / N).
inline cxr::GrayImage equalize(const cxr::GrayImage& img) {
  std::array<long, 256> hist{};
  for (Eigen::Index i = 0; i < img.size(); ++i) ++hist[img.data()[i]];
  std::array<std::uint8_t, 256> lut{};
  long cdf = 0;
  for (int v = 0; v < 256; ++v) {
    cdf += hist[v];
    lut[v] = static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(cdf) / static_cast<double>(img.size())));
  }
  cxr::GrayImage out(img.rows(), img.cols());
  for (Eigen::Index i = 0; i < img.size(); ++i) out.data()[i] = lut[img.data()[i]];
  return out;
}

/// Textbook Adam on a scalar, written out independently.
struct ScalarAdam {
  double lr, b1, b2, eps, m = 0, v = 0;
  int t = 0;
  double step(double theta, double g) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

/// Scores drawn from a small grid so ties are common.
inline std::vector<cxr::ScoredSample> random_scores(cxr::Rng& rng, int n, bool both_classes = true) {
  std::vector<cxr::ScoredSample> s;
  for (;;) {
    s.clear();
    const int levels = 2 + static_cast<int>(rng.below(20));
    for (int i = 0; i < n; ++i)
      s.push_back({static_cast<double>(rng.below(levels + 1)) / levels, rng.bernoulli(0.5) ? 1 : 0});
    int normals = 0;
    for (const auto& x : s) normals += x.label;
    if (!both_classes || (normals > 0 && normals < n)) return s;
  }
}

}  // namespace oracle
