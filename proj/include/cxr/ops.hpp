#pragma once

#include "cxr/autodiff.hpp"
#include "cxr/rng.hpp"

namespace cxr {

enum class Padding { kSame, kValid };

struct Conv2dOptions {
  int stride = 1;
  int dilation = 1;
  Padding padding = Padding::kSame;
};

/// Output extent and low-side padding for one spatial axis. "Same" padding is
/// symmetric with the odd extra pixel on the high side.
struct ConvAxis {
  int out = 0;
  int pad_lo = 0;
};
ConvAxis conv_axis(int in, int kernel, const Conv2dOptions& opt);

// Elementwise.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& x);
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& x, Shape shape);
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& x);

/// Cross-correlation of [N,C,H,W] with [F,C,kH,kW] plus per-filter bias.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                   const Conv2dOptions& opt = {});

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, int begin, int end);

/// x[N,D] · w[D,K] + b[K].
template <typename Scalar>
Var<Scalar> dense(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b);

/// Mean over the spatial axes: [N,C,H,W] -> [N,C].
template <typename Scalar> Var<Scalar> global_avg_pool(const Var<Scalar>& x);

/// Zeroes whole channels with probability `rate`; survivors scaled by 1/(1-rate).
template <typename Scalar>
Var<Scalar> spatial_dropout(const Var<Scalar>& x, double rate, Mode mode, Rng& rng);

/// Elementwise inverted dropout.
template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double rate, Mode mode, Rng& rng);

/// Adds i.i.d. N(0, sigma^2) in train mode. Gradient passes through unchanged.
template <typename Scalar>
Var<Scalar> gaussian_noise(const Var<Scalar>& x, double sigma, Mode mode, Rng& rng);

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy of probabilities p[N,1] against labels y[N,1] in {0,1}.
/// p is clipped to [eps, 1-eps]; the clip has zero gradient outside the band.
template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& p, const Tensor<Scalar>& y);

#define CXR_DECLARE_OPS(S)                                                                   \
  extern template Var<S> add(const Var<S>&, const Var<S>&);                                  \
  extern template Var<S> mul(const Var<S>&, const Var<S>&);                                  \
  extern template Var<S> relu(const Var<S>&);                                                \
  extern template Var<S> sigmoid(const Var<S>&);                                             \
  extern template Var<S> reshape(const Var<S>&, Shape);                                      \
  extern template Var<S> sum(const Var<S>&);                                                 \
  extern template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&,                 \
                                const Conv2dOptions&);                                       \
  extern template Var<S> concat_channels(const Var<S>&, const Var<S>&);                      \
  extern template Var<S> slice_channels(const Var<S>&, int, int);                            \
  extern template Var<S> dense(const Var<S>&, const Var<S>&, const Var<S>&);                 \
  extern template Var<S> global_avg_pool(const Var<S>&);                                     \
  extern template Var<S> spatial_dropout(const Var<S>&, double, Mode, Rng&);                 \
  extern template Var<S> dropout(const Var<S>&, double, Mode, Rng&);                         \
  extern template Var<S> gaussian_noise(const Var<S>&, double, Mode, Rng&);                  \
  extern template Var<S> bce_loss(const Var<S>&, const Tensor<S>&);

CXR_DECLARE_OPS(float)
CXR_DECLARE_OPS(double)
#undef CXR_DECLARE_OPS

}  // namespace cxr
