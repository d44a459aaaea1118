#include "cxr/ops.hpp"

#include <algorithm>
#include <cmath>

namespace cxr {

namespace {

template <typename Scalar>
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using MatMap = Eigen::Map<RowMat<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMat<Scalar>>;

void require_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b)
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank)
    throw ContractError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                        ", got " + shape_str(s));
}

void require_rate(double rate, const char* op) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ContractError(std::string(op) + ": rate must be in [0,1), got " + std::to_string(rate));
}

struct ConvGeometry {
  int n, c, h, w;
  int f, kh, kw;
  int stride, dilation;
  ConvAxis ay, ax;
  int rows() const { return c * kh * kw; }
  int cols() const { return ay.out * ax.out; }
};

template <typename Scalar>
void im2col(const Scalar* img, const ConvGeometry& g, RowMat<Scalar>& cols) {
  cols.setZero(g.rows(), g.cols());
  for (int ch = 0; ch < g.c; ++ch) {
    const Scalar* plane = img + static_cast<std::ptrdiff_t>(ch) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        Scalar* row = cols.row((ch * g.kh + i) * g.kw + j).data();
        for (int oy = 0; oy < g.ay.out; ++oy) {
          const int y = oy * g.stride - g.ay.pad_lo + i * g.dilation;
          if (y < 0 || y >= g.h) continue;
          for (int ox = 0; ox < g.ax.out; ++ox) {
            const int x = ox * g.stride - g.ax.pad_lo + j * g.dilation;
            if (x >= 0 && x < g.w) row[oy * g.ax.out + ox] = plane[y * g.w + x];
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const RowMat<Scalar>& cols, const ConvGeometry& g, Scalar* img) {
  for (int ch = 0; ch < g.c; ++ch) {
    Scalar* plane = img + static_cast<std::ptrdiff_t>(ch) * g.h * g.w;
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const Scalar* row = cols.row((ch * g.kh + i) * g.kw + j).data();
        for (int oy = 0; oy < g.ay.out; ++oy) {
          const int y = oy * g.stride - g.ay.pad_lo + i * g.dilation;
          if (y < 0 || y >= g.h) continue;
          for (int ox = 0; ox < g.ax.out; ++ox) {
            const int x = ox * g.stride - g.ax.pad_lo + j * g.dilation;
            if (x >= 0 && x < g.w) plane[y * g.w + x] += row[oy * g.ax.out + ox];
          }
        }
      }
    }
  }
}

}  // namespace

ConvAxis conv_axis(int in, int kernel, const Conv2dOptions& opt) {
  if (kernel < 1 || opt.dilation < 1 || opt.stride < 1)
    throw ContractError("conv2d: kernel, stride and dilation must be >= 1");
  const int extent = (kernel - 1) * opt.dilation + 1;
  ConvAxis axis;
  if (opt.padding == Padding::kValid) {
    if (extent > in)
      throw ContractError("conv2d: effective kernel extent " + std::to_string(extent) +
                          " exceeds input extent " + std::to_string(in));
    axis.out = (in - extent) / opt.stride + 1;
    axis.pad_lo = 0;
  } else {
    axis.out = (in + opt.stride - 1) / opt.stride;
    const int pad_total = std::max((axis.out - 1) * opt.stride + extent - in, 0);
    if (extent > in + pad_total)
      throw ContractError("conv2d: effective kernel extent exceeds padded input");
    axis.pad_lo = pad_total / 2;
  }
  return axis;
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Scalar> out(a.shape(), a.value().array() + b.value().array());
  return make_op<Scalar>(std::move(out), {a, b}, "add", [](Node<Scalar>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad_ref().array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Scalar> out(a.shape(), a.value().array() * b.value().array());
  return make_op<Scalar>(std::move(out), {a, b}, "mul", [](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // Read both values before accumulating: pa and pb may be the same node.
    const auto ga = (self.grad.array() * pb.value.array()).eval();
    const auto gb = (self.grad.array() * pa.value.array()).eval();
    if (pa.requires_grad) pa.grad_ref().array() += ga;
    if (pb.requires_grad) pb.grad_ref().array() += gb;
  });
}

template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& x) {
  Tensor<Scalar> out(x.shape(), x.value().array().max(Scalar(0)));
  return make_op<Scalar>(std::move(out), {x}, "relu", [](Node<Scalar>& self) {
    auto& p = *self.parents[0];
    p.grad_ref().array() += (p.value.array() > Scalar(0)).select(self.grad.array(), Scalar(0));
  });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& x) {
  const auto& in = x.value().array();
  typename Tensor<Scalar>::Vector y(in.size());
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    const Scalar v = in[i];
    if (v >= 0) {
      y[i] = Scalar(1) / (Scalar(1) + std::exp(-v));
    } else {
      const Scalar e = std::exp(v);
      y[i] = e / (Scalar(1) + e);
    }
  }
  Tensor<Scalar> out(x.shape(), std::move(y));
  return make_op<Scalar>(std::move(out), {x}, "sigmoid", [](Node<Scalar>& self) {
    const auto& s = self.value.array();
    self.parents[0]->grad_ref().array() += self.grad.array() * s * (Scalar(1) - s);
  });
}

template <typename Scalar>
Var<Scalar> reshape(const Var<Scalar>& x, Shape shape) {
  Tensor<Scalar> out = x.value().reshaped(std::move(shape));
  return make_op<Scalar>(std::move(out), {x}, "reshape", [](Node<Scalar>& self) {
    self.parents[0]->grad_ref().array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  Tensor<Scalar> out({1}, x.value().array().sum());
  return make_op<Scalar>(std::move(out), {x}, "sum", [](Node<Scalar>& self) {
    self.parents[0]->grad_ref().array() += self.grad[0];
  });
}

template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& input, const Var<Scalar>& kernel, const Var<Scalar>& bias,
                   const Conv2dOptions& opt) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  if (ks[1] != is[1])
    throw ContractError("conv2d: kernel expects " + std::to_string(ks[1]) +
                        " input channels but input " + shape_str(is) + " has " +
                        std::to_string(is[1]));
  if (bias.shape() != Shape{ks[0]})
    throw ContractError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                        std::to_string(ks[0]) + " filters");

  ConvGeometry g{is[0], is[1], is[2], is[3], ks[0], ks[2], ks[3], opt.stride, opt.dilation,
                 conv_axis(is[2], ks[2], opt), conv_axis(is[3], ks[3], opt)};

  Tensor<Scalar> out({g.n, g.f, g.ay.out, g.ax.out});
  ConstMatMap<Scalar> kmat(kernel.value().data(), g.f, g.rows());
  const auto& b = bias.value().array().matrix();
  RowMat<Scalar> cols;
  const std::ptrdiff_t in_stride = static_cast<std::ptrdiff_t>(g.c) * g.h * g.w;
  const std::ptrdiff_t out_stride = static_cast<std::ptrdiff_t>(g.f) * g.cols();
  for (int n = 0; n < g.n; ++n) {
    im2col(input.value().data() + n * in_stride, g, cols);
    MatMap<Scalar> o(out.data() + n * out_stride, g.f, g.cols());
    o.noalias() = kmat * cols;
    o.colwise() += b;
  }

  return make_op<Scalar>(std::move(out), {input, kernel, bias}, "conv2d", [g](Node<Scalar>& self) {
    auto& in = *self.parents[0];
    auto& k = *self.parents[1];
    auto& bn = *self.parents[2];
    ConstMatMap<Scalar> kmat(k.value.data(), g.f, g.rows());
    RowMat<Scalar> cols;
    RowMat<Scalar> dcols;
    RowMat<Scalar> dk = RowMat<Scalar>::Zero(g.f, g.rows());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> db = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(g.f);
    const std::ptrdiff_t in_stride = static_cast<std::ptrdiff_t>(g.c) * g.h * g.w;
    const std::ptrdiff_t out_stride = static_cast<std::ptrdiff_t>(g.f) * g.cols();
    Scalar* dx = in.requires_grad ? in.grad_ref().data() : nullptr;
    for (int n = 0; n < g.n; ++n) {
      ConstMatMap<Scalar> dout(self.grad.data() + n * out_stride, g.f, g.cols());
      if (k.requires_grad) {
        im2col(in.value.data() + n * in_stride, g, cols);
        dk.noalias() += dout * cols.transpose();
      }
      if (bn.requires_grad) db += dout.rowwise().sum();
      if (dx) {
        dcols.noalias() = kmat.transpose() * dout;
        col2im_add(dcols, g, dx + n * in_stride);
      }
    }
    if (k.requires_grad) MatMap<Scalar>(k.grad_ref().data(), g.f, g.rows()) += dk;
    if (bn.requires_grad) bn.grad_ref().array() += db.array();
  });
}

template <typename Scalar>
Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b) {
  require_rank(a.shape(), 4, "concat_channels", "first input");
  require_rank(b.shape(), 4, "concat_channels", "second input");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3])
    throw ContractError("concat_channels: N,H,W mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  const int n = sa[0], ca = sa[1], cb = sb[1];
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(sa[2]) * sa[3];
  Tensor<Scalar> out({n, ca + cb, sa[2], sa[3]});
  for (int i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * plane, ca * plane, out.data() + i * (ca + cb) * plane);
    std::copy_n(b.value().data() + i * cb * plane, cb * plane,
                out.data() + (i * (ca + cb) + ca) * plane);
  }
  return make_op<Scalar>(std::move(out), {a, b}, "concat_channels",
                         [n, ca, cb, plane](Node<Scalar>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    for (int i = 0; i < n; ++i) {
      const Scalar* g = self.grad.data() + i * (ca + cb) * plane;
      if (pa.requires_grad) {
        Scalar* d = pa.grad_ref().data() + i * ca * plane;
        for (std::ptrdiff_t j = 0; j < ca * plane; ++j) d[j] += g[j];
      }
      if (pb.requires_grad) {
        Scalar* d = pb.grad_ref().data() + i * cb * plane;
        for (std::ptrdiff_t j = 0; j < cb * plane; ++j) d[j] += g[ca * plane + j];
      }
    }
  });
}

template <typename Scalar>
Var<Scalar> slice_channels(const Var<Scalar>& x, int begin, int end) {
  require_rank(x.shape(), 4, "slice_channels", "input");
  const Shape& s = x.shape();
  if (begin < 0 || end > s[1] || begin >= end)
    throw ContractError("slice_channels: range [" + std::to_string(begin) + "," +
                        std::to_string(end) + ") invalid for " + shape_str(s));
  const int n = s[0], c = s[1], width = end - begin;
  const std::ptrdiff_t plane = static_cast<std::ptrdiff_t>(s[2]) * s[3];
  Tensor<Scalar> out({n, width, s[2], s[3]});
  for (int i = 0; i < n; ++i)
    std::copy_n(x.value().data() + (i * c + begin) * plane, width * plane,
                out.data() + i * width * plane);
  return make_op<Scalar>(std::move(out), {x}, "slice_channels",
                         [n, c, begin, width, plane](Node<Scalar>& self) {
    Scalar* d = self.parents[0]->grad_ref().data();
    for (int i = 0; i < n; ++i)
      for (std::ptrdiff_t j = 0; j < width * plane; ++j)
        d[(i * c + begin) * plane + j] += self.grad.data()[i * width * plane + j];
  });
}

template <typename Scalar>
Var<Scalar> dense(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& b) {
  require_rank(x.shape(), 2, "dense", "input");
  require_rank(w.shape(), 2, "dense", "weight");
  const int n = x.shape()[0], d = x.shape()[1], k = w.shape()[1];
  if (w.shape()[0] != d)
    throw ContractError("dense: input " + shape_str(x.shape()) + " incompatible with weight " +
                        shape_str(w.shape()));
  if (b.shape() != Shape{k})
    throw ContractError("dense: bias shape " + shape_str(b.shape()) + " expected [" +
                        std::to_string(k) + "]");
  Tensor<Scalar> out({n, k});
  MatMap<Scalar> o(out.data(), n, k);
  o.noalias() = ConstMatMap<Scalar>(x.value().data(), n, d) * ConstMatMap<Scalar>(w.value().data(), d, k);
  o.rowwise() += b.value().array().matrix().transpose();
  return make_op<Scalar>(std::move(out), {x, w, b}, "dense", [n, d, k](Node<Scalar>& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    ConstMatMap<Scalar> dy(self.grad.data(), n, k);
    if (px.requires_grad)
      MatMap<Scalar>(px.grad_ref().data(), n, d).noalias() +=
          dy * ConstMatMap<Scalar>(pw.value.data(), d, k).transpose();
    if (pw.requires_grad)
      MatMap<Scalar>(pw.grad_ref().data(), d, k).noalias() +=
          ConstMatMap<Scalar>(px.value.data(), n, d).transpose() * dy;
    if (pb.requires_grad) pb.grad_ref().array() += dy.colwise().sum().transpose().array();
  });
}

template <typename Scalar>
Var<Scalar> global_avg_pool(const Var<Scalar>& x) {
  require_rank(x.shape(), 4, "global_avg_pool", "input");
  const Shape& s = x.shape();
  const int rows = s[0] * s[1];
  const int plane = s[2] * s[3];
  Tensor<Scalar> out({s[0], s[1]});
  MatMap<Scalar>(out.data(), rows, 1) =
      ConstMatMap<Scalar>(x.value().data(), rows, plane).rowwise().mean();
  return make_op<Scalar>(std::move(out), {x}, "global_avg_pool", [rows, plane](Node<Scalar>& self) {
    MatMap<Scalar> d(self.parents[0]->grad_ref().data(), rows, plane);
    ConstMatMap<Scalar> g(self.grad.data(), rows, 1);
    d.colwise() += g.col(0) / Scalar(plane);
  });
}

template <typename Scalar>
Var<Scalar> spatial_dropout(const Var<Scalar>& x, double rate, Mode mode, Rng& rng) {
  require_rate(rate, "spatial_dropout");
  require_rank(x.shape(), 4, "spatial_dropout", "input");
  if (mode == Mode::kEval || rate == 0.0) return x;
  const Shape& s = x.shape();
  const int maps = s[0] * s[1];
  const int plane = s[2] * s[3];
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mask(maps);
  for (int i = 0; i < maps; ++i) mask[i] = rng.bernoulli(rate) ? Scalar(0) : scale;
  Tensor<Scalar> out(s);
  MatMap<Scalar>(out.data(), maps, plane) =
      ConstMatMap<Scalar>(x.value().data(), maps, plane).array().colwise() * mask.array();
  return make_op<Scalar>(std::move(out), {x}, "spatial_dropout",
                         [mask, maps, plane](Node<Scalar>& self) {
    MatMap<Scalar>(self.parents[0]->grad_ref().data(), maps, plane).array() +=
        ConstMatMap<Scalar>(self.grad.data(), maps, plane).array().colwise() * mask.array();
  });
}

template <typename Scalar>
Var<Scalar> dropout(const Var<Scalar>& x, double rate, Mode mode, Rng& rng) {
  require_rate(rate, "dropout");
  if (mode == Mode::kEval || rate == 0.0) return x;
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  typename Tensor<Scalar>::Vector mask(static_cast<Eigen::Index>(x.value().numel()));
  for (Eigen::Index i = 0; i < mask.size(); ++i) mask[i] = rng.bernoulli(rate) ? Scalar(0) : scale;
  Tensor<Scalar> out(x.shape(), x.value().array() * mask);
  return make_op<Scalar>(std::move(out), {x}, "dropout", [mask](Node<Scalar>& self) {
    self.parents[0]->grad_ref().array() += self.grad.array() * mask;
  });
}

template <typename Scalar>
Var<Scalar> gaussian_noise(const Var<Scalar>& x, double sigma, Mode mode, Rng& rng) {
  if (!(sigma >= 0.0))
    throw ContractError("gaussian_noise: sigma must be >= 0, got " + std::to_string(sigma));
  if (mode == Mode::kEval || sigma == 0.0) return x;
  Tensor<Scalar> out = x.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += Scalar(sigma * rng.normal());
  return make_op<Scalar>(std::move(out), {x}, "gaussian_noise", [](Node<Scalar>& self) {
    self.parents[0]->grad_ref().array() += self.grad.array();
  });
}

template <typename Scalar>
Var<Scalar> bce_loss(const Var<Scalar>& p, const Tensor<Scalar>& y) {
  require_same_shape(p.shape(), y.shape(), "bce_loss");
  for (std::size_t i = 0; i < y.numel(); ++i)
    if (y[i] != Scalar(0) && y[i] != Scalar(1))
      throw ContractError("bce_loss: label at index " + std::to_string(i) + " is " +
                          std::to_string(static_cast<double>(y[i])) + ", expected 0 or 1");
  const Scalar lo = Scalar(kBceEpsilon);
  const Scalar hi = Scalar(1) - Scalar(kBceEpsilon);
  const auto pc = p.value().array().max(lo).min(hi).eval();
  const auto& ya = y.array();
  const Scalar n = Scalar(y.numel());
  const Scalar loss =
      -(ya * pc.log() + (Scalar(1) - ya) * (Scalar(1) - pc).log()).sum() / n;
  return make_op<Scalar>(Tensor<Scalar>({1}, loss), {p}, "bce_loss",
                         [y, lo, hi, n](Node<Scalar>& self) {
    auto& pp = *self.parents[0];
    const auto& pa = pp.value.array();
    const auto& ya = y.array();
    const auto inside = (pa >= lo && pa <= hi);
    const auto g = ((Scalar(1) - ya) / (Scalar(1) - pa) - ya / pa) * (self.grad[0] / n);
    pp.grad_ref().array() += inside.select(g, Scalar(0));
  });
}

#define CXR_INSTANTIATE_OPS(S)                                                                 \
  template Var<S> add(const Var<S>&, const Var<S>&);                                           \
  template Var<S> mul(const Var<S>&, const Var<S>&);                                           \
  template Var<S> relu(const Var<S>&);                                                         \
  template Var<S> sigmoid(const Var<S>&);                                                      \
  template Var<S> reshape(const Var<S>&, Shape);                                               \
  template Var<S> sum(const Var<S>&);                                                          \
  template Var<S> conv2d(const Var<S>&, const Var<S>&, const Var<S>&, const Conv2dOptions&);   \
  template Var<S> concat_channels(const Var<S>&, const Var<S>&);                               \
  template Var<S> slice_channels(const Var<S>&, int, int);                                     \
  template Var<S> dense(const Var<S>&, const Var<S>&, const Var<S>&);                          \
  template Var<S> global_avg_pool(const Var<S>&);                                              \
  template Var<S> spatial_dropout(const Var<S>&, double, Mode, Rng&);                          \
  template Var<S> dropout(const Var<S>&, double, Mode, Rng&);                                  \
  template Var<S> gaussian_noise(const Var<S>&, double, Mode, Rng&);                           \
  template Var<S> bce_loss(const Var<S>&, const Tensor<S>&);

CXR_INSTANTIATE_OPS(float)
CXR_INSTANTIATE_OPS(double)

}  // namespace cxr
