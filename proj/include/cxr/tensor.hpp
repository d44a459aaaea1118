#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cxr {

using Shape = std::vector<int>;

/// Thrown when operands do not satisfy an operation's shape or value contract.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major n-dimensional array. The storage is an Eigen column
/// vector so whole-tensor arithmetic can use Eigen expressions directly.
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), data_(Vector::Constant(checked_numel(shape_), fill)) {}
  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::size_t>(data_.size()) != checked_numel(shape_))
      throw ContractError("tensor data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), Scalar(0)); }
  static Tensor constant(Shape shape, Scalar v) { return Tensor(std::move(shape), v); }
  static Tensor from(Shape shape, std::initializer_list<Scalar> values) {
    Vector v(static_cast<Eigen::Index>(values.size()));
    Eigen::Index i = 0;
    for (Scalar x : values) v[i++] = x;
    return Tensor(std::move(shape), std::move(v));
  }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return static_cast<std::size_t>(data_.size()); }

  Vector& array() { return data_; }
  const Vector& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }

  /// 4-D accessor for [N,C,H,W] tensors.
  Scalar& at(int n, int c, int h, int w) { return data_[offset4(n, c, h, w)]; }
  Scalar at(int n, int c, int h, int w) const { return data_[offset4(n, c, h, w)]; }

  Tensor reshaped(Shape shape) const {
    if (checked_numel(shape) != numel())
      throw ContractError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  bool all_finite() const { return data_.isFinite().all(); }

  /// Throws if any entry is NaN or infinite; `what` names the tensor in the message.
  void require_finite(const std::string& what) const {
    if (!all_finite()) throw std::runtime_error("non-finite value detected in " + what);
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && (data_ == other.data_).all();
  }

 private:
  static std::size_t checked_numel(const Shape& shape) {
    for (int d : shape)
      if (d <= 0) throw ContractError("tensor dimensions must be positive, got " + shape_str(shape));
    return shape_numel(shape);
  }

  Eigen::Index offset4(int n, int c, int h, int w) const {
    return ((static_cast<Eigen::Index>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  Shape shape_;
  Vector data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

inline std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

}  // namespace cxr
