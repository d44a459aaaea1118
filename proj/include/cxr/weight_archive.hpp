#pragma once

#include "cxr/model.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace cxr {

// Archive layout (all integers little-endian):
//
//   offset 0   4 bytes   magic "NSW1"
//   offset 4   4 bytes   uint32 header length L
//   offset 8   L bytes   UTF-8 JSON header
//   offset 8+L           payload
//
// Header: {"version":1,"tensors":[{"name":s,"dtype":"f32"|"f64","shape":[...],
//          "offset":o,"nbytes":b}, ...]}
// where offset is relative to the payload start. Tensors are stored back to
// back in table order as little-endian IEEE-754 values, row-major.

inline constexpr std::uint32_t kArchiveVersion = 1;

class ArchiveError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ArchiveFormatError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};
class ArchiveVersionError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};
class MissingTensorError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};
class UnexpectedTensorError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};
class ShapeMismatchError : public ArchiveError {
 public:
  using ArchiveError::ArchiveError;
};

using AnyTensor = std::variant<TensorF, TensorD>;

struct NamedTensor {
  std::string name;
  AnyTensor tensor;
};

void write_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_archive(const std::filesystem::path& path);

template <typename Scalar>
Tensor<Scalar> as_scalar(const AnyTensor& t) {
  return std::visit([](const auto& v) { return v.template cast<Scalar>(); }, t);
}

template <typename Scalar>
void save_weights(const Model<Scalar>& model, const std::filesystem::path& path) {
  std::vector<NamedTensor> table;
  for (const auto& p : model.parameters()) table.push_back({p.name, p.var.value()});
  write_archive(path, table);
}

/// Loads every parameter of `model` from the archive. Each tensor must be
/// present exactly once with the parameter's shape; extras are rejected.
template <typename Scalar>
void load_weights(Model<Scalar>& model, const std::filesystem::path& path) {
  auto table = read_archive(path);
  for (const auto& entry : table) {
    bool known = false;
    for (const auto& p : model.parameters()) known = known || p.name == entry.name;
    if (!known) throw UnexpectedTensorError("archive tensor '" + entry.name + "' is not a model parameter");
  }
  for (auto& p : model.parameters()) {
    const NamedTensor* found = nullptr;
    for (const auto& entry : table)
      if (entry.name == p.name) found = &entry;
    if (!found) throw MissingTensorError("archive is missing tensor '" + p.name + "'");
    Tensor<Scalar> value = as_scalar<Scalar>(found->tensor);
    if (value.shape() != p.var.shape())
      throw ShapeMismatchError("tensor '" + p.name + "' has shape " + shape_str(value.shape()) +
                               " in archive but model expects " + shape_str(p.var.shape()));
    p.var.mutable_value() = std::move(value);
  }
}

/// Writes a feature tensor [N,C,h,w] as a single-entry archive named "features".
void export_features(const TensorF& features, const std::filesystem::path& path);

/// Reads a feature archive; the channel count must equal `expected_channels`.
TensorF import_features(const std::filesystem::path& path, int expected_channels);

}  // namespace cxr
