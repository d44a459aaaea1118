#pragma once

#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

namespace cxr {

/// Row-major image plane: rows are y, columns are x.
template <typename Pixel>
using ImagePlane = Eigen::Array<Pixel, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 8-bit grayscale as ingested from disk.
using GrayImage = ImagePlane<std::uint8_t>;
/// Unit-interval intensities after normalization.
using UnitImage = ImagePlane<float>;

struct ClaheOptions {
  int tiles_x = 8;
  int tiles_y = 8;
  /// Multiple of the uniform bin height (tile area / 256). Infinity disables clipping.
  double clip_limit = 2.0;
};

/// Per-tile state behind a CLAHE pass, exposed for inspection.
struct ClaheTiles {
  int tile_width = 0;
  int tile_height = 0;
  int clip_count = 0;  // integer clip height per bin, 0 when clipping is off
  std::vector<std::array<int, 256>> histograms;  // after clipping + redistribution
  std::vector<std::array<std::uint8_t, 256>> mappings;
};

ClaheTiles clahe_tiles(const GrayImage& img, const ClaheOptions& opt = {});
GrayImage clahe(const GrayImage& img, const ClaheOptions& opt = {});

/// Bilinear resize with pixel-center alignment. Same-size resize is the identity.
template <typename Pixel>
ImagePlane<Pixel> resize(const ImagePlane<Pixel>& img, int height, int width) {
  if (img.size() == 0) throw ContractError("resize: empty image");
  if (height < 1 || width < 1)
    throw ContractError("resize: target size must be positive, got " + std::to_string(height) + "x" +
                        std::to_string(width));
  const int in_h = static_cast<int>(img.rows());
  const int in_w = static_cast<int>(img.cols());
  auto source = [](int out_idx, int in_n, int out_n) {
    const double s = (out_idx + 0.5) * in_n / out_n - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in_n - 1));
  };
  ImagePlane<Pixel> out(height, width);
  for (int y = 0; y < height; ++y) {
    const double sy = source(y, in_h, height);
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double fy = sy - y0;
    for (int x = 0; x < width; ++x) {
      const double sx = source(x, in_w, width);
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double fx = sx - x0;
      const double top = (1 - fx) * img(y0, x0) + fx * img(y0, x1);
      const double bottom = (1 - fx) * img(y1, x0) + fx * img(y1, x1);
      const double v = (1 - fy) * top + fy * bottom;
      if constexpr (std::is_integral_v<Pixel>) {
        out(y, x) = static_cast<Pixel>(std::clamp(std::lround(v), 0L,
                                                  static_cast<long>(std::numeric_limits<Pixel>::max())));
      } else {
        out(y, x) = static_cast<Pixel>(v);
      }
    }
  }
  return out;
}

/// Random affine augmentation. Ranges are enforced at construction.
class AugmentParams {
 public:
  static constexpr double kMaxRotationDeg = 10.0;
  static constexpr double kMaxShiftFrac = 0.1;
  static constexpr double kMinScale = 0.95;
  static constexpr double kMaxScale = 1.05;
  static constexpr double kApplyProbability = 0.8;

  AugmentParams() = default;
  AugmentParams(double rotation_deg, double shift_x, double shift_y, double scale, bool apply);

  double rotation_deg() const { return rotation_deg_; }
  double shift_x() const { return shift_x_; }
  double shift_y() const { return shift_y_; }
  double scale() const { return scale_; }
  bool apply() const { return apply_; }

  bool operator==(const AugmentParams&) const = default;

 private:
  double rotation_deg_ = 0.0;
  double shift_x_ = 0.0;
  double shift_y_ = 0.0;
  double scale_ = 1.0;
  bool apply_ = false;
};

AugmentParams draw_augment_params(Rng& rng);

/// Rotate about the center, then scale about the center, then shift, in one
/// bilinear resampling pass with zero fill. Identity when params.apply() is false.
UnitImage augment(const UnitImage& img, const AugmentParams& params);

inline UnitImage to_unit(const GrayImage& img) { return img.cast<float>() / 255.0f; }
GrayImage to_gray(const UnitImage& img);

/// Stacks equally sized images into an [N,1,H,W] tensor.
TensorF to_tensor(const std::vector<UnitImage>& images);

/// Reads 8-bit grayscale PNG or binary/ASCII PGM, chosen by file signature.
GrayImage read_image(const std::filesystem::path& path);
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
void write_png(const GrayImage& img, const std::filesystem::path& path);
/// Writes PNG or PGM depending on the extension.
void write_image(const GrayImage& img, const std::filesystem::path& path);

struct PreprocessOptions {
  ClaheOptions clahe;
  int height = 128;
  int width = 128;
};

/// CLAHE on the source resolution, then resize, then scale to [0,1].
UnitImage preprocess(const GrayImage& img, const PreprocessOptions& opt);

}  // namespace cxr
