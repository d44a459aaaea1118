#include "cxr/imaging.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace cxr {

namespace {

int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Clips `hist` so that after uniform redistribution of the excess no bin
// exceeds `limit` + 1. The clip height is lowered until the excess fits.
void clip_histogram(std::array<int, 256>& hist, int limit) {
  auto excess_at = [&](int beta) {
    long long e = 0;
    for (int h : hist) e += std::max(h - beta, 0);
    return e;
  };
  if (excess_at(limit) == 0) return;
  // g(beta) = excess(beta) - 256*(limit - beta) is non-decreasing in beta.
  int lo = 0, hi = limit;
  if (excess_at(0) - 256LL * limit > 0) {
    lo = limit;  // total mass too large for this limit; single clipping pass
  } else {
    while (lo < hi) {
      const int mid = lo + (hi - lo + 1) / 2;
      if (excess_at(mid) - 256LL * (limit - mid) <= 0) lo = mid;
      else hi = mid - 1;
    }
  }
  const int beta = lo;
  const long long excess = excess_at(beta);
  for (int& h : hist) h = std::min(h, beta);
  const int batch = static_cast<int>(excess / 256);
  const int residual = static_cast<int>(excess % 256);
  for (int& h : hist) h += batch;
  if (residual > 0) {
    const int step = std::max(256 / residual, 1);
    for (int i = 0, given = 0; i < 256 && given < residual; i += step, ++given) ++hist[i];
  }
}

}  // namespace

ClaheTiles clahe_tiles(const GrayImage& img, const ClaheOptions& opt) {
  if (opt.tiles_x < 1 || opt.tiles_y < 1) throw ContractError("clahe: tile grid must be at least 1x1");
  if (!(opt.clip_limit > 0)) throw ContractError("clahe: clip limit must be positive");
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h < opt.tiles_y || w < opt.tiles_x)
    throw ContractError("clahe: image " + std::to_string(w) + "x" + std::to_string(h) +
                        " is smaller than the " + std::to_string(opt.tiles_x) + "x" +
                        std::to_string(opt.tiles_y) + " tile grid");

  ClaheTiles t;
  t.tile_height = (h + opt.tiles_y - 1) / opt.tiles_y;
  t.tile_width = (w + opt.tiles_x - 1) / opt.tiles_x;
  const int area = t.tile_height * t.tile_width;
  const bool clipping = std::isfinite(opt.clip_limit);
  if (clipping) t.clip_count = std::max(static_cast<int>(opt.clip_limit * area / 256.0), 1);

  const int n_tiles = opt.tiles_x * opt.tiles_y;
  t.histograms.assign(n_tiles, {});
  t.mappings.assign(n_tiles, {});
  for (int ty = 0; ty < opt.tiles_y; ++ty) {
    for (int tx = 0; tx < opt.tiles_x; ++tx) {
      auto& hist = t.histograms[ty * opt.tiles_x + tx];
      hist.fill(0);
      // Tiles past the image edge read reflected pixels so every tile has the same area.
      for (int y = ty * t.tile_height; y < (ty + 1) * t.tile_height; ++y)
        for (int x = tx * t.tile_width; x < (tx + 1) * t.tile_width; ++x)
          ++hist[img(reflect101(y, h), reflect101(x, w))];
      if (clipping) clip_histogram(hist, t.clip_count);
      auto& lut = t.mappings[ty * opt.tiles_x + tx];
      long long cdf = 0;
      for (int v = 0; v < 256; ++v) {
        cdf += hist[v];
        lut[v] = static_cast<std::uint8_t>(std::min<long long>(255, (255 * cdf * 2 + area) / (2 * area)));
      }
    }
  }
  return t;
}

GrayImage clahe(const GrayImage& img, const ClaheOptions& opt) {
  const ClaheTiles t = clahe_tiles(img, opt);
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());

  // Neighbouring tile indices and blend weight for one axis; coordinates
  // outside the outermost tile centers clamp to a single tile.
  struct Axis {
    int lo, hi;
    double frac;
  };
  auto axis = [](int p, int tile, int n_tiles) {
    const double u = (p + 0.5) / tile - 0.5;
    if (u <= 0) return Axis{0, 0, 0.0};
    if (u >= n_tiles - 1) return Axis{n_tiles - 1, n_tiles - 1, 0.0};
    const int lo = static_cast<int>(u);
    return Axis{lo, lo + 1, u - lo};
  };

  GrayImage out(h, w);
  for (int y = 0; y < h; ++y) {
    const Axis ay = axis(y, t.tile_height, opt.tiles_y);
    for (int x = 0; x < w; ++x) {
      const Axis ax = axis(x, t.tile_width, opt.tiles_x);
      const int v = img(y, x);
      auto lut = [&](int ty, int tx) { return static_cast<double>(t.mappings[ty * opt.tiles_x + tx][v]); };
      const double top = (1 - ax.frac) * lut(ay.lo, ax.lo) + ax.frac * lut(ay.lo, ax.hi);
      const double bottom = (1 - ax.frac) * lut(ay.hi, ax.lo) + ax.frac * lut(ay.hi, ax.hi);
      const double value = (1 - ay.frac) * top + ay.frac * bottom;
      out(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
    }
  }
  return out;
}

AugmentParams::AugmentParams(double rotation_deg, double shift_x, double shift_y, double scale,
                             bool apply)
    : rotation_deg_(rotation_deg), shift_x_(shift_x), shift_y_(shift_y), scale_(scale), apply_(apply) {
  if (!(std::abs(rotation_deg) <= kMaxRotationDeg))
    throw ContractError("augment: rotation " + std::to_string(rotation_deg) + " outside [-10,10] degrees");
  if (!(std::abs(shift_x) <= kMaxShiftFrac) || !(std::abs(shift_y) <= kMaxShiftFrac))
    throw ContractError("augment: shift outside [-0.1,0.1]");
  if (!(scale >= kMinScale && scale <= kMaxScale))
    throw ContractError("augment: scale " + std::to_string(scale) + " outside [0.95,1.05]");
}

AugmentParams draw_augment_params(Rng& rng) {
  // Fixed draw order keeps the stream aligned whether or not the transform applies.
  const bool apply = rng.bernoulli(AugmentParams::kApplyProbability);
  const double rotation = rng.uniform(-AugmentParams::kMaxRotationDeg, AugmentParams::kMaxRotationDeg);
  const double sx = rng.uniform(-AugmentParams::kMaxShiftFrac, AugmentParams::kMaxShiftFrac);
  const double sy = rng.uniform(-AugmentParams::kMaxShiftFrac, AugmentParams::kMaxShiftFrac);
  const double scale = rng.uniform(AugmentParams::kMinScale, AugmentParams::kMaxScale);
  return AugmentParams(rotation, sx, sy, scale, apply);
}

UnitImage augment(const UnitImage& img, const AugmentParams& params) {
  if (!params.apply()) return img;
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const double cx = (w - 1) / 2.0;
  const double cy = (h - 1) / 2.0;
  const double theta = params.rotation_deg() * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double tx = params.shift_x() * w;
  const double ty = params.shift_y() * h;
  const double inv_scale = 1.0 / params.scale();

  auto pixel = [&](int y, int x) -> double {
    return (x >= 0 && x < w && y >= 0 && y < h) ? static_cast<double>(img(y, x)) : 0.0;
  };

  UnitImage out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Invert p' = scale * R (p - c) + c + t.
      const double ux = (x - cx - tx) * inv_scale;
      const double uy = (y - cy - ty) * inv_scale;
      const double sxp = c * ux + s * uy + cx;
      const double syp = -s * ux + c * uy + cy;
      const double fx0 = std::floor(sxp);
      const double fy0 = std::floor(syp);
      const int x0 = static_cast<int>(fx0);
      const int y0 = static_cast<int>(fy0);
      const double fx = sxp - fx0;
      const double fy = syp - fy0;
      double v = (1 - fx) * (1 - fy) * pixel(y0, x0);
      if (fx > 0) v += fx * (1 - fy) * pixel(y0, x0 + 1);
      if (fy > 0) v += (1 - fx) * fy * pixel(y0 + 1, x0);
      if (fx > 0 && fy > 0) v += fx * fy * pixel(y0 + 1, x0 + 1);
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

GrayImage to_gray(const UnitImage& img) {
  return (img * 255.0f).round().max(0.0f).min(255.0f).cast<std::uint8_t>();
}

TensorF to_tensor(const std::vector<UnitImage>& images) {
  if (images.empty()) throw ContractError("to_tensor: no images");
  const int h = static_cast<int>(images[0].rows());
  const int w = static_cast<int>(images[0].cols());
  TensorF t({static_cast<int>(images.size()), 1, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].rows() != h || images[i].cols() != w)
      throw ContractError("to_tensor: image " + std::to_string(i) + " has a different size");
    std::copy_n(images[i].data(), static_cast<std::size_t>(h) * w, t.data() + i * h * w);
  }
  return t;
}

UnitImage preprocess(const GrayImage& img, const PreprocessOptions& opt) {
  return resize(to_unit(clahe(img, opt.clahe)), opt.height, opt.width);
}

// ---------------------------------------------------------------------------
// File I/O

namespace {

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image '" + path.string() + "'");
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

GrayImage parse_pgm(const std::string& bytes, const std::filesystem::path& path) {
  std::istringstream in(bytes);
  auto next_token = [&]() {
    std::string tok;
    while (in >> std::ws && in.peek() == '#') std::getline(in, tok);
    in >> tok;
    return tok;
  };
  const std::string magic = next_token();
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw std::runtime_error("malformed PGM header in '" + path.string() + "'");
  }
  if (w < 1 || h < 1 || maxval < 1 || maxval > 255)
    throw std::runtime_error("unsupported PGM (need 8-bit) in '" + path.string() + "'");
  GrayImage img(h, w);
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::string pixels(static_cast<std::size_t>(w) * h, '\0');
    in.read(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(pixels.size()))
      throw std::runtime_error("truncated PGM data in '" + path.string() + "'");
    std::copy(pixels.begin(), pixels.end(), reinterpret_cast<char*>(img.data()));
  } else {
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      int v = 0;
      if (!(in >> v) || v < 0 || v > maxval) throw std::runtime_error("bad ASCII PGM pixel in '" + path.string() + "'");
      img.data()[i] = static_cast<std::uint8_t>(v);
    }
  }
  if (maxval != 255) {
    for (Eigen::Index i = 0; i < img.size(); ++i)
      img.data()[i] = static_cast<std::uint8_t>((img.data()[i] * 255 + maxval / 2) / maxval);
  }
  return img;
}

struct PngReadState {
  const std::string* bytes;
  std::size_t pos;
};

void png_read_from_string(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes->data() + st->pos, n);
  st->pos += n;
}

GrayImage parse_png(const std::string& bytes, const std::filesystem::path& path) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng initialization failed");
  GrayImage img;
  PngReadState st{&bytes, 0};
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG '" + path.string() + "'");
  }
  png_set_read_fn(png, &st, png_read_from_string);
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE)
    png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  img.resize(h, w);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = img.data() + static_cast<std::ptrdiff_t>(y) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t n) {
  static_cast<std::string*>(png_get_io_ptr(png))->append(reinterpret_cast<const char*>(data), n);
}

void png_flush_noop(png_structp) {}

void write_file(const std::string& bytes, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path) {
  const std::string bytes = read_bytes(path);
  if (bytes.size() >= 8 && png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) == 0)
    return parse_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '2'))
    return parse_pgm(bytes, path);
  throw std::runtime_error("'" + path.string() + "' is neither PNG nor PGM");
}

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  std::string bytes = "P5\n" + std::to_string(img.cols()) + " " + std::to_string(img.rows()) + "\n255\n";
  bytes.append(reinterpret_cast<const char*>(img.data()), static_cast<std::size_t>(img.size()));
  write_file(bytes, path);
}

void write_png(const GrayImage& img, const std::filesystem::path& path) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng initialization failed");
  std::string bytes;
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.rows()));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG '" + path.string() + "'");
  }
  png_set_write_fn(png, &bytes, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.cols()), static_cast<png_uint_32>(img.rows()), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    rows[y] = const_cast<png_bytep>(img.data() + y * img.cols());
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  write_file(bytes, path);
}

void write_image(const GrayImage& img, const std::filesystem::path& path) {
  if (path.extension() == ".png") write_png(img, path);
  else write_pgm(img, path);
}

}  // namespace cxr
