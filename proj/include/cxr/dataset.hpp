#pragma once

#include "cxr/autodiff.hpp"
#include "cxr/imaging.hpp"
#include "cxr/rng.hpp"
#include "cxr/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace cxr {

/// Normal is the positive class.
inline constexpr int kNormal = 1;
inline constexpr int kAbnormal = 0;

struct Sample {
  std::string image_path;
  std::string patient_id;
  int label = kAbnormal;

  bool operator==(const Sample&) const = default;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses "normal"/"abnormal" (any case) or "1"/"0".
int parse_label(const std::string& token);

/// CSV with header exactly `image_path,patient_id,label`. Relative image
/// paths are resolved against the manifest's directory.
std::vector<Sample> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::vector<Sample>& samples, const std::filesystem::path& path);

std::vector<std::string> unique_patients(const std::vector<Sample>& samples);

struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train_patients;  // sorted
  std::vector<std::string> test_patients;   // sorted

  bool operator==(const FoldSplit&) const = default;
};

/// Shuffles patients with `seed`, then deals them round-robin into k test
/// folds. With `stratify`, Normal and Abnormal patients are dealt separately
/// (Normal first) so each fold receives a balanced share of both.
std::vector<FoldSplit> grouped_kfold(const std::vector<Sample>& samples, int k, std::uint64_t seed,
                                     bool stratify = false);

/// JSON: {"k":5,"folds":[{"fold":0,"test_patients":[...]},...]}. Train sets
/// are the complement, so reading reconstructs them.
void write_folds(const std::vector<FoldSplit>& folds, const std::filesystem::path& path);
std::vector<FoldSplit> read_folds(const std::filesystem::path& path);

std::vector<Sample> select_patients(const std::vector<Sample>& samples,
                                    const std::vector<std::string>& patients);

struct Batch {
  TensorF images;  // [B,1,H,W]
  TensorF labels;  // [B,1]
  std::vector<std::size_t> indices;
};

/// Preprocessed images held in memory, served as batches. Train mode
/// reshuffles every epoch and augments each image with an RNG seeded from
/// (seed, epoch, sample index); eval mode keeps input order and never augments.
class BatchSource {
 public:
  BatchSource(std::vector<UnitImage> images, std::vector<int> labels);
  /// Loads and preprocesses every sample's image.
  static BatchSource from_samples(const std::vector<Sample>& samples, const PreprocessOptions& opt);

  std::size_t size() const { return images_.size(); }
  const std::vector<UnitImage>& images() const { return images_; }
  const std::vector<int>& labels() const { return labels_; }

  /// Index groups for one epoch; the final short batch is kept.
  std::vector<std::vector<std::size_t>> batch_indices(int batch_size, int epoch, std::uint64_t seed,
                                                      Mode mode) const;
  Batch load(const std::vector<std::size_t>& indices, int epoch, std::uint64_t seed, Mode mode,
             bool augment_images = true) const;
  std::vector<Batch> make_batches(int batch_size, int epoch, std::uint64_t seed, Mode mode) const;

 private:
  std::vector<UnitImage> images_;
  std::vector<int> labels_;
};

struct SynthOptions {
  int n_patients = 100;
  int max_images_per_patient = 3;
  int size = 64;
  std::uint64_t seed = 0;
  std::string extension = ".png";
};

/// Renders one synthetic radiograph. Normal: smooth background with rib-like
/// bands. Abnormal adds 1-3 bright elliptical opacities or a ring artifact.
GrayImage synth_image(int size, int label, std::uint64_t seed);

/// Writes images and manifest.csv into `out_dir`; returns the manifest path.
std::filesystem::path synth_dataset(const SynthOptions& opt, const std::filesystem::path& out_dir);

}  // namespace cxr
