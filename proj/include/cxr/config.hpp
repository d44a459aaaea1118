#pragma once

#include "cxr/direct.hpp"
#include "cxr/imaging.hpp"
#include "cxr/model.hpp"
#include "cxr/threshold.hpp"
#include "cxr/train.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cxr {

enum class Profile { kDesk, kPaper };

/// Where the operating threshold is tuned: on the fold's own test scores,
/// or on a validation split carved out of the fold's training patients.
enum class ThresholdSource { kTest, kValidation };

/// Every setting of an experiment. Keys (see README for the full table):
/// profile, seed, manifest, output_dir, folds_file, features_file, k, stratify,
/// input_size, stem, stem_channels, num_blocks, block_dropout, head_dropout,
/// noise_sigma, post_add_activation, lr, beta1, beta2, adam_eps, epochs,
/// batch_size, freeze_stem, augment, clahe_tiles, clahe_clip,
/// threshold_method, threshold_source, validation_fraction, direct_max_evals,
/// direct_eps, direct_size_tol, direct_locally_biased, parallel_folds.
struct RunConfig {
  Profile profile = Profile::kDesk;
  std::uint64_t seed = 0;
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "cxr_out";
  std::filesystem::path folds_file;
  std::filesystem::path features_file;
  int k = 5;
  bool stratify = false;

  ModelConfig model;
  TrainConfig train;
  PreprocessOptions imaging;
  DirectConfig direct;
  ThresholdMethod threshold_method = ThresholdMethod::kSweep;
  ThresholdSource threshold_source = ThresholdSource::kTest;
  double validation_fraction = 0.2;
  bool parallel_folds = false;

  /// Profile defaults. Desk: 64x64, batch 32, 10 epochs, 64 stem channels.
  /// Full scale: 128x128, batch 400, 50 epochs, 320 stem channels, lr 1e-4.
  static RunConfig defaults(Profile profile);

  /// Sets one key; throws std::invalid_argument on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  /// All keys with their current values, in a stable order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  /// Checks value ranges and that referenced input files exist.
  void validate() const;
};

std::string to_string(Profile p);
Profile profile_from_string(const std::string& s);

/// Parses `key = value` lines; '#' starts a comment; blank lines ignored.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path);

/// Builds a config: profile defaults (profile taken from overrides, then
/// file, then desk), then file values, then overrides. Overrides win.
RunConfig load_run_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides);

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path);

/// Name of the environment variable that, when set, roots relative output directories.
inline constexpr const char* kOutputRootEnv = "CXR_OUTPUT_ROOT";
std::filesystem::path resolve_output_dir(const std::filesystem::path& dir);

}  // namespace cxr
