#include "cxr/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cxr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

// Shortest text that parses back to the same double.
std::string num(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

std::string to_string(Profile p) { return p == Profile::kDesk ? "desk-scale" : "paper-scale"; }

Profile profile_from_string(const std::string& s) {
  if (s == "desk" || s == "desk-scale") return Profile::kDesk;
  if (s == "paper" || s == "paper-scale") return Profile::kPaper;
  throw std::invalid_argument("unknown profile '" + s + "' (expected desk-scale or paper-scale)");
}

RunConfig RunConfig::defaults(Profile profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == Profile::kPaper) {
    c.model.input_height = c.model.input_width = 128;
    c.model.stem_out_channels = 320;
    c.train.batch_size = 400;
    c.train.epochs = 50;
    c.train.lr = 1e-4;
    c.imaging.height = c.imaging.width = 128;
  } else {
    c.model.input_height = c.model.input_width = 64;
    c.model.stem_out_channels = 64;
    c.train.batch_size = 32;
    c.train.epochs = 10;
    // Ten epochs of a few dozen steps do not move a randomly initialized
    // network far enough at 1e-4.
    c.train.lr = 1e-3;
    c.imaging.height = c.imaging.width = 64;
  }
  return c;
}

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "profile") profile = profile_from_string(v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "manifest") manifest = v;
  else if (key == "output_dir") output_dir = v;
  else if (key == "folds_file") folds_file = v;
  else if (key == "features_file") features_file = v;
  else if (key == "k") k = static_cast<int>(to_int(key, v));
  else if (key == "stratify") stratify = to_bool(key, v);
  else if (key == "input_size") {
    const int s = static_cast<int>(to_int(key, v));
    model.input_height = model.input_width = s;
    imaging.height = imaging.width = s;
  } else if (key == "stem") model.stem = stem_kind_from_string(v);
  else if (key == "stem_channels") model.stem_out_channels = static_cast<int>(to_int(key, v));
  else if (key == "num_blocks") model.num_blocks = static_cast<int>(to_int(key, v));
  else if (key == "block_dropout") model.block_dropout_rate = to_double(key, v);
  else if (key == "head_dropout") model.head_dropout_rate = to_double(key, v);
  else if (key == "noise_sigma") model.noise_sigma = to_double(key, v);
  else if (key == "post_add_activation") model.post_add_activation = to_bool(key, v);
  else if (key == "lr") train.lr = to_double(key, v);
  else if (key == "beta1") train.beta1 = to_double(key, v);
  else if (key == "beta2") train.beta2 = to_double(key, v);
  else if (key == "adam_eps") train.eps = to_double(key, v);
  else if (key == "epochs") train.epochs = static_cast<int>(to_int(key, v));
  else if (key == "batch_size") train.batch_size = static_cast<int>(to_int(key, v));
  else if (key == "freeze_stem") train.freeze_stem = to_bool(key, v);
  else if (key == "augment") train.augment = to_bool(key, v);
  else if (key == "clahe_tiles") imaging.clahe.tiles_x = imaging.clahe.tiles_y = static_cast<int>(to_int(key, v));
  else if (key == "clahe_clip") imaging.clahe.clip_limit = v == "inf" ? HUGE_VAL : to_double(key, v);
  else if (key == "threshold_method") threshold_method = threshold_method_from_string(v);
  else if (key == "threshold_source") {
    if (v == "test") threshold_source = ThresholdSource::kTest;
    else if (v == "validation") threshold_source = ThresholdSource::kValidation;
    else throw std::invalid_argument("config key 'threshold_source': expected test or validation, got '" + v + "'");
  } else if (key == "validation_fraction") validation_fraction = to_double(key, v);
  else if (key == "direct_max_evals") direct.max_evals = static_cast<int>(to_int(key, v));
  else if (key == "direct_eps") direct.eps_balance = to_double(key, v);
  else if (key == "direct_size_tol") direct.size_tol = to_double(key, v);
  else if (key == "direct_locally_biased") direct.locally_biased = to_bool(key, v);
  else if (key == "parallel_folds") parallel_folds = to_bool(key, v);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  return {
      {"profile", to_string(profile)},
      {"seed", std::to_string(seed)},
      {"manifest", manifest.string()},
      {"output_dir", output_dir.string()},
      {"folds_file", folds_file.string()},
      {"features_file", features_file.string()},
      {"k", std::to_string(k)},
      {"stratify", flag(stratify)},
      {"input_size", std::to_string(model.input_height)},
      {"stem", to_string(model.stem)},
      {"stem_channels", std::to_string(model.stem_out_channels)},
      {"num_blocks", std::to_string(model.num_blocks)},
      {"block_dropout", num(model.block_dropout_rate)},
      {"head_dropout", num(model.head_dropout_rate)},
      {"noise_sigma", num(model.noise_sigma)},
      {"post_add_activation", flag(model.post_add_activation)},
      {"lr", num(train.lr)},
      {"beta1", num(train.beta1)},
      {"beta2", num(train.beta2)},
      {"adam_eps", num(train.eps)},
      {"epochs", std::to_string(train.epochs)},
      {"batch_size", std::to_string(train.batch_size)},
      {"freeze_stem", flag(train.freeze_stem)},
      {"augment", flag(train.augment)},
      {"clahe_tiles", std::to_string(imaging.clahe.tiles_x)},
      {"clahe_clip", std::isinf(imaging.clahe.clip_limit) ? "inf" : num(imaging.clahe.clip_limit)},
      {"threshold_method", to_string(threshold_method)},
      {"threshold_source", threshold_source == ThresholdSource::kTest ? "test" : "validation"},
      {"validation_fraction", num(validation_fraction)},
      {"direct_max_evals", std::to_string(direct.max_evals)},
      {"direct_eps", num(direct.eps_balance)},
      {"direct_size_tol", num(direct.size_tol)},
      {"direct_locally_biased", flag(direct.locally_biased)},
      {"parallel_folds", flag(parallel_folds)},
  };
}

void RunConfig::validate() const {
  if (manifest.empty()) throw std::invalid_argument("config: 'manifest' is required");
  if (!std::filesystem::exists(manifest))
    throw std::invalid_argument("config: manifest '" + manifest.string() + "' does not exist");
  if (!folds_file.empty() && !std::filesystem::exists(folds_file))
    throw std::invalid_argument("config: folds_file '" + folds_file.string() + "' does not exist");
  if (model.stem == StemKind::kPrecomputed) {
    if (features_file.empty()) throw std::invalid_argument("config: stem=precomputed requires 'features_file'");
    if (!std::filesystem::exists(features_file))
      throw std::invalid_argument("config: features_file '" + features_file.string() + "' does not exist");
  }
  if (k < 2) throw std::invalid_argument("config: k must be >= 2");
  if (!(validation_fraction > 0 && validation_fraction < 1))
    throw std::invalid_argument("config: validation_fraction must be in (0,1)");
  model.validate();
  train.validate();
  DirectConfig d = direct;
  d.bounds = {{0.0, 1.0}};
  d.validate();
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::map<std::string, std::string> read_key_value_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

RunConfig load_run_config(const std::filesystem::path& file, const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> from_file;
  if (!file.empty()) from_file = read_key_value_file(file);
  std::string profile = "desk-scale";
  if (auto it = from_file.find("profile"); it != from_file.end()) profile = it->second;
  if (auto it = overrides.find("profile"); it != overrides.end()) profile = it->second;
  RunConfig cfg = RunConfig::defaults(profile_from_string(profile));
  // Relative input paths in a config file are relative to the file.
  const auto base = file.empty() ? std::filesystem::path() : file.parent_path();
  for (const auto& [k, v] : from_file) {
    if (k == "profile") continue;
    cfg.set(k, v);
    if ((k == "manifest" || k == "folds_file" || k == "features_file") && !v.empty() &&
        std::filesystem::path(v).is_relative() && !base.empty())
      cfg.set(k, (base / v).lexically_normal().string());
  }
  for (const auto& [k, v] : overrides)
    if (k != "profile") cfg.set(k, v);
  return cfg;
}

void write_run_config(const RunConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (const auto& [k, v] : cfg.entries()) out << k << " = " << v << '\n';
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& dir) {
  if (dir.is_relative()) {
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / dir;
  }
  return dir;
}

}  // namespace cxr
