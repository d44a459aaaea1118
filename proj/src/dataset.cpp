#include "cxr/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace cxr {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

int parse_label(const std::string& token) {
  const std::string t = lower(trim(token));
  if (t == "normal" || t == "1") return kNormal;
  if (t == "abnormal" || t == "0") return kAbnormal;
  throw ManifestError("unknown label '" + token + "'");
}

std::vector<Sample> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw ManifestError("manifest '" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  const std::vector<std::string> expected{"image_path", "patient_id", "label"};
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (i >= header.size() || trim(header[i]) != expected[i])
      throw ManifestError("manifest header must be 'image_path,patient_id,label'; missing column '" +
                          expected[i] + "'");
  if (header.size() != expected.size())
    throw ManifestError("manifest header has unexpected extra columns");

  const auto base = path.parent_path();
  std::vector<Sample> samples;
  std::set<std::string> seen;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 3)
      throw ManifestError("line " + std::to_string(line_no) + ": expected 3 columns, got " +
                          std::to_string(f.size()));
    Sample s;
    s.image_path = trim(f[0]);
    s.patient_id = trim(f[1]);
    try {
      s.label = parse_label(f[2]);
    } catch (const ManifestError& e) {
      throw ManifestError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (s.image_path.empty()) throw ManifestError("line " + std::to_string(line_no) + ": empty image_path");
    if (s.patient_id.empty()) throw ManifestError("line " + std::to_string(line_no) + ": empty patient_id");
    if (!seen.insert(s.image_path).second)
      throw ManifestError("line " + std::to_string(line_no) + ": duplicate image path '" + s.image_path + "'");
    if (std::filesystem::path(s.image_path).is_relative() && !base.empty())
      s.image_path = (base / s.image_path).lexically_normal().string();
    samples.push_back(std::move(s));
  }
  return samples;
}

void write_manifest(const std::vector<Sample>& samples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ManifestError("cannot write manifest '" + path.string() + "'");
  out << "image_path,patient_id,label\n";
  for (const auto& s : samples)
    out << s.image_path << ',' << s.patient_id << ',' << (s.label == kNormal ? "normal" : "abnormal") << '\n';
  if (!out) throw ManifestError("write to '" + path.string() + "' failed");
}

std::vector<std::string> unique_patients(const std::vector<Sample>& samples) {
  std::set<std::string> ids;
  for (const auto& s : samples) ids.insert(s.patient_id);
  return {ids.begin(), ids.end()};
}

std::vector<FoldSplit> grouped_kfold(const std::vector<Sample>& samples, int k, std::uint64_t seed,
                                     bool stratify) {
  if (k < 2) throw ContractError("grouped_kfold: k must be >= 2");
  auto patients = unique_patients(samples);
  if (static_cast<int>(patients.size()) < k)
    throw ContractError("grouped_kfold: need at least " + std::to_string(k) + " distinct patients, got " +
                        std::to_string(patients.size()));

  Rng rng(seed);
  std::vector<std::vector<std::string>> pools;
  if (stratify) {
    std::map<std::string, int> patient_label;
    for (const auto& s : samples) {
      // A patient counts as Normal only if every image is Normal.
      auto [it, inserted] = patient_label.emplace(s.patient_id, s.label);
      if (!inserted) it->second = std::min(it->second, s.label);
    }
    pools.resize(2);
    for (const auto& p : patients) pools[patient_label[p] == kNormal ? 0 : 1].push_back(p);
  } else {
    pools.push_back(patients);
  }

  std::vector<std::vector<std::string>> tests(k);
  int next = 0;
  for (auto& pool : pools) {
    rng.shuffle(pool.begin(), pool.end());
    for (const auto& p : pool) {
      tests[next].push_back(p);
      next = (next + 1) % k;
    }
  }

  std::vector<FoldSplit> folds(k);
  for (int f = 0; f < k; ++f) {
    folds[f].fold = f;
    folds[f].test_patients = tests[f];
    std::sort(folds[f].test_patients.begin(), folds[f].test_patients.end());
    for (int g = 0; g < k; ++g)
      if (g != f) folds[f].train_patients.insert(folds[f].train_patients.end(), tests[g].begin(), tests[g].end());
    std::sort(folds[f].train_patients.begin(), folds[f].train_patients.end());
  }
  return folds;
}

void write_folds(const std::vector<FoldSplit>& folds, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["k"] = folds.size();
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : folds) j["folds"].push_back({{"fold", f.fold}, {"test_patients", f.test_patients}});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write fold file '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::vector<FoldSplit> read_folds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fold file '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("malformed fold file '" + path.string() + "': " + e.what());
  }
  const int k = j.at("k").get<int>();
  std::vector<FoldSplit> folds;
  for (const auto& f : j.at("folds")) {
    FoldSplit s;
    s.fold = f.at("fold").get<int>();
    s.test_patients = f.at("test_patients").get<std::vector<std::string>>();
    std::sort(s.test_patients.begin(), s.test_patients.end());
    folds.push_back(std::move(s));
  }
  if (static_cast<int>(folds.size()) != k)
    throw std::runtime_error("fold file declares k=" + std::to_string(k) + " but lists " +
                             std::to_string(folds.size()) + " folds");
  std::set<std::string> all;
  for (const auto& f : folds)
    for (const auto& p : f.test_patients)
      if (!all.insert(p).second) throw std::runtime_error("patient '" + p + "' appears in two test folds");
  for (auto& f : folds) {
    for (const auto& p : all)
      if (!std::binary_search(f.test_patients.begin(), f.test_patients.end(), p)) f.train_patients.push_back(p);
  }
  return folds;
}

std::vector<Sample> select_patients(const std::vector<Sample>& samples,
                                    const std::vector<std::string>& patients) {
  const std::set<std::string> wanted(patients.begin(), patients.end());
  std::vector<Sample> out;
  for (const auto& s : samples)
    if (wanted.count(s.patient_id)) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------------------

BatchSource::BatchSource(std::vector<UnitImage> images, std::vector<int> labels)
    : images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.empty()) throw ContractError("batch source: empty sample list");
  if (images_.size() != labels_.size()) throw ContractError("batch source: images/labels length mismatch");
}

BatchSource BatchSource::from_samples(const std::vector<Sample>& samples, const PreprocessOptions& opt) {
  if (samples.empty()) throw ContractError("batch source: empty sample list");
  std::vector<UnitImage> images;
  std::vector<int> labels;
  images.reserve(samples.size());
  for (const auto& s : samples) {
    images.push_back(preprocess(read_image(s.image_path), opt));
    labels.push_back(s.label);
  }
  return BatchSource(std::move(images), std::move(labels));
}

std::vector<std::vector<std::size_t>> BatchSource::batch_indices(int batch_size, int epoch,
                                                                 std::uint64_t seed, Mode mode) const {
  if (batch_size < 1) throw ContractError("batch size must be >= 1");
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (mode == Mode::kTrain) {
    Rng rng(derive_seed(seed, 0x5348u, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(order.size(), i + batch_size));
  return batches;
}

Batch BatchSource::load(const std::vector<std::size_t>& indices, int epoch, std::uint64_t seed, Mode mode,
                        bool augment_images) const {
  std::vector<UnitImage> imgs;
  imgs.reserve(indices.size());
  TensorF labels({static_cast<int>(indices.size()), 1});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t idx = indices[i];
    if (mode == Mode::kTrain && augment_images) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch) + 1, idx));
      imgs.push_back(augment(images_[idx], draw_augment_params(rng)));
    } else {
      imgs.push_back(images_[idx]);
    }
    labels[i] = static_cast<float>(labels_[idx]);
  }
  return Batch{to_tensor(imgs), std::move(labels), indices};
}

std::vector<Batch> BatchSource::make_batches(int batch_size, int epoch, std::uint64_t seed, Mode mode) const {
  std::vector<Batch> out;
  for (const auto& idx : batch_indices(batch_size, epoch, seed, mode)) out.push_back(load(idx, epoch, seed, mode));
  return out;
}

// ---------------------------------------------------------------------------

GrayImage synth_image(int size, int label, std::uint64_t seed) {
  if (size < 8) throw ContractError("synth: image size must be >= 8");
  Rng rng(seed);
  const double s = size;
  const double two_pi = 2.0 * std::numbers::pi;

  // Smooth background: vertical gradient plus a low-frequency undulation.
  const double phase_x = rng.uniform(0, two_pi);
  const double phase_y = rng.uniform(0, two_pi);
  const double base = 95 + rng.uniform(-4, 4);
  // Rib-like bands: gently curved horizontal sinusoids.
  const double rib_freq = rng.uniform(5.0, 8.0);
  const double rib_phase = rng.uniform(0, two_pi);
  const double rib_amp = rng.uniform(10, 16);
  const double rib_curve = rng.uniform(0.15, 0.3);

  Eigen::ArrayXXd img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double u = x / s, v = y / s;
      double val = base + 25 * (v - 0.5) + 10 * std::sin(two_pi * u + phase_x) * std::cos(two_pi * 0.5 * v + phase_y);
      const double curved = v + rib_curve * (u - 0.5) * (u - 0.5);
      val += rib_amp * std::sin(two_pi * rib_freq * curved + rib_phase);
      img(y, x) = val;
    }
  }

  if (label == kAbnormal) {
    if (rng.bernoulli(0.75)) {
      const int blobs = 1 + static_cast<int>(rng.below(3));
      for (int b = 0; b < blobs; ++b) {
        const double cx = rng.uniform(0.25, 0.75) * s, cy = rng.uniform(0.25, 0.75) * s;
        const double rx = rng.uniform(0.08, 0.16) * s, ry = rng.uniform(0.08, 0.16) * s;
        const double angle = rng.uniform(0, std::numbers::pi);
        const double amp = rng.uniform(70, 100);
        const double ca = std::cos(angle), sa = std::sin(angle);
        for (int y = 0; y < size; ++y) {
          for (int x = 0; x < size; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double a = (ca * dx + sa * dy) / rx, c = (-sa * dx + ca * dy) / ry;
            const double r2 = a * a + c * c;
            img(y, x) += amp / (1 + std::exp(8 * (std::sqrt(r2) - 1)));
          }
        }
      }
    } else {
      const double cx = rng.uniform(0.35, 0.65) * s, cy = rng.uniform(0.35, 0.65) * s;
      const double radius = rng.uniform(0.15, 0.25) * s;
      const double width = std::max(1.0, 0.04 * s);
      const double amp = rng.uniform(80, 110);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double d = std::hypot(x - cx, y - cy) - radius;
          img(y, x) += amp * std::exp(-0.5 * d * d / (width * width));
        }
      }
    }
  }

  GrayImage out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      out(y, x) = static_cast<std::uint8_t>(std::clamp(std::lround(img(y, x) + 3.0 * rng.normal()), 0L, 255L));
  return out;
}

std::filesystem::path synth_dataset(const SynthOptions& opt, const std::filesystem::path& out_dir) {
  if (opt.n_patients < 2) throw ContractError("synth: need at least 2 patients");
  if (opt.max_images_per_patient < 1 || opt.max_images_per_patient > 3)
    throw ContractError("synth: images per patient must be in 1..3");
  std::filesystem::create_directories(out_dir / "images");

  Rng rng(opt.seed);
  std::vector<int> labels(opt.n_patients);
  for (int i = 0; i < opt.n_patients; ++i) labels[i] = i < (opt.n_patients + 1) / 2 ? kNormal : kAbnormal;
  rng.shuffle(labels.begin(), labels.end());

  std::vector<Sample> samples;
  for (int p = 0; p < opt.n_patients; ++p) {
    char pid[32];
    std::snprintf(pid, sizeof pid, "P%05d", p);
    const int n_images = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(opt.max_images_per_patient)));
    for (int i = 0; i < n_images; ++i) {
      const std::string rel = std::string("images/") + pid + "_" + std::to_string(i) + opt.extension;
      const auto img = synth_image(opt.size, labels[p], derive_seed(opt.seed, static_cast<std::uint64_t>(p) + 1, i));
      write_image(img, out_dir / rel);
      samples.push_back({rel, pid, labels[p]});
    }
  }
  const auto manifest = out_dir / "manifest.csv";
  write_manifest(samples, manifest);
  return manifest;
}

}  // namespace cxr
