#include "cxr/weight_archive.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace cxr {

namespace {

constexpr char kMagic[4] = {'N', 'S', 'W', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(const char* p) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename Scalar>
const char* dtype_name() {
  return sizeof(Scalar) == 4 ? "f32" : "f64";
}

}  // namespace

void write_archive(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  nlohmann::json table = nlohmann::json::array();
  std::string payload;
  std::set<std::string> names;
  for (const auto& entry : tensors) {
    if (!names.insert(entry.name).second)
      throw ArchiveFormatError("duplicate tensor name '" + entry.name + "'");
    std::visit(
        [&](const auto& t) {
          using S = std::decay_t<decltype(t[0])>;
          const std::size_t offset = payload.size();
          for (std::size_t i = 0; i < t.numel(); ++i) put_le<S>(payload, t[i]);
          table.push_back({{"name", entry.name},
                           {"dtype", dtype_name<S>()},
                           {"shape", t.shape()},
                           {"offset", offset},
                           {"nbytes", payload.size() - offset}});
        },
        entry.tensor);
  }
  const nlohmann::json header = {{"version", kArchiveVersion}, {"tensors", table}};
  const std::string header_text = header.dump();

  std::string bytes(kMagic, 4);
  put_le<std::uint32_t>(bytes, static_cast<std::uint32_t>(header_text.size()));
  bytes += header_text;
  bytes += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ArchiveError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ArchiveError("write to '" + path.string() + "' failed");
}

std::vector<NamedTensor> read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArchiveError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw ArchiveFormatError("'" + path.string() + "' is not a weight archive (bad magic)");
  const auto header_len = get_le<std::uint32_t>(bytes.data() + 4);
  if (8 + static_cast<std::size_t>(header_len) > bytes.size())
    throw ArchiveFormatError("truncated archive header in '" + path.string() + "'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveFormatError(std::string("malformed archive header: ") + e.what());
  }
  const auto version = header.value("version", 0u);
  if (version != kArchiveVersion)
    throw ArchiveVersionError("archive version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kArchiveVersion) + ")");

  const char* payload = bytes.data() + 8 + header_len;
  const std::size_t payload_size = bytes.size() - 8 - header_len;
  std::vector<NamedTensor> result;
  try {
    for (const auto& e : header.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto dtype = e.at("dtype").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
      if (width == 0) throw ArchiveFormatError("tensor '" + name + "' has unknown dtype " + dtype);
      const std::size_t count = shape_numel(shape);
      if (offset + count * width > payload_size)
        throw ArchiveFormatError("tensor '" + name + "' extends past end of payload");
      if (width == 4) {
        TensorF t(shape);
        for (std::size_t i = 0; i < count; ++i) t[i] = get_le<float>(payload + offset + 4 * i);
        result.push_back({name, std::move(t)});
      } else {
        TensorD t(shape);
        for (std::size_t i = 0; i < count; ++i) t[i] = get_le<double>(payload + offset + 8 * i);
        result.push_back({name, std::move(t)});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArchiveFormatError(std::string("malformed tensor table: ") + e.what());
  } catch (const ContractError& e) {
    throw ArchiveFormatError(std::string("invalid tensor shape: ") + e.what());
  }
  return result;
}

void export_features(const TensorF& features, const std::filesystem::path& path) {
  if (features.rank() != 4) throw ContractError("features must be [N,C,h,w], got " + shape_str(features.shape()));
  write_archive(path, {{"features", features}});
}

TensorF import_features(const std::filesystem::path& path, int expected_channels) {
  auto table = read_archive(path);
  for (auto& entry : table) {
    if (entry.name != "features") continue;
    TensorF t = as_scalar<float>(entry.tensor);
    if (t.rank() != 4)
      throw ShapeMismatchError("feature tensor must be [N,C,h,w], got " + shape_str(t.shape()));
    if (t.dim(1) != expected_channels)
      throw ShapeMismatchError("feature tensor has " + std::to_string(t.dim(1)) +
                               " channels, expected " + std::to_string(expected_channels));
    return t;
  }
  throw MissingTensorError("'" + path.string() + "' has no 'features' tensor");
}

}  // namespace cxr
