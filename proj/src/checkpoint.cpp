#include "padst/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "padst/errors.hpp"

namespace padst {

namespace {

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

}  // namespace

const NamedTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header = ckpt.metadata;
  header["format_version"] = kCheckpointVersion;
  header["model_config"] = ckpt.model_config;
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  std::set<std::string> seen;
  for (const auto& t : ckpt.tensors) {
    if (!seen.insert(t.name).second) throw DataError("checkpoint: duplicate tensor " + t.name);
    manifest.push_back({{"name", t.name},
                        {"shape", t.value.shape()},
                        {"dtype", "f32"},
                        {"offset", offset}});
    offset += t.value.size() * sizeof(float);
  }
  header["tensors"] = std::move(manifest);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << kCheckpointMagic << header.dump() << '\n';
  std::vector<char> buffer;
  for (const auto& t : ckpt.tensors) {
    buffer.resize(t.value.size() * sizeof(float));
    for (std::size_t i = 0; i < t.value.size(); ++i) {
      const std::uint32_t bits = to_little(std::bit_cast<std::uint32_t>(t.value[i]));
      std::memcpy(buffer.data() + i * sizeof(float), &bits, sizeof(bits));
    }
    out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const std::string where = "checkpoint " + path.string() + ": ";
  if (bytes.compare(0, kCheckpointMagic.size(), kCheckpointMagic) != 0) {
    std::string found = bytes.substr(0, std::min<std::size_t>(6, bytes.size()));
    throw DataError(where + "bad magic: expected 'PADST1', found '" + found + "'");
  }
  const std::size_t header_begin = kCheckpointMagic.size();
  const std::size_t header_end = bytes.find('\n', header_begin);
  if (header_end == std::string::npos) throw DataError(where + "truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.begin() + static_cast<std::ptrdiff_t>(header_begin),
                                   bytes.begin() + static_cast<std::ptrdiff_t>(header_end));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed header: " + e.what());
  }
  const int version = header.value("format_version", -1);
  if (version != kCheckpointVersion) {
    throw DataError(where + "format_version mismatch: expected " +
                    std::to_string(kCheckpointVersion) + ", found " + std::to_string(version));
  }
  if (!header.contains("tensors") || !header["tensors"].is_array()) {
    throw DataError(where + "header has no tensor manifest");
  }

  Checkpoint ckpt;
  const std::size_t payload = header_end + 1;
  try {
    ckpt.model_config = header.at("model_config");
    for (const auto& entry : header["tensors"]) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<Shape>();
      const auto offset = entry.at("offset").get<std::size_t>();
      if (entry.at("dtype").get<std::string>() != "f32") {
        throw DataError(where + "tensor " + name + " has unsupported dtype");
      }
      const std::size_t count = shape_size(shape);
      if (payload + offset + count * sizeof(float) > bytes.size()) {
        throw DataError(where + "truncated payload for tensor " + name);
      }
      std::vector<float> data(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits;
        std::memcpy(&bits, bytes.data() + payload + offset + i * sizeof(float), sizeof(bits));
        data[i] = std::bit_cast<float>(to_little(bits));
      }
      if (ckpt.find(name)) throw DataError(where + "duplicate tensor " + name);
      ckpt.tensors.push_back({name, Tensor<float>(shape, std::move(data))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + "malformed manifest: " + e.what());
  } catch (const ShapeError& e) {
    throw DataError(where + e.what());
  }
  for (auto it = header.begin(); it != header.end(); ++it) {
    if (it.key() != "tensors" && it.key() != "model_config" && it.key() != "format_version") {
      ckpt.metadata[it.key()] = it.value();
    }
  }
  return ckpt;
}

}  // namespace padst
