#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "padst/tensor.hpp"

namespace padst {

// On-disk layout:
//   "PADST1\n"
//   one line of compact UTF-8 JSON terminated by '\n':
//     {"format_version":1, "model_config":{...}, <metadata keys>...,
//      "tensors":[{"name":..,"shape":[..],"dtype":"f32","offset":<bytes>}, ...]}
//   raw little-endian float32 payloads in manifest order; offsets are
//   relative to the first payload byte.
inline constexpr std::string_view kCheckpointMagic = "PADST1\n";
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct Checkpoint {
  nlohmann::json model_config = nlohmann::json::object();
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(std::string_view name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Reads and validates a whole checkpoint; nothing is returned on error.
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace padst
