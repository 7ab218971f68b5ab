#pragma once

#include <filesystem>
#include <string>

#include "miqa/model.hpp"

namespace miqa {

// Layout, all integers u32 little-endian:
//   "MIQA" | version=1 | config length | config JSON (UTF-8)
//   | tensor count | per tensor: name length | name | ndim | dims | f32 LE data
// Tensors appear once each in lexicographic name order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_model(Model<float>& model);
Model<float> deserialize_model(const std::string& bytes);

void save_model(Model<float>& model, const std::filesystem::path& path);
Model<float> load_model(const std::filesystem::path& path);

/// Loads and checks that the stored backbone matches `expected` (e.g. a
/// teacher file opened where a student is required). Throws ConfigError.
Model<float> load_model_expecting(const std::filesystem::path& path, const BackboneConfig& expected);

}  // namespace miqa
