#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miqa/errors.hpp"

namespace miqa {

inline constexpr std::size_t kPyramidLevels = 5;
inline constexpr std::size_t kMinInputExtent = 32;

struct BackboneConfig {
  std::vector<std::size_t> stage_channels{8, 16, 24, 32, 40};
  bool global_mixing = true;  // teacher: true, student: false
  std::size_t input_channels = 3;
  std::size_t mixing_grid = 4;

  bool operator==(const BackboneConfig&) const = default;
};

struct HeadConfig {
  std::size_t reduce_channels = 16;
  std::size_t spatial_channels = 8;
  std::size_t flatten = 128;
  std::size_t hidden = 64;

  bool operator==(const HeadConfig&) const = default;
};

enum class Ablation { none, no_mal };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t c_mal = 32;
  std::size_t tokens = 16;  // D, laid out as a square grid
  std::size_t opinions = 3;  // M
  HeadConfig head;
  std::size_t height = 64;
  std::size_t width = 64;
  Ablation ablation = Ablation::none;

  std::size_t grid() const;
  /// Throws ConfigError on any inconsistency.
  void validate() const;

  /// Backbone input extent: the configured resolution, raised to the minimum
  /// the five-stage backbone accepts.
  std::size_t input_height() const { return height < kMinInputExtent ? kMinInputExtent : height; }
  std::size_t input_width() const { return width < kMinInputExtent ? kMinInputExtent : width; }

  static ModelConfig teacher();
  static ModelConfig student();

  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  double lr = 1e-5;
  double lr_min = 0.0;
  double weight_decay = 1e-5;
  std::size_t cosine_period = 50;  // epochs
  double alpha = 2.0;
  bool kd = true;  // false: W/O-KD ablation, score term only
  bool flip = false;  // random horizontal/vertical flips of training images
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct DataConfig {
  std::uint64_t seed = 0;
  std::size_t count = 500;
  std::size_t size = 64;
  double split_ratio = 0.8;

  void validate() const;
  bool operator==(const DataConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  bool operator==(const RunConfig&) const = default;
};

// JSON text round-trip. Parsing rejects unknown keys; absent keys keep their
// defaults.
std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

std::string run_config_to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const std::string& text, const RunConfig& base = {});

/// Applies a "section.key=value" override; value is parsed as JSON when it
/// parses, otherwise taken as a string.
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace miqa
