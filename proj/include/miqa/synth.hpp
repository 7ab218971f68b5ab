#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "miqa/tensor.hpp"

namespace miqa {

enum class DistortionKind : int { gaussian_blur = 0, additive_noise = 1, block_average = 2, contrast_reduce = 3 };

inline constexpr std::size_t kDistortionKinds = 4;

std::string to_string(DistortionKind k);
DistortionKind distortion_kind_from_string(const std::string& s);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::gaussian_blur;
  double severity = 0.0;       // in [0, 1]; 0 is the identity
  std::uint64_t noise_seed = 0;  // additive_noise only
};

/// Procedural RGB image in [0,1]: smoothed value-noise octaves, a linear
/// gradient, a checker texture and a few hard-edged rectangles.
Tensor<float> gen_pristine(std::uint64_t seed, std::size_t height, std::size_t width);

Tensor<float> apply_distortion(const Tensor<float>& img, const DistortionSpec& spec);

/// prod_k (1 - 0.9 * s_k^0.8)
double pseudo_mos(std::span<const DistortionSpec> specs);

struct Sample {
  Tensor<float> image;  // 3 x H x W, 8-bit quantized values in [0,1]
  float mos = 1.0f;
  std::uint64_t seed = 0;
  std::vector<DistortionSpec> distortions;
  std::string path;  // relative manifest path, when loaded from or written to disk
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Sample `index` of the stream keyed by `seed`: 1-3 distinct distortions
/// with uniform severities.
Sample make_sample(std::uint64_t seed, std::size_t index, std::size_t height, std::size_t width);

/// n samples split deterministically; round(n * split_ratio) go to train.
Dataset make_dataset(std::uint64_t seed, std::size_t n, std::size_t height, std::size_t width, double split_ratio);

/// "kind:severity|kind:severity"
std::string describe_distortions(std::span<const DistortionSpec> specs);

/// Writes train/ and val/ PPMs plus manifest.csv (path,mos,seed,distortions).
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads manifest.csv; samples under train/ form the train split, val/ the
/// validation split.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace miqa
