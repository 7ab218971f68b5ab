#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "miqa/tensor.hpp"

namespace miqa {

/// 8-bit single-channel raster, row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

/// Binary P6, maxval 255. Values are clamped to [0,1] and rounded to 1/255.
std::string encode_ppm(const Tensor<float>& rgb);
Tensor<float> decode_ppm(const std::string& bytes);

/// Binary P5, maxval 255.
std::string encode_pgm(const GrayImage& img);
GrayImage decode_pgm(const std::string& bytes);

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb);
Tensor<float> read_ppm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayImage& img);
GrayImage read_pgm(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace miqa
