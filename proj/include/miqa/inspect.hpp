#pragma once

#include <optional>
#include <string>
#include <vector>

#include "miqa/image_io.hpp"
#include "miqa/model.hpp"

namespace miqa {

/// Row-major matrix of mean cosine similarities. An entry is empty when some
/// probe produced a zero-norm feature for it.
struct SimilarityMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::optional<double>> entries;

  std::optional<double> at(std::size_t i, std::size_t j) const { return entries.at(i * cols + j); }
  double mean_diagonal() const;
  double mean_off_diagonal() const;
  /// Header "mal,0,1,..", one row per MAL; undefined entries print as NA.
  std::string to_csv() const;
};

/// cos(a, b) over flattened values; empty when either norm is zero.
std::optional<double> cosine_similarity(const Tensor<float>& a, const Tensor<float>& b);

/// Entry (i, j): mean over probes of cos(opinion_i, opinion_j) within one model.
SimilarityMatrix mal_similarity(const Model<float>& model, const std::vector<Tensor<float>>& probes);

/// Entry (i, j): mean over probes of cos(teacher opinion_i, student opinion_j).
SimilarityMatrix mal_cross_similarity(const Model<float>& teacher, const Model<float>& student,
                                      const std::vector<Tensor<float>>& probes);

/// One map per opinion MAL: feature-wise attention averaged over queries,
/// laid out on the g x g grid (mean over pyramid levels), nearest-upsampled to
/// the image size and min-max scaled to [0, 255].
std::vector<GrayImage> attention_maps(const Model<float>& model, const Tensor<float>& image);

}  // namespace miqa
