#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "miqa/config.hpp"
#include "miqa/nn.hpp"

namespace miqa {

/// Five stage outputs f_j in C_j x H_j x W_j, shallow to deep.
template <class T>
struct FeaturePyramid {
  std::array<Tensor<T>, kPyramidLevels> levels;
};

/// Stand-in five-stage extractor. Every stage is a stride-2 3x3 conv + GELU.
/// With global mixing (teacher), each stage also runs one self-attention over
/// an adaptively pooled token grid and adds the nearest-upsampled result back.
template <class T>
class Backbone {
 public:
  Backbone() = default;
  Backbone(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
    std::size_t in = cfg.input_channels;
    for (std::size_t j = 0; j < kPyramidLevels; ++j) {
      const auto out = cfg.stage_channels.at(j);
      stages_.emplace_back(in, out, 3, 2, 1, kGeluGain, rng);
      in = out;
    }
    if (cfg.global_mixing)
      for (std::size_t j = 0; j < kPyramidLevels; ++j) mixers_.emplace_back(cfg.stage_channels[j], rng);
  }

  const BackboneConfig& config() const { return cfg_; }

  FeaturePyramid<T> operator()(const Tensor<T>& img) const {
    detail::require_rank(img.shape(), 3, "backbone");
    detail::require(img.dim(0) == cfg_.input_channels,
                    "backbone: expected " + std::to_string(cfg_.input_channels) + " input channels, got " +
                        shape_str(img.shape()));
    detail::require(img.dim(1) >= kMinInputExtent && img.dim(2) >= kMinInputExtent,
                    "backbone: image " + shape_str(img.shape()) + " smaller than 32x32");
    FeaturePyramid<T> pyramid;
    Tensor<T> x = img;
    for (std::size_t j = 0; j < kPyramidLevels; ++j) {
      x = gelu(stages_[j](x));
      if (cfg_.global_mixing) x = add(x, global_context(j, x));
      pyramid.levels[j] = x;
    }
    return pyramid;
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t j = 0; j < stages_.size(); ++j) stages_[j].visit(prefix + ".stage" + std::to_string(j), f);
    for (std::size_t j = 0; j < mixers_.size(); ++j) mixers_[j].visit(prefix + ".mixer" + std::to_string(j), f);
  }

 private:
  Tensor<T> global_context(std::size_t j, const Tensor<T>& x) const {
    const auto c = x.dim(0), h = x.dim(1), w = x.dim(2);
    const auto gh = std::min(cfg_.mixing_grid, h), gw = std::min(cfg_.mixing_grid, w);
    auto tokens = transpose(reshape(adaptive_avg_pool2d(x, gh, gw), {c, gh * gw}));
    auto mixed = reshape(transpose(mixers_[j](tokens)), {c, gh, gw});
    return upsample_nearest2d(mixed, h, w);
  }

  BackboneConfig cfg_;
  std::vector<Conv2d<T>> stages_;
  std::vector<SelfAttention<T>> mixers_;
};

}  // namespace miqa
