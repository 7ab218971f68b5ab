#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "miqa/backbone.hpp"

namespace miqa {

/// Local distortion aware unit: 1x1 conv doubling C_j, GELU, adaptive pool to
/// a g x g grid, 1x1 conv to the shared width C_mal, flattened to C_mal x D.
/// Levels smaller than the grid are nearest-upsampled to it before pooling.
template <class T>
struct Lda {
  Conv2d<T> expand;
  Conv2d<T> reduce;
  std::size_t grid = 4;

  Lda() = default;
  Lda(std::size_t channels, std::size_t c_mal, std::size_t grid_, Rng& rng)
      : expand(channels, 2 * channels, 1, 1, 0, kGeluGain, rng), reduce(2 * channels, c_mal, 1, 1, 0, 1.0, rng),
        grid(grid_) {}

  std::size_t hidden_channels() const { return expand.weight.dim(0); }

  Tensor<T> operator()(const Tensor<T>& level) const {
    detail::require_rank(level.shape(), 3, "lda");
    auto e = gelu(expand(level));
    const auto h = level.dim(1), w = level.dim(2);
    if (h < grid || w < grid) e = upsample_nearest2d(e, std::max(h, grid), std::max(w, grid));
    auto r = reduce(adaptive_avg_pool2d(e, grid, grid));
    return reshape(r, {r.dim(0), grid * grid});
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    expand.visit(prefix + ".expand", f);
    reduce.visit(prefix + ".reduce", f);
  }
};

/// Multi-view attention unit. Each of N inputs [C x D] passes its own
/// self-attention (D tokens, width C); the results stack to F [C x D x N].
/// The feature-wise branch attends over the D*N positions (width C); the
/// channel-wise branch views F as D x (C*N) and attends over the C*N positions
/// (width D). Branch outputs are summed and averaged over N.
template <class T>
struct Mal {
  std::vector<SelfAttention<T>> per_input;
  SelfAttention<T> feature_wise;
  SelfAttention<T> channel_wise;

  Mal() = default;
  Mal(std::size_t inputs, std::size_t channels, std::size_t tokens, Rng& rng) {
    for (std::size_t n = 0; n < inputs; ++n) per_input.emplace_back(channels, rng);
    feature_wise = SelfAttention<T>(channels, rng);
    channel_wise = SelfAttention<T>(tokens, rng);
  }

  std::size_t inputs() const { return per_input.size(); }

  /// `feature_attention`, when given, receives the (D*N) x (D*N) weights of the
  /// feature-wise branch; token index d*N + n.
  Tensor<T> operator()(const std::vector<Tensor<T>>& xs, Tensor<T>* feature_attention = nullptr) const {
    detail::require(!xs.empty(), "mal: no inputs");
    detail::require(xs.size() == per_input.size(),
                    "mal: expects " + std::to_string(per_input.size()) + " inputs, got " + std::to_string(xs.size()));
    for (const auto& x : xs)
      detail::require(x.shape() == xs.front().shape(), "mal: input shapes differ " + shape_str(x.shape()) + " vs " +
                                                           shape_str(xs.front().shape()));
    detail::require_rank(xs.front().shape(), 2, "mal");
    const auto c = xs.front().dim(0), d = xs.front().dim(1), n = xs.size();

    std::vector<Tensor<T>> viewed;
    viewed.reserve(n);
    for (std::size_t i = 0; i < n; ++i) viewed.push_back(transpose(per_input[i](transpose(xs[i]))));
    const auto stacked = stack_last(viewed);  // C x D x N

    auto feat_tokens = reshape(permute(stacked, {1, 2, 0}), {d * n, c});
    auto feat = permute(reshape(feature_wise(feat_tokens, feature_attention), {d, n, c}), {2, 0, 1});

    auto chan_view = reshape(permute(stacked, {1, 0, 2}), {d, c * n});  // D x (C*N)
    auto chan_out = transpose(channel_wise(transpose(chan_view)));
    auto chan = permute(reshape(chan_out, {d, c, n}), {1, 0, 2});

    return mean_last(add(feat, chan));
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    for (std::size_t i = 0; i < per_input.size(); ++i) per_input[i].visit(prefix + ".sa" + std::to_string(i), f);
    feature_wise.visit(prefix + ".feature_wise", f);
    channel_wise.visit(prefix + ".channel_wise", f);
  }
};

/// Quality regression: C x D -> C x g x g -> 1x1 conv -> 3x3 conv -> flatten
/// -> FC hidden -> FC 1.
template <class T>
struct Head {
  Conv2d<T> reduce;
  Conv2d<T> spatial;
  Linear<T> fc1;
  Linear<T> fc2;
  std::size_t grid = 4;

  Head() = default;
  Head(std::size_t c_mal, std::size_t grid_, const HeadConfig& cfg, Rng& rng)
      : reduce(c_mal, cfg.reduce_channels, 1, 1, 0, kGeluGain, rng),
        spatial(cfg.reduce_channels, cfg.spatial_channels, 3, 1, 1, kGeluGain, rng),
        fc1(cfg.flatten, cfg.hidden, kGeluGain, rng),
        fc2(cfg.hidden, 1, 1.0, rng),
        grid(grid_) {}

  Tensor<T> operator()(const Tensor<T>& feature) const {
    auto x = reshape(feature, {feature.dim(0), grid, grid});
    x = gelu(spatial(gelu(reduce(x))));
    auto flat = reshape(x, {1, x.numel()});
    detail::require(flat.dim(1) == fc1.weight.dim(0), "head: flattened width " + std::to_string(flat.dim(1)) +
                                                          " vs FC input " + std::to_string(fc1.weight.dim(0)));
    return reshape(fc2(gelu(fc1(flat))), {1});
  }

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    reduce.visit(prefix + ".reduce", f);
    spatial.visit(prefix + ".spatial", f);
    fc1.visit(prefix + ".fc1", f);
    fc2.visit(prefix + ".fc2", f);
  }
};

template <class T>
struct ModelOutput {
  Tensor<T> score;                   // shape [1]
  std::vector<Tensor<T>> opinions;   // M tensors, C_mal x D
};

/// Backbone -> five LDAs -> M opinion MALs -> fusion MAL -> head.
/// Under the no-mal ablation the opinion MALs are absent and the fusion MAL
/// receives the mean of the five LDA outputs as its single input.
template <class T>
class Model {
 public:
  Model() = default;

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    backbone_ = Backbone<T>(cfg_.backbone, rng);
    for (std::size_t j = 0; j < kPyramidLevels; ++j)
      lda_.emplace_back(cfg_.backbone.stage_channels[j], cfg_.c_mal, cfg_.grid(), rng);
    if (cfg_.ablation == Ablation::none)
      for (std::size_t i = 0; i < cfg_.opinions; ++i) opinion_.emplace_back(kPyramidLevels, cfg_.c_mal, cfg_.tokens, rng);
    fusion_ = Mal<T>(fusion_inputs(), cfg_.c_mal, cfg_.tokens, rng);
    head_ = Head<T>(cfg_.c_mal, cfg_.grid(), cfg_.head, rng);
  }

  const ModelConfig& config() const { return cfg_; }
  std::size_t fusion_inputs() const { return cfg_.ablation == Ablation::none ? cfg_.opinions : 1; }

  const Backbone<T>& backbone() const { return backbone_; }
  const Lda<T>& lda(std::size_t j) const { return lda_.at(j); }
  const std::vector<Mal<T>>& opinion_mals() const { return opinion_; }
  std::vector<Mal<T>>& opinion_mals() { return opinion_; }
  const Mal<T>& fusion() const { return fusion_; }
  const Head<T>& head() const { return head_; }

  /// `attention`, when given, receives one feature-wise attention matrix per
  /// opinion MAL.
  ModelOutput<T> forward(const Tensor<T>& img, std::vector<Tensor<T>>* attention = nullptr) const {
    const auto pyramid = backbone_(img);
    std::vector<Tensor<T>> aware;
    aware.reserve(kPyramidLevels);
    for (std::size_t j = 0; j < kPyramidLevels; ++j) aware.push_back(lda_[j](pyramid.levels[j]));

    ModelOutput<T> out;
    if (attention) attention->assign(opinion_.size(), Tensor<T>());
    if (cfg_.ablation == Ablation::none) {
      for (std::size_t i = 0; i < opinion_.size(); ++i)
        out.opinions.push_back(opinion_[i](aware, attention ? &(*attention)[i] : nullptr));
    } else {
      out.opinions.push_back(mean_last(stack_last(aware)));
    }
    out.score = head_(fusion_(out.opinions));
    return out;
  }

  template <class F>
  void visit(F&& f) {
    backbone_.visit("backbone", f);
    for (std::size_t j = 0; j < lda_.size(); ++j) lda_[j].visit("lda" + std::to_string(j), f);
    for (std::size_t i = 0; i < opinion_.size(); ++i) opinion_[i].visit("mal" + std::to_string(i), f);
    fusion_.visit("fusion", f);
    head_.visit("head", f);
  }

  /// Parameters keyed by name, in lexicographic name order.
  std::map<std::string, Tensor<T>> named_parameters() {
    std::map<std::string, Tensor<T>> out;
    visit([&](const std::string& name, Tensor<T>& t) {
      if (!out.emplace(name, t).second) throw ContractError("duplicate parameter name " + name);
    });
    return out;
  }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> out;
    for (auto& [_, t] : named_parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    visit([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
    return n;
  }

  /// Stops gradient tracking on every parameter (frozen teacher).
  void freeze() {
    visit([](const std::string&, Tensor<T>& t) {
      t.set_requires_grad(false);
      t.clear_grad();
    });
  }

  /// Deep copy in scalar type U (double shadow for gradient checks, or a plain clone).
  template <class U = T>
  Model<U> cast() const {
    Model<U> copy(cfg_, 0);
    auto self = const_cast<Model*>(this)->named_parameters();
    for (auto& [name, dst] : copy.named_parameters()) {
      const auto& src = self.at(name);
      auto out = dst.mutable_data();
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src.values()[i]);
    }
    return copy;
  }

 private:
  ModelConfig cfg_;
  Backbone<T> backbone_;
  std::vector<Lda<T>> lda_;
  std::vector<Mal<T>> opinion_;
  Mal<T> fusion_;
  Head<T> head_;
};

/// Fixed pixel standardization applied to every model input: (x - 0.5) / 0.25.
inline constexpr double kPixelMean = 0.5;
inline constexpr double kPixelStd = 0.25;

/// Resamples an image to the configured resolution (area average), then
/// nearest-upsamples back to the backbone minimum when below it, and
/// standardizes pixel values.
template <class T>
Tensor<T> prepare_input(const Tensor<T>& img, const ModelConfig& cfg) {
  NoGradGuard guard;
  Tensor<T> x = img;
  const auto h = img.dim(1), w = img.dim(2);
  if (h != cfg.height || w != cfg.width) {
    if (cfg.height <= h && cfg.width <= w)
      x = adaptive_avg_pool2d(x, cfg.height, cfg.width);
    else
      x = upsample_nearest2d(x, cfg.height, cfg.width);
  }
  if (x.dim(1) != cfg.input_height() || x.dim(2) != cfg.input_width())
    x = upsample_nearest2d(x, cfg.input_height(), cfg.input_width());
  auto out = x.detach();
  for (auto& v : out.mutable_data()) v = static_cast<T>((v - kPixelMean) / kPixelStd);
  return out;
}

}  // namespace miqa
