#include "miqa/macs.hpp"

#include <algorithm>
#include <cstdio>

namespace miqa {

std::uint64_t MacsBreakdown::total() const {
  std::uint64_t t = 0;
  for (const auto& e : entries) t += e.macs;
  return t;
}

std::uint64_t MacsBreakdown::of(const std::string& module) const {
  for (const auto& e : entries)
    if (e.module == module) return e.macs;
  return 0;
}

std::string MacsBreakdown::table() const {
  std::string out = "# 1 MAC = one multiply-accumulate; activations, softmax, pooling count 0\n";
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-20s %16s\n", "module", "macs");
  out += buf;
  for (const auto& e : entries) {
    std::snprintf(buf, sizeof buf, "%-20s %16llu\n", e.module.c_str(), static_cast<unsigned long long>(e.macs));
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-20s %16llu\n", "total", static_cast<unsigned long long>(total()));
  return out + buf;
}

namespace {

std::uint64_t mal_macs(std::uint64_t inputs, std::uint64_t channels, std::uint64_t tokens) {
  return inputs * attention_macs(tokens, channels) + attention_macs(tokens * inputs, channels) +
         attention_macs(channels * inputs, tokens);
}

}  // namespace

MacsBreakdown count_macs(const ModelConfig& cfg) {
  cfg.validate();
  MacsBreakdown out;
  std::uint64_t h = cfg.input_height(), w = cfg.input_width();
  std::uint64_t cin = cfg.backbone.input_channels;

  std::uint64_t backbone = 0, mixing = 0, lda = 0;
  const std::uint64_t g = cfg.grid();
  for (std::size_t j = 0; j < kPyramidLevels; ++j) {
    const std::uint64_t c = cfg.backbone.stage_channels[j];
    h = (h - 1) / 2 + 1;
    w = (w - 1) / 2 + 1;
    backbone += conv_macs(cin, c, 3, 3, h, w);
    if (cfg.backbone.global_mixing) {
      const auto gh = std::min<std::uint64_t>(cfg.backbone.mixing_grid, h);
      const auto gw = std::min<std::uint64_t>(cfg.backbone.mixing_grid, w);
      mixing += attention_macs(gh * gw, c);
    }
    lda += conv_macs(c, 2 * c, 1, 1, h, w) + conv_macs(2 * c, cfg.c_mal, 1, 1, g, g);
    cin = c;
  }
  out.entries.push_back({"backbone.conv", backbone});
  if (cfg.backbone.global_mixing) out.entries.push_back({"backbone.mixing", mixing});
  out.entries.push_back({"lda", lda});

  std::uint64_t fusion_inputs = 1;
  if (cfg.ablation == Ablation::none) {
    out.entries.push_back({"opinion_mals", cfg.opinions * mal_macs(kPyramidLevels, cfg.c_mal, cfg.tokens)});
    fusion_inputs = cfg.opinions;
  }
  out.entries.push_back({"fusion_mal", mal_macs(fusion_inputs, cfg.c_mal, cfg.tokens)});

  const auto& hd = cfg.head;
  const std::uint64_t head = conv_macs(cfg.c_mal, hd.reduce_channels, 1, 1, g, g) +
                             conv_macs(hd.reduce_channels, hd.spatial_channels, 3, 3, g, g) +
                             linear_macs(hd.flatten, hd.hidden) + linear_macs(hd.hidden, 1);
  out.entries.push_back({"head", head});
  return out;
}

}  // namespace miqa
