#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miqa/config.hpp"

namespace miqa {

// Cost convention: one multiply-accumulate counts 1. Activations, softmax,
// pooling, resampling and additions count 0.

constexpr std::uint64_t conv_macs(std::uint64_t cin, std::uint64_t cout, std::uint64_t kh, std::uint64_t kw,
                                  std::uint64_t hout, std::uint64_t wout) {
  return cin * cout * kh * kw * hout * wout;
}

constexpr std::uint64_t linear_macs(std::uint64_t in, std::uint64_t out, std::uint64_t rows = 1) {
  return rows * in * out;
}

/// Q, K, V, O projections (L*E*E each), L*L*E for scores and L*L*E for the
/// weighted sum.
constexpr std::uint64_t attention_macs(std::uint64_t tokens, std::uint64_t embed) {
  return 4 * tokens * embed * embed + 2 * tokens * tokens * embed;
}

struct MacsEntry {
  std::string module;
  std::uint64_t macs = 0;
};

struct MacsBreakdown {
  std::vector<MacsEntry> entries;

  std::uint64_t total() const;
  std::uint64_t of(const std::string& module) const;
  /// Two-column text table, one module per line, then the total.
  std::string table() const;
};

/// Exact multiply-accumulate count of one forward pass at the configured
/// input resolution.
MacsBreakdown count_macs(const ModelConfig& cfg);

}  // namespace miqa
