#include "miqa/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace miqa {

double SimilarityMatrix::mean_diagonal() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < std::min(rows, cols); ++i)
    if (auto v = at(i, i)) acc += *v, ++n;
  return n ? acc / static_cast<double>(n) : std::nan("");
}

double SimilarityMatrix::mean_off_diagonal() const {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (i != j)
        if (auto v = at(i, j)) acc += *v, ++n;
  return n ? acc / static_cast<double>(n) : std::nan("");
}

std::string SimilarityMatrix::to_csv() const {
  std::string out = "mal";
  for (std::size_t j = 0; j < cols; ++j) out += "," + std::to_string(j);
  out += "\n";
  char buf[32];
  for (std::size_t i = 0; i < rows; ++i) {
    out += std::to_string(i);
    for (std::size_t j = 0; j < cols; ++j) {
      if (auto v = at(i, j)) {
        std::snprintf(buf, sizeof buf, ",%.6f", *v);
        out += buf;
      } else {
        out += ",NA";
      }
    }
    out += "\n";
  }
  return out;
}

std::optional<double> cosine_similarity(const Tensor<float>& a, const Tensor<float>& b) {
  if (a.numel() != b.numel()) throw DimensionError("cosine_similarity: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double x = a.values()[i], y = b.values()[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

namespace {

SimilarityMatrix accumulate(const std::vector<std::vector<Tensor<float>>>& left,
                            const std::vector<std::vector<Tensor<float>>>& right, bool same_model) {
  const auto m = left.front().size();
  SimilarityMatrix out{m, m, std::vector<std::optional<double>>(m * m, 0.0)};
  for (std::size_t p = 0; p < left.size(); ++p)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        auto& cell = out.entries[i * m + j];
        if (!cell) continue;
        const auto c = cosine_similarity(left[p][i], right[p][j]);
        if (!c) {
          cell.reset();
        } else {
          *cell += (same_model && i == j) ? 1.0 : *c;
        }
      }
  for (auto& cell : out.entries)
    if (cell) *cell /= static_cast<double>(left.size());
  return out;
}

std::vector<std::vector<Tensor<float>>> opinions_for(const Model<float>& model, const std::vector<Tensor<float>>& probes) {
  NoGradGuard guard;
  std::vector<std::vector<Tensor<float>>> out;
  for (const auto& img : probes) out.push_back(model.forward(prepare_input(img, model.config())).opinions);
  return out;
}

}  // namespace

SimilarityMatrix mal_similarity(const Model<float>& model, const std::vector<Tensor<float>>& probes) {
  if (probes.empty()) throw ContractError("mal_similarity: probe batch is empty");
  const auto ops = opinions_for(model, probes);
  return accumulate(ops, ops, true);
}

SimilarityMatrix mal_cross_similarity(const Model<float>& teacher, const Model<float>& student,
                                      const std::vector<Tensor<float>>& probes) {
  if (probes.empty()) throw ContractError("mal_cross_similarity: probe batch is empty");
  const auto t = opinions_for(teacher, probes);
  const auto s = opinions_for(student, probes);
  if (t.front().size() != s.front().size()) throw ConfigError("teacher and student opinion counts differ");
  return accumulate(t, s, false);
}

std::vector<GrayImage> attention_maps(const Model<float>& model, const Tensor<float>& image) {
  NoGradGuard guard;
  std::vector<Tensor<float>> attention;
  model.forward(prepare_input(image, model.config()), &attention);
  const auto g = model.config().grid();
  const auto d = model.config().tokens;
  const auto h = image.dim(1), w = image.dim(2);

  std::vector<GrayImage> maps;
  for (const auto& attn : attention) {
    const auto tokens = attn.dim(0);
    const auto levels = tokens / d;
    // Column means: how much attention each key position receives.
    std::vector<double> grid(d, 0.0);
    for (std::size_t q = 0; q < tokens; ++q)
      for (std::size_t k = 0; k < tokens; ++k) grid[k / levels] += attn.values()[q * tokens + k];
    for (auto& v : grid) v /= static_cast<double>(tokens * levels);

    const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
    const double range = *hi - *lo;
    GrayImage img{h, w, std::vector<std::uint8_t>(h * w, 0)};
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double v = grid[(y * g / h) * g + x * g / w];
        img.pixels[y * w + x] = range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (v - *lo) / range)) : 0;
      }
    maps.push_back(std::move(img));
  }
  return maps;
}

}  // namespace miqa
