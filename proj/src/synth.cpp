#include "miqa/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "miqa/image_io.hpp"
#include "miqa/rng.hpp"

namespace miqa {

namespace fs = std::filesystem;

std::string to_string(DistortionKind k) {
  switch (k) {
    case DistortionKind::gaussian_blur: return "gaussian_blur";
    case DistortionKind::additive_noise: return "additive_noise";
    case DistortionKind::block_average: return "block_average";
    case DistortionKind::contrast_reduce: return "contrast_reduce";
  }
  throw ConfigError("unknown distortion kind " + std::to_string(static_cast<int>(k)));
}

DistortionKind distortion_kind_from_string(const std::string& s) {
  for (int k = 0; k < static_cast<int>(kDistortionKinds); ++k)
    if (to_string(static_cast<DistortionKind>(k)) == s) return static_cast<DistortionKind>(k);
  throw ConfigError("unknown distortion kind '" + s + "'");
}

namespace {

// Bilinearly interpolated lattice of uniform values, cells x cells.
void add_value_noise(std::vector<float>& plane, std::size_t h, std::size_t w, std::size_t cells, double amp,
                     Rng& rng) {
  std::vector<double> lattice((cells + 1) * (cells + 1));
  for (auto& v : lattice) v = rng.uniform(-1.0, 1.0);
  for (std::size_t y = 0; y < h; ++y) {
    const double fy = static_cast<double>(y) / static_cast<double>(h) * static_cast<double>(cells);
    const auto y0 = static_cast<std::size_t>(fy);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < w; ++x) {
      const double fx = static_cast<double>(x) / static_cast<double>(w) * static_cast<double>(cells);
      const auto x0 = static_cast<std::size_t>(fx);
      const double tx = fx - static_cast<double>(x0);
      const auto at = [&](std::size_t yy, std::size_t xx) { return lattice[yy * (cells + 1) + xx]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      plane[y * w + x] += static_cast<float>(amp * (top * (1 - ty) + bot * ty));
    }
  }
}

std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  const auto m = static_cast<std::ptrdiff_t>(n);
  while (i < 0 || i >= m) i = i < 0 ? -i - 1 : 2 * m - i - 1;
  return static_cast<std::size_t>(i);
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
  const auto c = img.dim(0), h = img.dim(1), w = img.dim(2);
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (std::ptrdiff_t k = -radius; k <= radius; ++k)
    total += kernel[k + radius] = std::exp(-0.5 * static_cast<double>(k * k) / (sigma * sigma));
  for (auto& v : kernel) v /= total;

  const auto& src = img.values();
  std::vector<double> tmp(src.size());
  std::vector<float> out(src.size());
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto base = ch * h * w;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * src[base + y * w + reflect(static_cast<std::ptrdiff_t>(x) + k, w)];
        tmp[base + y * w + x] = acc;
      }
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t k = -radius; k <= radius; ++k)
          acc += kernel[k + radius] * tmp[base + reflect(static_cast<std::ptrdiff_t>(y) + k, h) * w + x];
        out[base + y * w + x] = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  }
  return Tensor<float>(img.shape(), std::move(out));
}

Tensor<float> additive_noise(const Tensor<float>& img, double stddev, std::uint64_t seed) {
  std::vector<float> noise(img.numel());
  Rng rng(seed);
  rng.fill_normal(std::span<float>(noise), 0.0, stddev);
  std::vector<float> out(img.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(img.values()[i] + noise[i], 0.0f, 1.0f);
  return Tensor<float>(img.shape(), std::move(out));
}

Tensor<float> block_average(const Tensor<float>& img, std::size_t block) {
  const auto c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::vector<float> out(img.numel());
  const auto& src = img.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t by = 0; by < h; by += block)
      for (std::size_t bx = 0; bx < w; bx += block) {
        const auto ey = std::min(h, by + block), ex = std::min(w, bx + block);
        double acc = 0.0;
        for (auto y = by; y < ey; ++y)
          for (auto x = bx; x < ex; ++x) acc += src[(ch * h + y) * w + x];
        const auto mean = static_cast<float>(acc / static_cast<double>((ey - by) * (ex - bx)));
        for (auto y = by; y < ey; ++y)
          for (auto x = bx; x < ex; ++x) out[(ch * h + y) * w + x] = std::clamp(mean, 0.0f, 1.0f);
      }
  return Tensor<float>(img.shape(), std::move(out));
}

Tensor<float> contrast_reduce(const Tensor<float>& img, double factor) {
  const auto c = img.dim(0), plane = img.dim(1) * img.dim(2);
  std::vector<float> out(img.numel());
  const auto& src = img.values();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += src[ch * plane + i];
    const double mean = acc / static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i)
      out[ch * plane + i] =
          static_cast<float>(std::clamp(mean + factor * (src[ch * plane + i] - mean), 0.0, 1.0));
  }
  return Tensor<float>(img.shape(), std::move(out));
}

// Application order: global contrast first, additive noise last so it is
// never smoothed away by a later blur or block average.
int application_rank(DistortionKind k) {
  switch (k) {
    case DistortionKind::contrast_reduce: return 0;
    case DistortionKind::gaussian_blur: return 1;
    case DistortionKind::block_average: return 2;
    case DistortionKind::additive_noise: return 3;
  }
  return 4;
}

Tensor<float> quantize8(const Tensor<float>& img) {
  std::vector<float> out(img.numel());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(std::lround(std::clamp(img.values()[i], 0.0f, 1.0f) * 255.0f)) / 255.0f;
  return Tensor<float>(img.shape(), std::move(out));
}

}  // namespace

Tensor<float> gen_pristine(std::uint64_t seed, std::size_t height, std::size_t width) {
  if (height < 32 || width < 32) throw DimensionError("gen_pristine: image must be at least 32x32");
  Rng rng(seed);
  const auto plane = height * width;
  std::vector<float> img(3 * plane, 0.0f);

  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<float> p(plane, 0.5f);
    add_value_noise(p, height, width, 2, 0.16, rng);
    add_value_noise(p, height, width, 5, 0.08, rng);
    std::copy(p.begin(), p.end(), img.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }

  // Gradient shared by all channels with per-channel gain.
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double gx = std::cos(angle), gy = std::sin(angle);
  std::array<double, 3> gain{};
  for (auto& g : gain) g = rng.uniform(0.05, 0.15);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double t = (gx * (static_cast<double>(x) / width - 0.5) + gy * (static_cast<double>(y) / height - 0.5));
      for (std::size_t c = 0; c < 3; ++c) img[c * plane + y * width + x] += static_cast<float>(gain[c] * t);
    }

  // Flat-shaded rectangles with hard edges.
  const auto rects = 2 + rng.below(3);
  for (std::uint64_t r = 0; r < rects; ++r) {
    const auto y0 = rng.below(height), x0 = rng.below(width);
    const auto y1 = std::min<std::size_t>(height, y0 + 4 + rng.below(height / 2));
    const auto x1 = std::min<std::size_t>(width, x0 + 4 + rng.below(width / 2));
    std::array<double, 3> color{};
    for (auto& v : color) v = rng.uniform(0.25, 0.75);
    const double alpha = rng.uniform(0.4, 0.8);
    for (auto y = y0; y < y1; ++y)
      for (auto x = x0; x < x1; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          auto& v = img[c * plane + y * width + x];
          v = static_cast<float>((1.0 - alpha) * v + alpha * color[c]);
        }
  }

  // Fine texture of near-constant amplitude over the whole frame: a checker
  // plus luminance noise at 2, 4, 8 and 16 px scales. Each blur or block size
  // wipes out a different band, so severity stays visible across its range.
  const auto period = 2 + static_cast<std::size_t>(rng.below(2));
  const double amp = rng.uniform(0.06, 0.08);
  std::vector<float> texture(plane, 0.0f);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      texture[y * width + x] = static_cast<float>(((x / period + y / period) % 2 == 0) ? amp : -amp);
  for (std::size_t scale : {2, 4, 8, 16})
    add_value_noise(texture, height, width, std::max<std::size_t>(1, width / scale), 0.07, rng);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < plane; ++i) img[c * plane + i] += texture[i];

  for (auto& v : img) v = std::clamp(v, 0.0f, 1.0f);
  return Tensor<float>({3, height, width}, std::move(img));
}

Tensor<float> apply_distortion(const Tensor<float>& img, const DistortionSpec& spec) {
  if (img.ndim() != 3) throw DimensionError("apply_distortion: expected CxHxW, got " + shape_str(img.shape()));
  if (!(spec.severity >= 0.0 && spec.severity <= 1.0))
    throw ConfigError("distortion severity must lie in [0, 1], got " + std::to_string(spec.severity));
  const double s = spec.severity;
  switch (spec.kind) {
    case DistortionKind::gaussian_blur:
      if (s == 0.0) return img.detach();
      return gaussian_blur(img, 4.0 * s);
    case DistortionKind::additive_noise:
      if (s == 0.0) return img.detach();
      return additive_noise(img, 0.2 * s, spec.noise_seed);
    case DistortionKind::block_average: {
      const auto b = 1 + static_cast<std::size_t>(std::lround(7.0 * s));
      if (b == 1) return img.detach();
      return block_average(img, b);
    }
    case DistortionKind::contrast_reduce:
      if (s == 0.0) return img.detach();
      return contrast_reduce(img, 1.0 - 0.8 * s);
  }
  throw ConfigError("unknown distortion kind " + std::to_string(static_cast<int>(spec.kind)));
}

double pseudo_mos(std::span<const DistortionSpec> specs) {
  double mos = 1.0;
  for (const auto& d : specs) {
    if (!(d.severity >= 0.0 && d.severity <= 1.0)) throw ConfigError("distortion severity must lie in [0, 1]");
    mos *= 1.0 - 0.9 * std::pow(d.severity, 0.8);
  }
  return mos;
}

Sample make_sample(std::uint64_t seed, std::size_t index, std::size_t height, std::size_t width) {
  Rng rng = Rng::derive(seed, index);
  Sample s;
  s.seed = rng.next_u64();
  Rng local(s.seed);
  std::array<int, kDistortionKinds> kinds{0, 1, 2, 3};
  const auto count = 1 + local.below(3);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + local.below(kDistortionKinds - i);
    std::swap(kinds[i], kinds[j]);
    DistortionSpec d;
    d.kind = static_cast<DistortionKind>(kinds[i]);
    d.severity = local.uniform();
    d.noise_seed = local.next_u64();
    s.distortions.push_back(d);
  }
  std::sort(s.distortions.begin(), s.distortions.end(), [](const DistortionSpec& a, const DistortionSpec& b) {
    return application_rank(a.kind) < application_rank(b.kind);
  });
  Tensor<float> img = gen_pristine(local.next_u64(), height, width);
  for (const auto& d : s.distortions) img = apply_distortion(img, d);
  s.image = quantize8(img);
  s.mos = static_cast<float>(pseudo_mos(s.distortions));
  return s;
}

Dataset make_dataset(std::uint64_t seed, std::size_t n, std::size_t height, std::size_t width, double split_ratio) {
  if (n < 4) throw ConfigError("make_dataset: need at least 4 samples, got " + std::to_string(n));
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("make_dataset: split_ratio must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle = Rng::derive(seed, ~std::uint64_t{0});
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
  auto n_train = static_cast<std::size_t>(std::lround(static_cast<double>(n) * split_ratio));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

  Dataset data;
  for (std::size_t k = 0; k < n; ++k) {
    const auto idx = order[k];
    Sample s = make_sample(seed, idx, height, width);
    char name[64];
    std::snprintf(name, sizeof name, "%s/img_%05zu.ppm", k < n_train ? "train" : "val", idx);
    s.path = name;
    (k < n_train ? data.train : data.val).push_back(std::move(s));
  }
  return data;
}

std::string describe_distortions(std::span<const DistortionSpec> specs) {
  std::string out;
  char buf[64];
  for (const auto& d : specs) {
    if (!out.empty()) out += '|';
    std::snprintf(buf, sizeof buf, "%s:%.6f", to_string(d.kind).c_str(), d.severity);
    out += buf;
  }
  return out;
}

namespace {

std::vector<DistortionSpec> parse_distortions(const std::string& text) {
  std::vector<DistortionSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '|')) {
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("malformed distortion descriptor '" + item + "'");
    DistortionSpec d;
    d.kind = distortion_kind_from_string(item.substr(0, colon));
    d.severity = std::stod(item.substr(colon + 1));
    out.push_back(d);
  }
  return out;
}

}  // namespace

void write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir / "train");
  fs::create_directories(dir / "val");
  std::string manifest = "path,mos,seed,distortions\n";
  char buf[256];
  for (const auto* split : {&data.train, &data.val})
    for (const auto& s : *split) {
      write_ppm(dir / s.path, s.image);
      std::snprintf(buf, sizeof buf, "%s,%.9g,%llu,", s.path.c_str(), static_cast<double>(s.mos),
                    static_cast<unsigned long long>(s.seed));
      manifest += buf + describe_distortions(s.distortions) + "\n";
    }
  write_file(dir / "manifest.csv", manifest);
}

Dataset read_dataset(const fs::path& dir) {
  std::istringstream in(read_file(dir / "manifest.csv"));
  std::string line;
  if (!std::getline(in, line) || line != "path,mos,seed,distortions")
    throw ConfigError("manifest.csv in " + dir.string() + " has an unexpected header");
  Dataset data;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<std::string, 4> cols;
    std::stringstream ls(line);
    for (std::size_t i = 0; i < 3; ++i)
      if (!std::getline(ls, cols[i], ',')) throw ConfigError("manifest row '" + line + "' is malformed");
    std::getline(ls, cols[3]);
    Sample s;
    s.path = cols[0];
    s.mos = std::stof(cols[1]);
    s.seed = std::stoull(cols[2]);
    s.distortions = parse_distortions(cols[3]);
    s.image = read_ppm(dir / s.path);
    if (s.path.rfind("train/", 0) == 0)
      data.train.push_back(std::move(s));
    else if (s.path.rfind("val/", 0) == 0)
      data.val.push_back(std::move(s));
    else
      throw ConfigError("manifest path '" + s.path + "' is neither under train/ nor val/");
  }
  if (data.train.empty() || data.val.empty()) throw ConfigError("dataset in " + dir.string() + " lacks a split");
  return data;
}

}  // namespace miqa
