#include "miqa/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace miqa {

namespace {

struct Header {
  std::size_t width = 0, height = 0;
  std::size_t payload_offset = 0;
};

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < b_.size()) {
      if (std::isspace(static_cast<unsigned char>(b_[pos_]))) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* field) {
    skip_space_and_comments();
    const auto start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 24)) throw FormatError(field, start, "value too large");
      ++pos_;
    }
    if (pos_ == start) throw FormatError(field, start, "expected a decimal number");
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }
  bool at_space() const { return pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_])); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

Header parse_header(const std::string& bytes, const char* magic) {
  if (bytes.size() < 2 || bytes[0] != magic[0] || bytes[1] != magic[1]) {
    const std::string got = bytes.substr(0, std::min<std::size_t>(2, bytes.size()));
    throw FormatError("magic", 0, std::string("expected ") + magic + ", got '" + got + "'");
  }
  HeaderReader r(bytes);
  r.advance();
  r.advance();
  if (!r.at_space()) throw FormatError("magic", 2, "expected whitespace after magic");
  Header h;
  h.width = r.number("width");
  if (h.width == 0) throw FormatError("width", r.pos(), "must be positive");
  h.height = r.number("height");
  if (h.height == 0) throw FormatError("height", r.pos(), "must be positive");
  const auto maxval_at = r.pos();
  const auto maxval = r.number("maxval");
  if (maxval != 255) throw FormatError("maxval", maxval_at, "only 255 is supported, got " + std::to_string(maxval));
  if (!r.at_space()) throw FormatError("maxval", r.pos(), "expected a single whitespace byte before the payload");
  r.advance();
  h.payload_offset = r.pos();
  return h;
}

std::string header(const char* magic, std::size_t w, std::size_t h) {
  return std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

void check_payload(const std::string& bytes, const Header& h, std::size_t channels) {
  const auto need = h.width * h.height * channels;
  const auto have = bytes.size() - h.payload_offset;
  if (have < need)
    throw FormatError("payload", bytes.size(),
                      "truncated: expected " + std::to_string(need) + " bytes, found " + std::to_string(have));
}

}  // namespace

std::string encode_ppm(const Tensor<float>& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw DimensionError("encode_ppm: expected 3xHxW, got " + shape_str(rgb.shape()));
  const auto h = rgb.dim(1), w = rgb.dim(2);
  std::string out = header("P6", w, h);
  const auto base = out.size();
  out.resize(base + 3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        out[base + (y * w + x) * 3 + c] = static_cast<char>(quantize(rgb.values()[(c * h + y) * w + x]));
  return out;
}

Tensor<float> decode_ppm(const std::string& bytes) {
  const auto hd = parse_header(bytes, "P6");
  check_payload(bytes, hd, 3);
  std::vector<float> data(3 * hd.width * hd.height);
  for (std::size_t y = 0; y < hd.height; ++y)
    for (std::size_t x = 0; x < hd.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const auto byte = static_cast<unsigned char>(bytes[hd.payload_offset + (y * hd.width + x) * 3 + c]);
        data[(c * hd.height + y) * hd.width + x] = static_cast<float>(byte) / 255.0f;
      }
  return Tensor<float>({3, hd.height, hd.width}, std::move(data));
}

std::string encode_pgm(const GrayImage& img) {
  if (img.pixels.size() != img.height * img.width || img.height == 0 || img.width == 0)
    throw DimensionError("encode_pgm: pixel count does not match extents");
  return header("P5", img.width, img.height) + std::string(img.pixels.begin(), img.pixels.end());
}

GrayImage decode_pgm(const std::string& bytes) {
  const auto hd = parse_header(bytes, "P5");
  check_payload(bytes, hd, 1);
  GrayImage img{hd.height, hd.width, {}};
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data()) + hd.payload_offset;
  img.pixels.assign(p, p + hd.width * hd.height);
  return img;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_ppm(const std::filesystem::path& path, const Tensor<float>& rgb) { write_file(path, encode_ppm(rgb)); }
Tensor<float> read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file(path)); }
void write_pgm(const std::filesystem::path& path, const GrayImage& img) { write_file(path, encode_pgm(img)); }
GrayImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

}  // namespace miqa
