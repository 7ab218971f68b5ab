#include "miqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "miqa/image_io.hpp"

namespace miqa {

namespace {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}

  std::uint32_t u32(const std::string& field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  std::string bytes(std::size_t n, const std::string& field) {
    need(n, field);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& field) const {
    if (b_.size() - pos_ < n)
      throw FormatError(field, pos_, "truncated: need " + std::to_string(n) + " bytes, " +
                                         std::to_string(b_.size() - pos_) + " left");
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_model(Model<float>& model) {
  std::string out = "MIQA";
  put_u32(out, kCheckpointVersion);
  put_str(out, model_config_to_json(model.config()));
  const auto params = model.named_parameters();
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_str(out, name);
    put_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Model<float> deserialize_model(const std::string& bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(4, "magic");
  if (magic != "MIQA") throw FormatError("magic", 0, "expected 'MIQA', got '" + magic + "'");
  const auto version_at = r.pos();
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw FormatError("version", version_at, "unsupported version " + std::to_string(version));
  const auto cfg_len_at = r.pos();
  const auto cfg_len = r.u32("config length");
  if (cfg_len > r.remaining()) throw FormatError("config", cfg_len_at + 4, "truncated config blob");
  const auto cfg_at = r.pos();
  ModelConfig cfg;
  try {
    cfg = model_config_from_json(r.bytes(cfg_len, "config"));
  } catch (const ConfigError& e) {
    throw FormatError("config", cfg_at, e.what());
  }

  Model<float> model(cfg, 0);
  auto params = model.named_parameters();
  const auto count_at = r.pos();
  const auto count = r.u32("tensor count");
  if (count != params.size())
    throw FormatError("tensor count", count_at,
                      "file has " + std::to_string(count) + " tensors, model needs " + std::to_string(params.size()));
  std::string prev;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_at = r.pos();
    const auto name_len = r.u32("tensor name length");
    const auto name = r.bytes(name_len, "tensor name");
    auto it = params.find(name);
    if (it == params.end()) throw FormatError("tensor name", name_at, "unexpected tensor '" + name + "'");
    if (k > 0 && !(prev < name)) throw FormatError("tensor name", name_at, "tensors out of order at '" + name + "'");
    prev = name;
    auto& t = it->second;
    const auto ndim_at = r.pos();
    const auto ndim = r.u32("ndim");
    if (ndim != t.ndim()) throw FormatError("ndim", ndim_at, "tensor '" + name + "' rank mismatch");
    for (std::size_t d = 0; d < ndim; ++d) {
      const auto dim_at = r.pos();
      if (r.u32("dims") != t.dim(d)) throw FormatError("dims", dim_at, "tensor '" + name + "' extent mismatch");
    }
    auto out = t.mutable_data();
    for (auto& v : out) v = r.f32("data");
  }
  if (r.remaining() != 0) throw FormatError("trailer", r.pos(), "unexpected bytes after last tensor");
  return model;
}

void save_model(Model<float>& model, const std::filesystem::path& path) { write_file(path, serialize_model(model)); }

Model<float> load_model(const std::filesystem::path& path) { return deserialize_model(read_file(path)); }

Model<float> load_model_expecting(const std::filesystem::path& path, const BackboneConfig& expected) {
  auto model = load_model(path);
  const auto& got = model.config().backbone;
  if (got.global_mixing != expected.global_mixing)
    throw ConfigError(path.string() + ": checkpoint backbone has global_mixing=" +
                      (got.global_mixing ? "true" : "false") + ", expected " +
                      (expected.global_mixing ? "true" : "false"));
  if (!(got == expected)) throw ConfigError(path.string() + ": checkpoint backbone configuration differs");
  return model;
}

}  // namespace miqa
