#include "miqa/config.hpp"

#include <cmath>
#include <json.hpp>
#include <set>

namespace miqa {

using nlohmann::json;

std::string to_string(Ablation a) { return a == Ablation::no_mal ? "no-mal" : "none"; }

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no-mal") return Ablation::no_mal;
  throw ConfigError("unknown ablation '" + s + "' (expected none or no-mal)");
}

std::size_t ModelConfig::grid() const {
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(tokens))));
  return g;
}

void ModelConfig::validate() const {
  if (backbone.stage_channels.size() != kPyramidLevels)
    throw ConfigError("backbone.stage_channels must list exactly 5 stages, got " +
                      std::to_string(backbone.stage_channels.size()));
  for (auto c : backbone.stage_channels)
    if (c == 0) throw ConfigError("backbone.stage_channels entries must be positive");
  if (backbone.input_channels == 0) throw ConfigError("backbone.input_channels must be positive");
  if (backbone.mixing_grid == 0) throw ConfigError("backbone.mixing_grid must be positive");
  if (c_mal == 0) throw ConfigError("model.c_mal must be positive");
  if (tokens == 0 || grid() * grid() != tokens)
    throw ConfigError("model.tokens must be a perfect square, got " + std::to_string(tokens));
  if (opinions == 0) throw ConfigError("model.opinions (M) must be at least 1");
  if (head.reduce_channels == 0 || head.spatial_channels == 0 || head.hidden == 0)
    throw ConfigError("head widths must be positive");
  if (head.flatten != head.spatial_channels * tokens)
    throw ConfigError("head.flatten = " + std::to_string(head.flatten) + " but spatial_channels x tokens = " +
                      std::to_string(head.spatial_channels * tokens));
  if (height == 0 || width == 0) throw ConfigError("model resolution must be positive");
}

ModelConfig ModelConfig::teacher() {
  ModelConfig cfg;
  cfg.backbone.global_mixing = true;
  return cfg;
}

ModelConfig ModelConfig::student() {
  ModelConfig cfg;
  cfg.backbone.global_mixing = false;
  return cfg;
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs must be at least 1");
  if (batch_size == 0) throw ConfigError("train.batch_size must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
  if (lr_min < 0.0 || lr_min > lr) throw ConfigError("train.lr_min must lie in [0, lr]");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be non-negative");
  if (cosine_period == 0) throw ConfigError("train.cosine_period must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("train.alpha must be non-negative");
}

void DataConfig::validate() const {
  if (count < 4) throw ConfigError("data.count must be at least 4 to form a train/val split");
  if (size < kMinInputExtent) throw ConfigError("data.size must be at least 32");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("data.split_ratio must lie in (0, 1)");
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + where + "." + key + "'");
}

template <class V>
void read(const json& j, const char* key, V& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for " + where + "." + key + ": " + e.what());
  }
}

json model_to_json(const ModelConfig& c) {
  return {
      {"backbone",
       {{"stage_channels", c.backbone.stage_channels},
        {"global_mixing", c.backbone.global_mixing},
        {"input_channels", c.backbone.input_channels},
        {"mixing_grid", c.backbone.mixing_grid}}},
      {"c_mal", c.c_mal},
      {"tokens", c.tokens},
      {"opinions", c.opinions},
      {"head",
       {{"reduce_channels", c.head.reduce_channels},
        {"spatial_channels", c.head.spatial_channels},
        {"flatten", c.head.flatten},
        {"hidden", c.head.hidden}}},
      {"resolution", {c.height, c.width}},
      {"ablation", to_string(c.ablation)},
  };
}

void model_from_json(const json& j, ModelConfig& c) {
  reject_unknown(j, {"backbone", "c_mal", "tokens", "opinions", "head", "resolution", "ablation"}, "model");
  if (j.contains("backbone")) {
    const auto& b = j["backbone"];
    reject_unknown(b, {"stage_channels", "global_mixing", "input_channels", "mixing_grid"}, "model.backbone");
    read(b, "stage_channels", c.backbone.stage_channels, "model.backbone");
    read(b, "global_mixing", c.backbone.global_mixing, "model.backbone");
    read(b, "input_channels", c.backbone.input_channels, "model.backbone");
    read(b, "mixing_grid", c.backbone.mixing_grid, "model.backbone");
  }
  read(j, "c_mal", c.c_mal, "model");
  read(j, "tokens", c.tokens, "model");
  read(j, "opinions", c.opinions, "model");
  if (j.contains("head")) {
    const auto& h = j["head"];
    reject_unknown(h, {"reduce_channels", "spatial_channels", "flatten", "hidden"}, "model.head");
    read(h, "reduce_channels", c.head.reduce_channels, "model.head");
    read(h, "spatial_channels", c.head.spatial_channels, "model.head");
    read(h, "flatten", c.head.flatten, "model.head");
    read(h, "hidden", c.head.hidden, "model.head");
  }
  if (j.contains("resolution")) {
    const auto& r = j["resolution"];
    if (r.is_number_unsigned()) {
      c.height = c.width = r.get<std::size_t>();
    } else if (r.is_array() && r.size() == 2 && r[0].is_number_unsigned() && r[1].is_number_unsigned()) {
      c.height = r[0].get<std::size_t>();
      c.width = r[1].get<std::size_t>();
    } else {
      throw ConfigError("model.resolution must be N or [H, W]");
    }
  }
  if (j.contains("ablation")) {
    if (!j["ablation"].is_string()) throw ConfigError("model.ablation must be a string");
    c.ablation = ablation_from_string(j["ablation"].get<std::string>());
  }
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},   {"batch_size", t.batch_size},
          {"lr", t.lr},           {"lr_min", t.lr_min},
          {"weight_decay", t.weight_decay}, {"cosine_period", t.cosine_period},
          {"alpha", t.alpha},     {"kd", t.kd},
          {"flip", t.flip},       {"seed", t.seed}};
}

void train_from_json(const json& j, TrainConfig& t) {
  reject_unknown(j, {"epochs", "batch_size", "lr", "lr_min", "weight_decay", "cosine_period", "alpha", "kd", "flip", "seed"},
                 "train");
  read(j, "epochs", t.epochs, "train");
  read(j, "batch_size", t.batch_size, "train");
  read(j, "lr", t.lr, "train");
  read(j, "lr_min", t.lr_min, "train");
  read(j, "weight_decay", t.weight_decay, "train");
  read(j, "cosine_period", t.cosine_period, "train");
  read(j, "alpha", t.alpha, "train");
  read(j, "kd", t.kd, "train");
  read(j, "flip", t.flip, "train");
  read(j, "seed", t.seed, "train");
}

json data_to_json(const DataConfig& d) {
  return {{"seed", d.seed}, {"count", d.count}, {"size", d.size}, {"split_ratio", d.split_ratio}};
}

void data_from_json(const json& j, DataConfig& d) {
  reject_unknown(j, {"seed", "count", "size", "split_ratio"}, "data");
  read(j, "seed", d.seed, "data");
  read(j, "count", d.count, "data");
  read(j, "size", d.size, "data");
  read(j, "split_ratio", d.split_ratio, "data");
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

json run_to_json(const RunConfig& cfg) {
  return {{"model", model_to_json(cfg.model)}, {"train", train_to_json(cfg.train)}, {"data", data_to_json(cfg.data)}};
}

void run_from_json(const json& j, RunConfig& cfg) {
  reject_unknown(j, {"model", "train", "data"}, "config");
  if (j.contains("model")) model_from_json(j["model"], cfg.model);
  if (j.contains("train")) train_from_json(j["train"], cfg.train);
  if (j.contains("data")) data_from_json(j["data"], cfg.data);
}

}  // namespace

std::string model_config_to_json(const ModelConfig& cfg) { return model_to_json(cfg).dump(); }

ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig cfg;
  model_from_json(parse(text), cfg);
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& cfg) { return run_to_json(cfg).dump(2) + "\n"; }

RunConfig run_config_from_json(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  run_from_json(parse(text), cfg);
  cfg.model.validate();
  cfg.train.validate();
  cfg.data.validate();
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json patch = json::object();
  json* cursor = &patch;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override key '" + path + "' is malformed");
    if (dot == std::string::npos) {
      (*cursor)[key] = value;
      break;
    }
    cursor = &(*cursor)[key];
    start = dot + 1;
  }
  run_from_json(patch, cfg);
  cfg.model.validate();
  cfg.train.validate();
  cfg.data.validate();
}

}  // namespace miqa
