#include "dasam/model/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <vector>

#include "dasam/error.hpp"

#ifndef DASAM_CONFIG_DIR
#define DASAM_CONFIG_DIR "configs"
#endif

namespace dasam::model {
using json = nlohmann::json;

void EncoderConfig::validate() const {
  std::vector<std::string> bad;
  for (int i = 0; i < 4; ++i) {
    if (widths[static_cast<std::size_t>(i)] <= 0) bad.push_back("model.encoder.widths[" + std::to_string(i) + "]: must be > 0");
    if (depths[static_cast<std::size_t>(i)] < 0) bad.push_back("model.encoder.depths[" + std::to_string(i) + "]: must be >= 0");
  }
  if (downsample != 2 && downsample != 4 && downsample != 8 && downsample != 16) {
    bad.push_back("model.encoder.downsample: must be a power of two in [2, 16]");
  }
  if (heads <= 0 || widths[3] % std::max(heads, 1) != 0) {
    bad.push_back("model.encoder.heads: must be > 0 and divide the stage-4 width");
  }
  if (expand_ratio < 1) bad.push_back("model.encoder.expand_ratio: must be >= 1");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

void HeadConfig::validate() const {
  std::vector<std::string> bad;
  if (dim <= 0 || dim % 8 != 0) bad.push_back("model.head.dim: must be a positive multiple of 8");
  if (depth < 1) bad.push_back("model.head.depth: must be >= 1");
  if (heads <= 0) bad.push_back("model.head.heads: must be > 0");
  if (attention_downsample < 1 || (dim % std::max(attention_downsample, 1)) != 0 ||
      heads <= 0 || (dim / std::max(attention_downsample, 1)) % heads != 0) {
    bad.push_back("model.head.attention_downsample: dim / attention_downsample must be divisible by heads");
  }
  if (heads > 0 && dim % heads != 0) bad.push_back("model.head.heads: must divide dim");
  if (mlp_dim <= 0) bad.push_back("model.head.mlp_dim: must be > 0");
  if (iou_hidden <= 0) bad.push_back("model.head.iou_hidden: must be > 0");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

void ModelConfig::validate() const {
  std::vector<std::string> bad;
  try {
    encoder.validate();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  try {
    head.validate();
  } catch (const ConfigError& e) {
    bad.insert(bad.end(), e.fields().begin(), e.fields().end());
  }
  if (image_size < 16 || image_size % encoder.downsample != 0) {
    bad.push_back("model.image_size: must be >= 16 and divisible by the encoder downsampling");
  }
  if (!std::isfinite(alpha_init)) bad.push_back("model.alpha_init: must be finite");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

std::string to_string(Variant v) { return v == Variant::rgb_only ? "rgb_only" : "depth_aware"; }

Variant variant_from_string(const std::string& s) {
  if (s == "rgb_only") return Variant::rgb_only;
  if (s == "depth_aware") return Variant::depth_aware;
  throw ConfigError({"model.variant: unknown variant '" + s + "' (expected rgb_only or depth_aware)"});
}

void to_json(json& j, const EncoderConfig& c) {
  j = json{{"widths", c.widths},     {"depths", c.depths},           {"downsample", c.downsample},
           {"heads", c.heads},       {"expand_ratio", c.expand_ratio}, {"use_bias", c.use_bias},
           {"use_norm", c.use_norm}, {"preset", c.preset}};
}

void from_json(const json& j, EncoderConfig& c) {
  c.widths = j.value("widths", c.widths);
  c.depths = j.value("depths", c.depths);
  c.downsample = j.value("downsample", c.downsample);
  c.heads = j.value("heads", c.heads);
  c.expand_ratio = j.value("expand_ratio", c.expand_ratio);
  c.use_bias = j.value("use_bias", c.use_bias);
  c.use_norm = j.value("use_norm", c.use_norm);
  c.preset = j.value("preset", c.preset);
}

void to_json(json& j, const HeadConfig& c) {
  j = json{{"dim", c.dim},         {"depth", c.depth},
           {"heads", c.heads},     {"mlp_dim", c.mlp_dim},
           {"attention_downsample", c.attention_downsample}, {"iou_hidden", c.iou_hidden}};
}

void from_json(const json& j, HeadConfig& c) {
  c.dim = j.value("dim", c.dim);
  c.depth = j.value("depth", c.depth);
  c.heads = j.value("heads", c.heads);
  c.mlp_dim = j.value("mlp_dim", c.mlp_dim);
  c.attention_downsample = j.value("attention_downsample", c.attention_downsample);
  c.iou_hidden = j.value("iou_hidden", c.iou_hidden);
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"preset", c.preset},         {"encoder", c.encoder},       {"head", c.head},
           {"variant", to_string(c.variant)}, {"alpha_init", c.alpha_init}, {"image_size", c.image_size},
           {"seed", c.seed}};
}

void from_json(const json& j, ModelConfig& c) {
  c.preset = j.value("preset", c.preset);
  if (j.contains("encoder")) j.at("encoder").get_to(c.encoder);
  if (j.contains("head")) j.at("head").get_to(c.head);
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.alpha_init = j.value("alpha_init", c.alpha_init);
  c.image_size = j.value("image_size", c.image_size);
  c.seed = j.value("seed", c.seed);
}

std::filesystem::path default_config_dir() {
  if (const char* env = std::getenv("DASAM_CONFIG_DIR"); env && *env) return env;
  return DASAM_CONFIG_DIR;
}

ModelConfig load_preset(const std::string& name, const std::filesystem::path& config_dir) {
  const auto path = config_dir / "presets.json";
  std::ifstream in(path);
  if (!in) throw ConfigError({"model.preset: cannot open " + path.string()});
  json all;
  try {
    all = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({"model.preset: " + path.string() + " is not valid JSON: " + e.what()});
  }
  if (!all.contains(name)) throw ConfigError({"model.preset: unknown preset '" + name + "'"});
  ModelConfig cfg;
  all.at(name).get_to(cfg);
  cfg.preset = name;
  cfg.encoder.preset = name;
  cfg.validate();
  return cfg;
}

}  // namespace dasam::model
