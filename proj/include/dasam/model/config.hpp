#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"

namespace dasam::model {

/// Four-stage encoder layout shared by the RGB and depth branches.
struct EncoderConfig {
  std::array<int, 4> widths{24, 48, 96, 128};
  std::array<int, 4> depths{1, 1, 2, 2};
  /// Total spatial downsampling; power of two in [2, 16].
  int downsample = 16;
  /// Attention heads in the stage-4 lightweight attention blocks.
  int heads = 4;
  int expand_ratio = 4;
  bool use_bias = true;
  bool use_norm = true;
  std::string preset = "custom";

  int embed_dim() const noexcept { return widths[3]; }
  /// Throws ConfigError listing every violated field.
  void validate() const;
};

struct HeadConfig {
  int dim = 64;
  int depth = 2;
  int heads = 4;
  int mlp_dim = 128;
  int attention_downsample = 2;
  int iou_hidden = 64;

  void validate() const;
};

enum class Variant { rgb_only, depth_aware };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ModelConfig {
  std::string preset = "toy";
  EncoderConfig encoder;
  HeadConfig head;
  Variant variant = Variant::depth_aware;
  double alpha_init = 0.1;
  /// Default square input resolution used for accounting and benchmarks.
  int image_size = 128;
  std::uint64_t seed = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const HeadConfig& c);
void from_json(const nlohmann::json& j, HeadConfig& c);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Directory holding presets.json; overridable with DASAM_CONFIG_DIR.
std::filesystem::path default_config_dir();

/// Reads the named preset from `<config_dir>/presets.json`.
ModelConfig load_preset(const std::string& name, const std::filesystem::path& config_dir = default_config_dir());

}  // namespace dasam::model
