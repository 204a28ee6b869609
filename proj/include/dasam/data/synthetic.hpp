#pragma once

#include <cstdint>
#include <vector>

#include "dasam/data/types.hpp"
#include "json.hpp"

namespace dasam::data {

/// Procedural RGB-D scene generator settings.
///
/// Objects are placed on distinct depth layers; object colours are drawn
/// close to the background colour (`color_contrast`) and overlaid with
/// per-pixel noise (`texture_noise`), so RGB boundaries can be ambiguous
/// while depth boundaries are always sharp.
struct SyntheticSceneConfig {
  int height = 128;
  int width = 128;
  int min_objects = 1;
  int max_objects = 4;
  std::vector<ShapeKind> shapes{ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::triangle};
  double occlusion_prob = 0.5;
  double texture_noise = 0.1;
  std::uint64_t seed = 0;

  /// Object extent (pixels, before rotation), drawn log-uniformly.
  double min_extent = 8.0;
  double max_extent = 64.0;
  /// Max per-channel offset of an object colour from the background colour.
  double color_contrast = 0.3;
  /// Intra-object depth ramp; must stay below the unit inter-layer gap.
  double depth_gradient = 0.25;
  /// Objects whose visible area falls below this are not emitted as masks.
  int min_visible_area = 1;

  /// Throws ConfigError listing every violated field.
  void validate() const;
};

void to_json(nlohmann::json& j, const SyntheticSceneConfig& c);
/// Missing keys keep their current values. Throws ConfigError on an unknown
/// shape name.
void from_json(const nlohmann::json& j, SyntheticSceneConfig& c);

/// Deterministic in (config, seed). Nearer objects occlude farther ones and
/// every mask holds only the visible pixels of its object.
DatasetRecord generate_synthetic_scene(const SyntheticSceneConfig& config, std::uint64_t seed);

/// Point-in-shape test at a continuous image position.
bool shape_contains(const SceneObject& object, double px, double py);

/// Rasterizes the full (unoccluded) silhouette, sampling pixel centres.
InstanceMask rasterize_silhouette(const SceneObject& object, int height, int width);

}  // namespace dasam::data
