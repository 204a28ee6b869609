#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dasam::data {

/// Axis-aligned box in pixel coordinates; max edges are exclusive.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const noexcept { return x_max - x_min; }
  int height() const noexcept { return y_max - y_min; }
  long area() const noexcept { return static_cast<long>(width()) * height(); }
  bool operator==(const BBox&) const = default;
};

/// Row-major H x W x 3 image, values in [0,1].
struct RgbImage {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  RgbImage() = default;
  RgbImage(int h, int w);

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }

  /// Throws ContractViolation on a size < 16, wrong buffer length or
  /// out-of-range value.
  void validate() const;
  bool operator==(const RgbImage&) const = default;
};

enum class DepthSource { external_estimator, synthetic_ground_truth };

std::string to_string(DepthSource s);
DepthSource depth_source_from_string(const std::string& s);

/// Relative (unitless) depth, row-major H x W. Smaller is nearer.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  DepthSource source = DepthSource::synthetic_ground_truth;

  DepthMap() = default;
  DepthMap(int h, int w, DepthSource src = DepthSource::synthetic_ground_truth);

  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }

  void validate() const;
  bool operator==(const DepthMap&) const = default;
};

/// Binary mask with its cached area and tight bounding box.
///
/// A mask with zero area is the designated "empty mask" value: it carries
/// its shape but no bbox. Dataset records never contain empty masks
/// (`DatasetRecord::validate` rejects them); predictions and metrics may.
class InstanceMask {
 public:
  InstanceMask() = default;

  /// Builds a mask from a row-major bitmap of 0/1 bytes (nonzero -> 1).
  static InstanceMask from_bitmap(int height, int width, std::vector<std::uint8_t> bits);
  static InstanceMask empty(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  long area() const noexcept { return area_; }
  bool is_empty() const noexcept { return area_ == 0; }
  /// Tight box of the nonzero pixels. All-zero for an empty mask.
  const BBox& bbox() const noexcept { return bbox_; }

  bool at(int y, int x) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  std::span<const std::uint8_t> bits() const noexcept { return bits_; }

  bool operator==(const InstanceMask&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  long area_ = 0;
  BBox bbox_{};
  std::vector<std::uint8_t> bits_;
};

enum class ShapeKind { ellipse, rectangle, triangle };

std::string to_string(ShapeKind k);
ShapeKind shape_kind_from_string(const std::string& s);

/// Generator-side description of one synthetic object, kept as provenance so
/// silhouettes can be re-derived independently of the rendered masks.
struct SceneObject {
  ShapeKind kind = ShapeKind::ellipse;
  double center_x = 0.0;
  double center_y = 0.0;
  double half_width = 1.0;
  double half_height = 1.0;
  double angle = 0.0;  // radians, counter-clockwise in image coordinates
  int layer = 1;       // 1 is nearest
  std::array<float, 3> color{};
  bool operator==(const SceneObject&) const = default;
};

/// One image with aligned depth and instance masks.
///
/// When `objects` is non-empty (synthetic scenes), `mask_object[i]` is the
/// index into `objects` that produced `masks[i]`.
struct DatasetRecord {
  std::string id;
  RgbImage image;
  DepthMap depth;
  std::vector<InstanceMask> masks;
  std::vector<SceneObject> objects;
  std::vector<int> mask_object;

  void validate() const;
  bool operator==(const DatasetRecord&) const = default;
};

}  // namespace dasam::data
