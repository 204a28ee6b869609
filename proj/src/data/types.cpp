#include "dasam/data/types.hpp"

#include <algorithm>
#include <cmath>

#include "dasam/error.hpp"

namespace dasam::data {

RgbImage::RgbImage(int h, int w)
    : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

void RgbImage::validate() const {
  if (height < 16 || width < 16) {
    throw ContractViolation("RgbImage: height and width must be >= 16, got " + std::to_string(height) +
                            "x" + std::to_string(width));
  }
  if (pixels.size() != static_cast<std::size_t>(height) * width * 3) {
    throw ContractViolation("RgbImage: pixel buffer does not hold exactly 3 channels");
  }
  for (float v : pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw ContractViolation("RgbImage: pixel value outside [0,1]");
    }
  }
}

std::string to_string(DepthSource s) {
  return s == DepthSource::external_estimator ? "external_estimator" : "synthetic_ground_truth";
}

DepthSource depth_source_from_string(const std::string& s) {
  if (s == "external_estimator") return DepthSource::external_estimator;
  if (s == "synthetic_ground_truth") return DepthSource::synthetic_ground_truth;
  throw MalformedPayload("depth_source", "unknown depth source '" + s + "'");
}

DepthMap::DepthMap(int h, int w, DepthSource src)
    : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0f), source(src) {}

void DepthMap::validate() const {
  if (values.size() != static_cast<std::size_t>(height) * width) {
    throw ContractViolation("DepthMap: buffer size does not match shape");
  }
  for (float v : values) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw ContractViolation("DepthMap: values must be finite and >= 0");
    }
  }
}

InstanceMask InstanceMask::from_bitmap(int height, int width, std::vector<std::uint8_t> bits) {
  if (height <= 0 || width <= 0 || bits.size() != static_cast<std::size_t>(height) * width) {
    throw ContractViolation("InstanceMask: bitmap size does not match " + std::to_string(height) + "x" +
                            std::to_string(width));
  }
  InstanceMask m;
  m.height_ = height;
  m.width_ = width;
  int x0 = width, y0 = height, x1 = -1, y1 = -1;
  long area = 0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto& b = bits[static_cast<std::size_t>(y) * width + x];
      if (b == 0) continue;
      b = 1;
      ++area;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, y);
      y1 = std::max(y1, y);
    }
  }
  m.area_ = area;
  if (area > 0) {
    m.bbox_ = BBox{x0, y0, x1 + 1, y1 + 1};
  }
  m.bits_ = std::move(bits);
  return m;
}

InstanceMask InstanceMask::empty(int height, int width) {
  return from_bitmap(height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(height) * width, 0));
}

std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::rectangle: return "rectangle";
    case ShapeKind::triangle: return "triangle";
  }
  return "ellipse";
}

ShapeKind shape_kind_from_string(const std::string& s) {
  if (s == "ellipse") return ShapeKind::ellipse;
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "triangle") return ShapeKind::triangle;
  throw MalformedPayload("shape", "unknown shape kind '" + s + "'");
}

void DatasetRecord::validate() const {
  image.validate();
  depth.validate();
  if (depth.height != image.height || depth.width != image.width) {
    throw ContractViolation("DatasetRecord " + id + ": depth shape differs from image shape");
  }
  if (masks.empty()) {
    throw ContractViolation("DatasetRecord " + id + ": no instance masks");
  }
  for (const auto& m : masks) {
    if (m.height() != image.height || m.width() != image.width) {
      throw ContractViolation("DatasetRecord " + id + ": mask shape differs from image shape");
    }
    if (m.is_empty()) {
      throw ContractViolation("DatasetRecord " + id + ": empty instance mask");
    }
  }
  if (!objects.empty() && mask_object.size() != masks.size()) {
    throw ContractViolation("DatasetRecord " + id + ": mask/object provenance length mismatch");
  }
}

}  // namespace dasam::data
