#pragma once

#include <optional>

#include "dasam/data/types.hpp"
#include "dasam/model/segmentation_model.hpp"

namespace dasam::model {

struct Inference {
  data::InstanceMask mask;
  double predicted_iou = 0.0;
  torch::Tensor logits;  // [H, W] at the original image size
};

/// Embeds one scene once and answers any number of prompt sets against it.
/// Images whose sides are not multiples of the encoder stride are zero-padded
/// on the bottom/right; logits are cropped back. Prompts are in original
/// pixel coordinates and validated against the original size.
class ScenePredictor {
 public:
  /// `depth` may be null: the depth-aware model then sees all-zero depth.
  ScenePredictor(SegmentationModel model, const data::RgbImage& image, const data::DepthMap* depth);

  Inference predict(const PromptSet& prompts) const;
  bool depth_degenerate() const noexcept { return depth_degenerate_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

 private:
  mutable SegmentationModel model_;
  FeatureEmbedding embedding_;
  int height_ = 0, width_ = 0, padded_h_ = 0, padded_w_ = 0;
  bool depth_degenerate_ = false;
};

}  // namespace dasam::model
