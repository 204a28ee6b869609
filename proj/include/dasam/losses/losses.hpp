#pragma once

#include <torch/torch.h>
#include <vector>

#include "json.hpp"

namespace dasam::losses {

// All losses accept logits/gt as [H, W] or a batch [N, H, W]; gt holds 0/1
// values in the logits' dtype. The *_per_mask variants return one value per
// mask, the plain ones their mean.

struct LossWeights {
  double mask = 20.0;
  double dice = 1.0;
  double iou = 1.0;
  double direct = 0.5;
  double aux = 0.2;

  /// Throws ConfigError when any weight is negative or non-finite.
  void validate() const;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct LossBreakdown {
  double mask = 0.0;
  double dice = 0.0;
  double iou = 0.0;
  double direct = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

void to_json(nlohmann::json& j, const LossBreakdown& b);

/// Weighted sum of the five terms, accumulated with compensated summation
/// so the result is the correctly rounded total for typical inputs.
LossBreakdown total_loss(double mask, double dice, double iou, double direct, double aux, const LossWeights& w);

torch::Tensor mask_bce_per_mask(const torch::Tensor& logits, const torch::Tensor& gt);
torch::Tensor dice_per_mask(const torch::Tensor& logits, const torch::Tensor& gt, double eps = 1.0);
/// Squared error against the IoU of (logits > 0) with gt; the target is a
/// constant.
torch::Tensor iou_regression_per_mask(const torch::Tensor& predicted_iou, const torch::Tensor& logits,
                                      const torch::Tensor& gt);
/// Each direct map is compared (BCE + dice) with gt max-pooled to its size;
/// the result is the mean over maps.
torch::Tensor direct_supervision_per_mask(const std::vector<torch::Tensor>& direct_logits, const torch::Tensor& gt);
/// BCE restricted to pixels within Chebyshev distance 2 of the gt boundary;
/// 0 for masks with no boundary.
torch::Tensor boundary_aux_per_mask(const torch::Tensor& logits, const torch::Tensor& gt);

torch::Tensor mask_bce_loss(const torch::Tensor& logits, const torch::Tensor& gt);
torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& gt, double eps = 1.0);
torch::Tensor iou_regression_loss(const torch::Tensor& predicted_iou, const torch::Tensor& logits,
                                  const torch::Tensor& gt);
torch::Tensor direct_supervision_loss(const std::vector<torch::Tensor>& direct_logits, const torch::Tensor& gt);
torch::Tensor boundary_aux_loss(const torch::Tensor& logits, const torch::Tensor& gt);

/// IoU of (logits > 0) against gt per mask; both empty -> 1.
torch::Tensor hard_iou(const torch::Tensor& logits, const torch::Tensor& gt);
/// Inner boundary of gt: foreground pixels with a background 8-neighbour
/// inside the canvas.
torch::Tensor inner_boundary(const torch::Tensor& gt);
/// Pixels within Chebyshev distance `radius` of the inner boundary.
torch::Tensor boundary_band(const torch::Tensor& gt, int radius = 2);

}  // namespace dasam::losses
