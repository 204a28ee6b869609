#pragma once

#include <torch/torch.h>

#include "dasam/model/encoder.hpp"

namespace dasam::model {

/// Learnable scalar gate on the depth embedding.
struct FusionParams {
  torch::Tensor alpha;  // 0-dim, requires_grad in training
};

/// F_fuse = F_rgb + alpha * F_dep, elementwise.
///
/// Throws ContractViolation when the grids differ in shape or the sources
/// are not (rgb, depth).
FeatureEmbedding fuse(const FeatureEmbedding& rgb, const FeatureEmbedding& depth, const FusionParams& params);

}  // namespace dasam::model
