#include "dasam/model/fusion.hpp"

#include "dasam/error.hpp"

namespace dasam::model {

FeatureEmbedding fuse(const FeatureEmbedding& rgb, const FeatureEmbedding& depth, const FusionParams& params) {
  if (rgb.source != EmbeddingSource::rgb || depth.source != EmbeddingSource::depth) {
    throw ContractViolation("fuse: expected an rgb embedding and a depth embedding");
  }
  if (!rgb.grid.sizes().equals(depth.grid.sizes())) {
    throw ContractViolation("fuse: rgb and depth embeddings differ in shape");
  }
  if (!params.alpha.defined() || params.alpha.numel() != 1) {
    throw ContractViolation("fuse: alpha must be a scalar tensor");
  }
  return FeatureEmbedding{rgb.grid + params.alpha * depth.grid, EmbeddingSource::fused};
}

}  // namespace dasam::model
