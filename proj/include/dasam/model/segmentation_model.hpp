#pragma once

#include <cstdint>
#include <torch/torch.h>
#include <vector>

#include "dasam/data/depth.hpp"
#include "dasam/data/types.hpp"
#include "dasam/model/config.hpp"
#include "dasam/model/decoder.hpp"
#include "dasam/model/encoder.hpp"
#include "dasam/model/fusion.hpp"
#include "dasam/model/prompt.hpp"

namespace dasam::model {

/// Which embedding feeds the head. Stage-1 training routes the depth
/// embedding straight into the head.
enum class EmbedMode { fused, rgb_only, depth_only };

/// [3, H, W] float tensor from an image.
torch::Tensor image_to_tensor(const data::RgbImage& image);
/// [3, H, W] float tensor from prepared (replicated) depth.
torch::Tensor depth_to_tensor(const data::PreparedDepth& depth);

/// Encoders + fusion + SAM-style head. The rgb_only variant has no depth
/// encoder and no alpha.
class SegmentationModelImpl : public torch::nn::Module {
 public:
  /// Parameters are drawn from config.seed: the RGB encoder and head draws do
  /// not depend on the variant, so both variants start from the same weights.
  explicit SegmentationModelImpl(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return config_.variant; }
  bool depth_aware() const noexcept { return config_.variant == Variant::depth_aware; }

  /// rgb/depth are [B, 3, H, W]. An undefined depth is replaced by zeros.
  FeatureEmbedding embed(const torch::Tensor& rgb, const torch::Tensor& depth, EmbedMode mode);
  /// Fused for depth_aware, RGB for rgb_only.
  FeatureEmbedding embed(const torch::Tensor& rgb, const torch::Tensor& depth);

  /// Decodes prompts[i] against row image_index[i] of grid. Prompt sets are
  /// batched by token count; output rows follow the input order.
  DecoderOutput decode(const torch::Tensor& grid, const std::vector<std::int64_t>& image_index,
                       const std::vector<PromptSet>& prompts, int height, int width);

  /// Single prompt set against a one-image embedding.
  MaskPrediction predict(const FeatureEmbedding& embedding, const PromptSet& prompts, int height, int width);

  Encoder& rgb_encoder() { return rgb_encoder_; }
  Encoder& depth_encoder() { return depth_encoder_; }
  PromptEncoder& prompt_encoder() { return prompt_encoder_; }
  MaskDecoder& decoder() { return decoder_; }
  /// Undefined for rgb_only.
  torch::Tensor alpha() const { return alpha_; }
  double alpha_value() const;

  std::vector<torch::Tensor> rgb_encoder_parameters();
  std::vector<torch::Tensor> depth_encoder_parameters();
  std::vector<torch::Tensor> head_parameters();
  std::vector<torch::Tensor> fusion_parameters();

 private:
  ModelConfig config_;
  Encoder rgb_encoder_{nullptr};
  Encoder depth_encoder_{nullptr};
  torch::Tensor alpha_;
  PromptEncoder prompt_encoder_{nullptr};
  MaskDecoder decoder_{nullptr};
};
TORCH_MODULE(SegmentationModel);

/// MACs of one forward pass (embedding plus a single-point decode) on an
/// H x W input, summed per layer from configured shapes.
std::int64_t estimate_macs(SegmentationModel& model, int height, int width);

}  // namespace dasam::model
