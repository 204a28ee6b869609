#pragma once

#include <torch/torch.h>
#include <vector>

#include "dasam/data/types.hpp"
#include "dasam/model/config.hpp"
#include "dasam/model/layers.hpp"

namespace dasam::model {

/// Multi-head attention with an optional reduced internal width.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int dim, int heads, int downsample = 1);
  /// q [B, Nq, D], k/v [B, Nk, D] -> [B, Nq, D].
  torch::Tensor forward(const torch::Tensor& q, const torch::Tensor& k, const torch::Tensor& v);

 private:
  int heads_;
  torch::nn::Linear q_proj_{nullptr}, k_proj_{nullptr}, v_proj_{nullptr}, out_proj_{nullptr};
};
TORCH_MODULE(Attention);

/// Token self-attention, token->image cross-attention, MLP, and
/// image->token cross-attention, each with a residual and LayerNorm.
class TwoWayBlockImpl : public torch::nn::Module {
 public:
  TwoWayBlockImpl(const HeadConfig& config, bool skip_first_pe);
  /// Updates (tokens, image) in place; pe tensors are added to queries/keys.
  void forward(torch::Tensor& tokens, torch::Tensor& image, const torch::Tensor& token_pe,
               const torch::Tensor& image_pe);

 private:
  bool skip_first_pe_;
  Attention self_attn_{nullptr}, cross_token_{nullptr}, cross_image_{nullptr};
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr}, norm3_{nullptr}, norm4_{nullptr};
  torch::nn::Linear mlp_in_{nullptr}, mlp_out_{nullptr};
};
TORCH_MODULE(TwoWayBlock);

/// Batched decoder output; N prompt sets.
struct DecoderOutput {
  torch::Tensor logits;         // [N, H, W]
  torch::Tensor predicted_iou;  // [N] in [0, 1]
  torch::Tensor direct_logits;  // [N, h, w] at the embedding resolution
};

/// One decoded prompt set.
struct MaskPrediction {
  torch::Tensor logits;                     // [H, W]
  double predicted_iou = 0.0;
  std::vector<torch::Tensor> direct_logits; // each [H/s, W/s]
};

/// SAM-style decoder with a single mask output, an IoU regression head, and
/// a prompt-conditioned 1x1 projection of the pre-decoder grid for direct
/// supervision.
class MaskDecoderImpl : public torch::nn::Module {
 public:
  MaskDecoderImpl(int embed_channels, const HeadConfig& config);

  /// grid [N, C, h, w] (one row per prompt set), prompt tokens [N, T, D],
  /// image_pe [D, h, w]. Logits are upsampled to (height, width).
  DecoderOutput forward(const torch::Tensor& grid, const torch::Tensor& prompt_tokens, const torch::Tensor& image_pe,
                        int height, int width);

  const HeadConfig& config() const noexcept { return config_; }

 private:
  HeadConfig config_;
  int embed_channels_;
  torch::Tensor iou_token_;
  torch::Tensor mask_token_;
  torch::nn::Conv2d input_proj_{nullptr};
  std::vector<TwoWayBlock> blocks_;
  Attention final_attn_{nullptr};
  torch::nn::LayerNorm final_norm_{nullptr};
  torch::nn::ConvTranspose2d up1_{nullptr}, up2_{nullptr};
  ChannelNorm up_norm_{nullptr};
  torch::nn::Linear hyper1_{nullptr}, hyper2_{nullptr}, hyper3_{nullptr};
  torch::nn::Linear iou1_{nullptr}, iou2_{nullptr}, iou3_{nullptr};
  torch::nn::Linear direct_proj_{nullptr};
};
TORCH_MODULE(MaskDecoder);

/// Row `i` of a batched output.
MaskPrediction prediction_at(const DecoderOutput& out, std::int64_t i);

/// logits > 0. An all-background result is InstanceMask::empty.
data::InstanceMask binarize(const MaskPrediction& pred);
data::InstanceMask binarize_logits(const torch::Tensor& logits);

}  // namespace dasam::model
