#pragma once

#include <cstdint>
#include <torch/torch.h>
#include <vector>

#include "dasam/model/config.hpp"
#include "dasam/model/layers.hpp"

namespace dasam::model {

enum class EmbeddingSource { rgb, depth, fused };

/// Spatial feature grid [B, C, H/s, W/s] produced by an encoder (or fusion).
struct FeatureEmbedding {
  torch::Tensor grid;
  EmbeddingSource source = EmbeddingSource::rgb;
};

/// Four-stage encoder:
///   1. 3x3 stride-2 stem + residual depthwise-separable blocks
///   2. fused inverted-bottleneck blocks
///   3. inverted-bottleneck blocks
///   4. inverted-bottleneck downsampling + lightweight attention blocks
/// Stages 2-4 halve the resolution until the configured total downsampling
/// is reached.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const EncoderConfig& config);

  /// [B, 3, H, W] -> [B, C4, H/s, W/s].
  torch::Tensor forward(const torch::Tensor& x);
  /// Output of each stage, in order.
  std::vector<torch::Tensor> forward_stages(const torch::Tensor& x);

  const EncoderConfig& config() const noexcept { return config_; }

 private:
  EncoderConfig config_;
  std::vector<torch::nn::Sequential> stages_;
};
TORCH_MODULE(Encoder);

/// Builds an encoder with parameters drawn deterministically from `seed`.
/// Throws ConfigError for an invalid config.
Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Runs `encoder` on an NCHW input (a single CHW image is promoted to a
/// batch of one). Throws ContractViolation when the input is not 3-channel or
/// its spatial size is not divisible by the downsampling factor.
FeatureEmbedding encode(Encoder& encoder, const torch::Tensor& input, EmbeddingSource source);

}  // namespace dasam::model
