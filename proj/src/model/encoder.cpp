#include "dasam/model/encoder.hpp"

#include "dasam/error.hpp"

namespace dasam::model {

EncoderImpl::EncoderImpl(const EncoderConfig& config) : config_(config) {
  config_.validate();
  const BlockOptions opt{config_.use_bias, config_.use_norm, config_.expand_ratio};
  const auto& wd = config_.widths;
  const auto& dp = config_.depths;
  const int s = config_.downsample;

  torch::nn::Sequential stage1;
  stage1->push_back(ConvLayer(ConvSpec{3, wd[0], 3, 2, 1, config_.use_norm, Activation::hardswish}, config_.use_bias));
  for (int i = 0; i < dp[0]; ++i) stage1->push_back(DSConvBlock(wd[0], opt));

  torch::nn::Sequential stage2;
  const int stride2 = s >= 4 ? 2 : 1;
  stage2->push_back(FusedMBConv(wd[0], wd[1], stride2, opt));
  for (int i = 1; i < dp[1]; ++i) stage2->push_back(FusedMBConv(wd[1], wd[1], 1, opt));

  torch::nn::Sequential stage3;
  const int stride3 = s >= 8 ? 2 : 1;
  stage3->push_back(MBConv(wd[1], wd[2], stride3, opt));
  for (int i = 1; i < dp[2]; ++i) stage3->push_back(MBConv(wd[2], wd[2], 1, opt));

  torch::nn::Sequential stage4;
  const int stride4 = s >= 16 ? 2 : 1;
  stage4->push_back(MBConv(wd[2], wd[3], stride4, opt));
  for (int i = 0; i < dp[3]; ++i) stage4->push_back(AttentionBlock(wd[3], config_.heads, opt));

  stages_ = {register_module("stage1", stage1), register_module("stage2", stage2),
             register_module("stage3", stage3), register_module("stage4", stage4)};
}

torch::Tensor EncoderImpl::forward(const torch::Tensor& x) {
  auto y = x;
  for (auto& stage : stages_) y = stage->forward(y);
  return y;
}

std::vector<torch::Tensor> EncoderImpl::forward_stages(const torch::Tensor& x) {
  std::vector<torch::Tensor> out;
  auto y = x;
  for (auto& stage : stages_) {
    y = stage->forward(y);
    out.push_back(y);
  }
  return out;
}

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed) {
  Encoder enc(config);
  initialize_parameters(*enc, seed);
  return enc;
}

FeatureEmbedding encode(Encoder& encoder, const torch::Tensor& input, EmbeddingSource source) {
  auto x = input.dim() == 3 ? input.unsqueeze(0) : input;
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ContractViolation("encode: expected a [B, 3, H, W] input");
  }
  const int s = encoder->config().downsample;
  if (x.size(2) % s != 0 || x.size(3) % s != 0) {
    throw ContractViolation("encode: input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(3)) +
                            " is not divisible by the downsampling factor " + std::to_string(s));
  }
  return FeatureEmbedding{encoder->forward(x), source};
}

}  // namespace dasam::model
