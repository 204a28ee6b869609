#include "dasam/model/decoder.hpp"

#include <cmath>

#include "dasam/error.hpp"
#include "dasam/model/accounting.hpp"

namespace dasam::model {

namespace F = torch::nn::functional;

namespace {

torch::nn::Linear linear(int in, int out) { return torch::nn::Linear(torch::nn::LinearOptions(in, out)); }

torch::nn::LayerNorm layer_norm(int dim) {
  return torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim}));
}

}  // namespace

AttentionImpl::AttentionImpl(int dim, int heads, int downsample) : heads_(heads) {
  const int inner = dim / downsample;
  if (inner % heads != 0) throw ConfigError({"head.heads must divide the attention width"});
  q_proj_ = register_module("q_proj", linear(dim, inner));
  k_proj_ = register_module("k_proj", linear(dim, inner));
  v_proj_ = register_module("v_proj", linear(dim, inner));
  out_proj_ = register_module("out_proj", linear(inner, dim));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& q_in, const torch::Tensor& k_in, const torch::Tensor& v_in) {
  auto split = [&](const torch::Tensor& x) {
    const auto b = x.size(0), n = x.size(1), c = x.size(2);
    return x.reshape({b, n, heads_, c / heads_}).transpose(1, 2);  // [B, heads, N, dh]
  };
  auto q = split(counted(q_proj_, q_in));
  auto k = split(counted(k_proj_, k_in));
  auto v = split(counted(v_proj_, v_in));
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.size(-1)));
  auto attn = torch::softmax(counted_matmul(q, k.transpose(-1, -2)) * scale, -1);
  auto out = counted_matmul(attn, v).transpose(1, 2);
  out = out.reshape({out.size(0), out.size(1), -1});
  return counted(out_proj_, out);
}

TwoWayBlockImpl::TwoWayBlockImpl(const HeadConfig& c, bool skip_first_pe) : skip_first_pe_(skip_first_pe) {
  self_attn_ = register_module("self_attn", Attention(c.dim, c.heads, 1));
  norm1_ = register_module("norm1", layer_norm(c.dim));
  cross_token_ = register_module("cross_token_to_image", Attention(c.dim, c.heads, c.attention_downsample));
  norm2_ = register_module("norm2", layer_norm(c.dim));
  mlp_in_ = register_module("mlp_in", linear(c.dim, c.mlp_dim));
  mlp_out_ = register_module("mlp_out", linear(c.mlp_dim, c.dim));
  norm3_ = register_module("norm3", layer_norm(c.dim));
  cross_image_ = register_module("cross_image_to_token", Attention(c.dim, c.heads, c.attention_downsample));
  norm4_ = register_module("norm4", layer_norm(c.dim));
}

void TwoWayBlockImpl::forward(torch::Tensor& tokens, torch::Tensor& image, const torch::Tensor& token_pe,
                              const torch::Tensor& image_pe) {
  if (skip_first_pe_) {
    tokens = self_attn_->forward(tokens, tokens, tokens);
  } else {
    auto q = tokens + token_pe;
    tokens = tokens + self_attn_->forward(q, q, tokens);
  }
  tokens = norm1_->forward(tokens);

  auto q = tokens + token_pe;
  auto k = image + image_pe;
  tokens = norm2_->forward(tokens + cross_token_->forward(q, k, image));

  auto mlp = counted(mlp_out_, torch::relu(counted(mlp_in_, tokens)));
  tokens = norm3_->forward(tokens + mlp);

  q = tokens + token_pe;
  image = norm4_->forward(image + cross_image_->forward(k, q, tokens));
}

MaskDecoderImpl::MaskDecoderImpl(int embed_channels, const HeadConfig& config)
    : config_(config), embed_channels_(embed_channels) {
  config_.validate();
  const int d = config_.dim;
  iou_token_ = register_parameter("iou_token", torch::randn({1, d}));
  mask_token_ = register_parameter("mask_token", torch::randn({1, d}));
  input_proj_ = register_module("input_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(embed_channels, d, 1)));
  for (int i = 0; i < config_.depth; ++i) {
    blocks_.push_back(register_module("block" + std::to_string(i), TwoWayBlock(config_, i == 0)));
  }
  final_attn_ = register_module("final_attn", Attention(d, config_.heads, config_.attention_downsample));
  final_norm_ = register_module("final_norm", layer_norm(d));
  up1_ = register_module("up1", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d, d / 4, 2).stride(2)));
  up_norm_ = register_module("up_norm", ChannelNorm(d / 4, true));
  up2_ = register_module("up2",
                         torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(d / 4, d / 8, 2).stride(2)));
  hyper1_ = register_module("hyper1", linear(d, d));
  hyper2_ = register_module("hyper2", linear(d, d));
  hyper3_ = register_module("hyper3", linear(d, d / 8));
  iou1_ = register_module("iou1", linear(d, config_.iou_hidden));
  iou2_ = register_module("iou2", linear(config_.iou_hidden, config_.iou_hidden));
  iou3_ = register_module("iou3", linear(config_.iou_hidden, 1));
  direct_proj_ = register_module("direct_proj", linear(d, d));
}

DecoderOutput MaskDecoderImpl::forward(const torch::Tensor& grid, const torch::Tensor& prompt_tokens,
                                       const torch::Tensor& image_pe, int height, int width) {
  if (grid.dim() != 4 || grid.size(1) != embed_channels_) {
    throw ContractViolation("decode: expected a [N, " + std::to_string(embed_channels_) + ", h, w] embedding");
  }
  if (prompt_tokens.dim() != 3 || prompt_tokens.size(0) != grid.size(0) || prompt_tokens.size(1) < 1 ||
      prompt_tokens.size(2) != config_.dim) {
    throw ContractViolation("decode: prompt tokens must be [N, T>=1, D] with N matching the embedding batch");
  }
  const auto n = grid.size(0), h = grid.size(2), w = grid.size(3);
  const int d = config_.dim;

  auto src = counted(input_proj_, grid);  // [N, D, h, w]

  // Direct prediction: 1x1 projection of the pre-decoder grid with weights
  // generated from the (order-free) mean of the prompt tokens.
  auto direct_w = counted(direct_proj_, prompt_tokens.mean(1));  // [N, D]
  auto direct = (src * direct_w.view({n, d, 1, 1})).sum(1) / std::sqrt(static_cast<double>(d));
  add_macs(n * d * h * w);

  auto out_tokens = torch::cat({iou_token_, mask_token_}, 0).unsqueeze(0).expand({n, 2, d});
  auto tokens = torch::cat({out_tokens, prompt_tokens}, 1);  // [N, 2+T, D]
  const auto token_pe = tokens;
  auto image = src.flatten(2).transpose(1, 2);  // [N, hw, D]
  const auto pe = image_pe.flatten(1).transpose(0, 1).unsqueeze(0);  // [1, hw, D]

  for (auto& block : blocks_) block->forward(tokens, image, token_pe, pe);
  tokens = final_norm_->forward(tokens + final_attn_->forward(tokens + token_pe, image + pe, image));

  auto iou_out = tokens.select(1, 0);
  auto mask_out = tokens.select(1, 1);

  auto up = image.transpose(1, 2).reshape({n, d, h, w});
  up = torch::gelu(up_norm_->forward(counted(up1_, up)));
  up = torch::gelu(counted(up2_, up));  // [N, D/8, 4h, 4w]

  auto hyper = counted(hyper3_, torch::relu(counted(hyper2_, torch::relu(counted(hyper1_, mask_out)))));
  auto low = counted_matmul(hyper.unsqueeze(1), up.flatten(2)).view({n, 1, up.size(2), up.size(3)});
  auto logits = F::interpolate(low, F::InterpolateFuncOptions()
                                        .size(std::vector<int64_t>{height, width})
                                        .mode(torch::kBilinear)
                                        .align_corners(false))
                    .squeeze(1);

  auto iou = torch::sigmoid(counted(iou3_, torch::relu(counted(iou2_, torch::relu(counted(iou1_, iou_out)))))).squeeze(-1);
  return DecoderOutput{logits, iou, direct};
}

MaskPrediction prediction_at(const DecoderOutput& out, std::int64_t i) {
  MaskPrediction p;
  p.logits = out.logits[i];
  p.predicted_iou = out.predicted_iou[i].item<double>();
  p.direct_logits = {out.direct_logits[i]};
  return p;
}

data::InstanceMask binarize_logits(const torch::Tensor& logits) {
  if (logits.dim() != 2) throw ContractViolation("binarize: logits must be [H, W]");
  const int h = static_cast<int>(logits.size(0)), w = static_cast<int>(logits.size(1));
  auto bits_t = (logits.detach() > 0).to(torch::kUInt8).contiguous();
  std::vector<std::uint8_t> bits(bits_t.data_ptr<std::uint8_t>(), bits_t.data_ptr<std::uint8_t>() + bits_t.numel());
  bool any = false;
  for (auto b : bits) any = any || b;
  if (!any) return data::InstanceMask::empty(h, w);
  return data::InstanceMask::from_bitmap(h, w, std::move(bits));
}

data::InstanceMask binarize(const MaskPrediction& pred) { return binarize_logits(pred.logits); }

}  // namespace dasam::model
