#include "dasam/model/layers.hpp"

#include <ATen/CPUGeneratorImpl.h>
#include <cmath>

#include "dasam/model/accounting.hpp"

namespace dasam::model {

ChannelNormImpl::ChannelNormImpl(int channels, bool bias, double eps) : eps_(eps) {
  weight_ = register_parameter("weight", torch::ones({channels}));
  if (bias) bias_ = register_parameter("bias", torch::zeros({channels}));
}

torch::Tensor ChannelNormImpl::forward(const torch::Tensor& x) {
  const auto mean = x.mean(1, /*keepdim=*/true);
  const auto centered = x - mean;
  const auto var = centered.pow(2).mean(1, /*keepdim=*/true);
  auto y = centered * torch::rsqrt(var + eps_) * weight_.view({1, -1, 1, 1});
  if (bias_.defined()) y = y + bias_.view({1, -1, 1, 1});
  return y;
}

ConvLayerImpl::ConvLayerImpl(const ConvSpec& spec, bool bias) : act_(spec.act) {
  conv_ = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec.in_channels, spec.out_channels,
                                                                             spec.kernel)
                                                        .stride(spec.stride)
                                                        .padding(spec.kernel / 2)
                                                        .groups(spec.groups)
                                                        .bias(bias && !spec.norm)));
  if (spec.norm) norm_ = register_module("norm", ChannelNorm(spec.out_channels, bias));
}

torch::Tensor ConvLayerImpl::forward(const torch::Tensor& x) {
  auto y = counted(conv_, x);
  if (norm_) y = norm_->forward(y);
  if (act_ == Activation::hardswish) y = torch::hardswish(y);
  return y;
}

DSConvBlockImpl::DSConvBlockImpl(int channels, const BlockOptions& opt) {
  depthwise_ = register_module(
      "depthwise", ConvLayer(ConvSpec{channels, channels, 3, 1, channels, false, Activation::hardswish}, opt.bias));
  pointwise_ = register_module("pointwise",
                               ConvLayer(ConvSpec{channels, channels, 1, 1, 1, opt.norm, Activation::none}, opt.bias));
}

torch::Tensor DSConvBlockImpl::forward(const torch::Tensor& x) {
  return x + pointwise_->forward(depthwise_->forward(x));
}

FusedMBConvImpl::FusedMBConvImpl(int in_channels, int out_channels, int stride, const BlockOptions& opt)
    : residual_(in_channels == out_channels && stride == 1) {
  const int mid = in_channels * opt.expand_ratio;
  spatial_ = register_module(
      "spatial", ConvLayer(ConvSpec{in_channels, mid, 3, stride, 1, false, Activation::hardswish}, opt.bias));
  project_ = register_module("project",
                             ConvLayer(ConvSpec{mid, out_channels, 1, 1, 1, opt.norm, Activation::none}, opt.bias));
}

torch::Tensor FusedMBConvImpl::forward(const torch::Tensor& x) {
  auto y = project_->forward(spatial_->forward(x));
  return residual_ ? x + y : y;
}

MBConvImpl::MBConvImpl(int in_channels, int out_channels, int stride, const BlockOptions& opt)
    : residual_(in_channels == out_channels && stride == 1) {
  const int mid = in_channels * opt.expand_ratio;
  expand_ = register_module(
      "expand", ConvLayer(ConvSpec{in_channels, mid, 1, 1, 1, false, Activation::hardswish}, opt.bias));
  depthwise_ = register_module(
      "depthwise", ConvLayer(ConvSpec{mid, mid, 3, stride, mid, false, Activation::hardswish}, opt.bias));
  project_ = register_module("project",
                             ConvLayer(ConvSpec{mid, out_channels, 1, 1, 1, opt.norm, Activation::none}, opt.bias));
}

torch::Tensor MBConvImpl::forward(const torch::Tensor& x) {
  auto y = project_->forward(depthwise_->forward(expand_->forward(x)));
  return residual_ ? x + y : y;
}

LiteAttentionImpl::LiteAttentionImpl(int channels, int heads, const BlockOptions& opt) : heads_(heads) {
  qkv_ = register_module("qkv", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 3 * channels, 1).bias(false)));
  project_ = register_module(
      "project", ConvLayer(ConvSpec{channels, channels, 1, 1, 1, opt.norm, Activation::none}, opt.bias));
}

torch::Tensor LiteAttentionImpl::forward(const torch::Tensor& x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  const auto d = c / heads_;
  const auto n = h * w;
  auto qkv = counted(qkv_, x).view({b, 3, heads_, d, n});
  auto q = torch::relu(qkv.select(1, 0));
  auto k = torch::relu(qkv.select(1, 1));
  auto v = qkv.select(1, 2);
  // Append a row of ones to v so the normaliser comes out of the same matmuls.
  auto v_ext = torch::cat({v, torch::ones({b, heads_, 1, n}, v.options())}, 2);
  auto vk = counted_matmul(v_ext, k.transpose(-1, -2));  // [b, heads, d+1, d]
  auto out = counted_matmul(vk, q);                       // [b, heads, d+1, n]
  auto num = out.narrow(2, 0, d);
  auto den = out.narrow(2, d, 1);
  auto y = (num / (den + 1e-6)).reshape({b, c, h, w});
  return project_->forward(y);
}

AttentionBlockImpl::AttentionBlockImpl(int channels, int heads, const BlockOptions& opt) {
  attention_ = register_module("attention", LiteAttention(channels, heads, opt));
  local_ = register_module("local", MBConv(channels, channels, 1, opt));
}

torch::Tensor AttentionBlockImpl::forward(const torch::Tensor& x) {
  // MBConv already adds its own residual for equal in/out shapes.
  return local_->forward(x + attention_->forward(x));
}

void initialize_parameters(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  auto leaf = [](const std::string& name) {
    const auto dot = name.rfind('.');
    return dot == std::string::npos ? name : name.substr(dot + 1);
  };
  for (auto& item : module.named_parameters(/*recurse=*/true)) {
    const auto& name = item.key();
    auto& p = item.value();
    const auto last = leaf(name);
    if (last == "alpha") continue;
    // Learned tokens and type embeddings; match the leaf only, since module
    // names such as cross_token_to_image contain "token" too.
    const bool is_token = last.ends_with("_token") || last.ends_with("_embeddings");
    if (is_token) {
      p.normal_(0.0, 1.0, gen);
    } else if (p.dim() >= 2) {
      const double fan_in = static_cast<double>(p.numel() / p.size(0));
      const double bound = 1.0 / std::sqrt(fan_in);
      p.uniform_(-bound, bound, gen);
    } else if (last == "bias") {
      p.zero_();
    } else {
      p.fill_(1.0);
    }
  }
  for (auto& item : module.named_buffers(/*recurse=*/true)) {
    if (item.key().find("gaussian") != std::string::npos) item.value().normal_(0.0, 1.0, gen);
  }
}

}  // namespace dasam::model
