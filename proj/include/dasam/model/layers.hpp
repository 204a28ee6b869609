#pragma once

#include <torch/torch.h>

namespace dasam::model {

// Building blocks of the four-stage encoder. All tensors are NCHW.

/// LayerNorm across channels at every spatial position.
class ChannelNormImpl : public torch::nn::Module {
 public:
  ChannelNormImpl(int channels, bool bias, double eps = 1e-5);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::Tensor weight_;
  torch::Tensor bias_;
  double eps_;
};
TORCH_MODULE(ChannelNorm);

enum class Activation { none, hardswish };

struct ConvSpec {
  int in_channels;
  int out_channels;
  int kernel = 1;
  int stride = 1;
  int groups = 1;
  bool norm = false;
  Activation act = Activation::none;
};

/// conv -> [norm] -> [act]. The conv carries a bias only when there is no
/// norm and `bias` is set; the norm carries one when `bias` is set.
class ConvLayerImpl : public torch::nn::Module {
 public:
  ConvLayerImpl(const ConvSpec& spec, bool bias);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  ChannelNorm norm_{nullptr};
  Activation act_;
};
TORCH_MODULE(ConvLayer);

struct BlockOptions {
  bool bias = true;
  bool norm = true;
  int expand_ratio = 4;
};

/// Residual depthwise-separable block (stage 1).
class DSConvBlockImpl : public torch::nn::Module {
 public:
  DSConvBlockImpl(int channels, const BlockOptions& opt);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvLayer depthwise_{nullptr};
  ConvLayer pointwise_{nullptr};
};
TORCH_MODULE(DSConvBlock);

/// Fused inverted bottleneck: full 3x3 expansion then 1x1 projection.
class FusedMBConvImpl : public torch::nn::Module {
 public:
  FusedMBConvImpl(int in_channels, int out_channels, int stride, const BlockOptions& opt);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvLayer spatial_{nullptr};
  ConvLayer project_{nullptr};
  bool residual_;
};
TORCH_MODULE(FusedMBConv);

/// Inverted bottleneck: 1x1 expansion, 3x3 depthwise, 1x1 projection.
class MBConvImpl : public torch::nn::Module {
 public:
  MBConvImpl(int in_channels, int out_channels, int stride, const BlockOptions& opt);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  ConvLayer expand_{nullptr};
  ConvLayer depthwise_{nullptr};
  ConvLayer project_{nullptr};
  bool residual_;
};
TORCH_MODULE(MBConv);

/// Multi-head ReLU linear attention over the spatial grid; cost is linear
/// in the number of positions.
class LiteAttentionImpl : public torch::nn::Module {
 public:
  LiteAttentionImpl(int channels, int heads, const BlockOptions& opt);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int heads_;
  torch::nn::Conv2d qkv_{nullptr};
  ConvLayer project_{nullptr};
};
TORCH_MODULE(LiteAttention);

/// Stage-4 block: x + attention(x), then x + MBConv(x).
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int channels, int heads, const BlockOptions& opt);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  LiteAttention attention_{nullptr};
  MBConv local_{nullptr};
};
TORCH_MODULE(AttentionBlock);

/// Re-initializes every parameter of `module` from a generator seeded with
/// `seed`: weights with fan-in scaled uniform noise, biases to zero, norm
/// scales to one, and embeddings/tokens with a unit normal.
void initialize_parameters(torch::nn::Module& module, std::uint64_t seed);

}  // namespace dasam::model
