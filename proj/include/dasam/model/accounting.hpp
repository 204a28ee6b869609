#pragma once

#include <cstdint>
#include <torch/torch.h>

namespace dasam::model {

// Multiply-accumulate bookkeeping. Layers report their MACs from their
// configured shapes while a MacScope is active on the current thread;
// outside a scope the calls are no-ops.

class MacScope {
 public:
  MacScope();
  ~MacScope();
  MacScope(const MacScope&) = delete;
  MacScope& operator=(const MacScope&) = delete;

  std::int64_t total() const noexcept { return total_; }

 private:
  friend void add_macs(std::int64_t macs);
  std::int64_t total_ = 0;
  MacScope* previous_;
};

void add_macs(std::int64_t macs);

std::int64_t conv2d_macs(std::int64_t out_h, std::int64_t out_w, std::int64_t in_channels, std::int64_t out_channels,
                         std::int64_t kernel_h, std::int64_t kernel_w, std::int64_t groups = 1);

/// Conv2d forward that records its MACs.
torch::Tensor counted(torch::nn::Conv2d& conv, const torch::Tensor& x);
torch::Tensor counted(torch::nn::ConvTranspose2d& conv, const torch::Tensor& x);
torch::Tensor counted(torch::nn::Linear& linear, const torch::Tensor& x);
torch::Tensor counted_matmul(const torch::Tensor& a, const torch::Tensor& b);

/// Number of trainable scalars.
std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace dasam::model
