#include "dasam/model/accounting.hpp"

namespace dasam::model {
namespace {

thread_local MacScope* active_scope = nullptr;

}  // namespace

MacScope::MacScope() : previous_(active_scope) { active_scope = this; }

MacScope::~MacScope() { active_scope = previous_; }

void add_macs(std::int64_t macs) {
  for (auto* s = active_scope; s != nullptr; s = s->previous_) s->total_ += macs;
}

std::int64_t conv2d_macs(std::int64_t out_h, std::int64_t out_w, std::int64_t in_channels, std::int64_t out_channels,
                         std::int64_t kernel_h, std::int64_t kernel_w, std::int64_t groups) {
  return out_h * out_w * out_channels * (in_channels / groups) * kernel_h * kernel_w;
}

torch::Tensor counted(torch::nn::Conv2d& conv, const torch::Tensor& x) {
  auto y = conv->forward(x);
  if (active_scope) {
    const auto& o = conv->options;
    const auto k = o.kernel_size();
    add_macs(y.size(0) * conv2d_macs(y.size(2), y.size(3), o.in_channels(), o.out_channels(), k->at(0), k->at(1),
                                     o.groups()));
  }
  return y;
}

torch::Tensor counted(torch::nn::ConvTranspose2d& conv, const torch::Tensor& x) {
  auto y = conv->forward(x);
  if (active_scope) {
    const auto& o = conv->options;
    const auto k = o.kernel_size();
    // Every input pixel scatters a (C_out x k x k) patch.
    add_macs(x.size(0) * x.size(2) * x.size(3) * o.in_channels() * (o.out_channels() / o.groups()) * k->at(0) *
             k->at(1));
  }
  return y;
}

torch::Tensor counted(torch::nn::Linear& linear, const torch::Tensor& x) {
  auto y = linear->forward(x);
  if (active_scope) {
    add_macs((x.numel() / x.size(-1)) * linear->options.in_features() * linear->options.out_features());
  }
  return y;
}

torch::Tensor counted_matmul(const torch::Tensor& a, const torch::Tensor& b) {
  auto y = torch::matmul(a, b);
  if (active_scope) add_macs(y.numel() * a.size(-1));
  return y;
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters(/*recurse=*/true)) n += p.numel();
  return n;
}

}  // namespace dasam::model
