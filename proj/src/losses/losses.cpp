#include "dasam/losses/losses.hpp"

#include <cmath>

#include "dasam/error.hpp"

namespace dasam::losses {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
  std::vector<std::string> bad;
  auto check = [&](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) bad.push_back(std::string("loss.") + name + ": must be finite and >= 0");
  };
  check(mask, "mask");
  check(dice, "dice");
  check(iou, "iou");
  check(direct, "direct");
  check(aux, "aux");
  if (!bad.empty()) throw ConfigError(std::move(bad));
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"mask", w.mask}, {"dice", w.dice}, {"iou", w.iou}, {"direct", w.direct}, {"aux", w.aux}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w.mask = j.value("mask", w.mask);
  w.dice = j.value("dice", w.dice);
  w.iou = j.value("iou", w.iou);
  w.direct = j.value("direct", w.direct);
  w.aux = j.value("aux", w.aux);
}

void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = {{"mask", b.mask}, {"dice", b.dice}, {"iou", b.iou}, {"direct", b.direct}, {"aux", b.aux}, {"total", b.total}};
}

LossBreakdown total_loss(double mask, double dice, double iou, double direct, double aux, const LossWeights& w) {
  // Neumaier summation.
  double sum = 0.0, comp = 0.0;
  for (double v : {w.mask * mask, w.dice * dice, w.iou * iou, w.direct * direct, w.aux * aux}) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return LossBreakdown{mask, dice, iou, direct, aux, sum + comp};
}

namespace {

torch::Tensor batched(const torch::Tensor& x) { return x.dim() == 2 ? x.unsqueeze(0) : x; }

void check_pair(const torch::Tensor& logits, const torch::Tensor& gt, const char* op) {
  if (logits.dim() < 2 || logits.dim() > 3 || !logits.sizes().equals(gt.sizes())) {
    throw ContractViolation(std::string(op) + ": logits and gt must share an [H, W] or [N, H, W] shape");
  }
}

torch::Tensor stable_bce(const torch::Tensor& x, const torch::Tensor& g) {
  return torch::clamp_min(x, 0) - x * g + torch::log1p(torch::exp(-x.abs()));
}

}  // namespace

torch::Tensor mask_bce_per_mask(const torch::Tensor& logits, const torch::Tensor& gt) {
  check_pair(logits, gt, "mask_bce_loss");
  return stable_bce(batched(logits), batched(gt)).mean({1, 2});
}

torch::Tensor dice_per_mask(const torch::Tensor& logits, const torch::Tensor& gt, double eps) {
  check_pair(logits, gt, "dice_loss");
  auto p = torch::sigmoid(batched(logits));
  auto g = batched(gt);
  auto inter = (p * g).sum({1, 2});
  return 1.0 - (2.0 * inter + eps) / (p.sum({1, 2}) + g.sum({1, 2}) + eps);
}

torch::Tensor hard_iou(const torch::Tensor& logits, const torch::Tensor& gt) {
  check_pair(logits, gt, "hard_iou");
  torch::NoGradGuard ng;
  auto p = batched(logits).detach() > 0;
  auto g = batched(gt).detach() > 0.5;
  auto inter = (p & g).sum({1, 2}).to(torch::kFloat64);
  auto uni = (p | g).sum({1, 2}).to(torch::kFloat64);
  return torch::where(uni > 0, inter / uni.clamp_min(1), torch::ones_like(uni)).to(logits.scalar_type());
}

torch::Tensor iou_regression_per_mask(const torch::Tensor& predicted_iou, const torch::Tensor& logits,
                                      const torch::Tensor& gt) {
  auto target = hard_iou(logits, gt);
  auto pred = predicted_iou.reshape({-1});
  if (pred.size(0) != target.size(0)) throw ContractViolation("iou_regression_loss: one score per mask expected");
  return (pred - target).pow(2);
}

torch::Tensor direct_supervision_per_mask(const std::vector<torch::Tensor>& direct_logits, const torch::Tensor& gt) {
  if (direct_logits.empty()) throw ContractViolation("direct_supervision_loss: no intermediate predictions");
  auto g = batched(gt).unsqueeze(1);
  torch::Tensor sum;
  for (const auto& d : direct_logits) {
    auto map = batched(d);
    auto small = F::adaptive_max_pool2d(g, F::AdaptiveMaxPool2dFuncOptions({map.size(1), map.size(2)})).squeeze(1);
    auto term = mask_bce_per_mask(map, small) + dice_per_mask(map, small);
    sum = sum.defined() ? sum + term : term;
  }
  return sum / static_cast<double>(direct_logits.size());
}

torch::Tensor inner_boundary(const torch::Tensor& gt) {
  torch::NoGradGuard ng;
  auto g = batched(gt).unsqueeze(1);
  // max_pool pads with -inf, so pixels outside the canvas never erode.
  auto eroded = -F::max_pool2d(-g, F::MaxPool2dFuncOptions(3).stride(1).padding(1));
  return (g - eroded).squeeze(1);
}

torch::Tensor boundary_band(const torch::Tensor& gt, int radius) {
  torch::NoGradGuard ng;
  auto b = inner_boundary(gt).unsqueeze(1);
  return F::max_pool2d(b, F::MaxPool2dFuncOptions(2 * radius + 1).stride(1).padding(radius)).squeeze(1);
}

torch::Tensor boundary_aux_per_mask(const torch::Tensor& logits, const torch::Tensor& gt) {
  check_pair(logits, gt, "boundary_aux_loss");
  auto band = boundary_band(gt);
  auto count = band.sum({1, 2});
  auto weighted = (stable_bce(batched(logits), batched(gt)) * band).sum({1, 2});
  return weighted / count.clamp_min(1.0);
}

torch::Tensor mask_bce_loss(const torch::Tensor& logits, const torch::Tensor& gt) {
  return mask_bce_per_mask(logits, gt).mean();
}

torch::Tensor dice_loss(const torch::Tensor& logits, const torch::Tensor& gt, double eps) {
  return dice_per_mask(logits, gt, eps).mean();
}

torch::Tensor iou_regression_loss(const torch::Tensor& predicted_iou, const torch::Tensor& logits,
                                  const torch::Tensor& gt) {
  return iou_regression_per_mask(predicted_iou, logits, gt).mean();
}

torch::Tensor direct_supervision_loss(const std::vector<torch::Tensor>& direct_logits, const torch::Tensor& gt) {
  return direct_supervision_per_mask(direct_logits, gt).mean();
}

torch::Tensor boundary_aux_loss(const torch::Tensor& logits, const torch::Tensor& gt) {
  return boundary_aux_per_mask(logits, gt).mean();
}

}  // namespace dasam::losses
