#include "dasam/model/inference.hpp"

#include "dasam/data/depth.hpp"
#include "dasam/error.hpp"

namespace dasam::model {

namespace {

int round_up(int v, int m) { return (v + m - 1) / m * m; }

torch::Tensor pad_to(const torch::Tensor& chw, int h, int w) {
  return torch::constant_pad_nd(chw, {0, w - chw.size(2), 0, h - chw.size(1)}, 0.0);
}

}  // namespace

ScenePredictor::ScenePredictor(SegmentationModel model, const data::RgbImage& image, const data::DepthMap* depth)
    : model_(std::move(model)), height_(image.height), width_(image.width) {
  image.validate();
  const int s = model_->config().encoder.downsample;
  padded_h_ = round_up(height_, s);
  padded_w_ = round_up(width_, s);
  torch::NoGradGuard ng;
  auto rgb = pad_to(image_to_tensor(image), padded_h_, padded_w_).unsqueeze(0);
  torch::Tensor dep;
  if (model_->depth_aware()) {
    if (depth) {
      if (depth->height != height_ || depth->width != width_) {
        throw ContractViolation("depth map is " + std::to_string(depth->height) + "x" + std::to_string(depth->width) +
                                " but the image is " + std::to_string(height_) + "x" + std::to_string(width_));
      }
      const auto prepared = data::prepare_depth(*depth);
      depth_degenerate_ = prepared.degenerate;
      dep = pad_to(depth_to_tensor(prepared), padded_h_, padded_w_).unsqueeze(0);
    } else {
      depth_degenerate_ = true;
      dep = torch::zeros({1, 3, padded_h_, padded_w_});
    }
  }
  embedding_ = model_->embed(rgb, dep);
}

Inference ScenePredictor::predict(const PromptSet& prompts) const {
  prompts.validate(height_, width_);
  torch::NoGradGuard ng;
  auto pred = model_->predict(embedding_, prompts, padded_h_, padded_w_);
  Inference out;
  out.logits = pred.logits.slice(0, 0, height_).slice(1, 0, width_).contiguous();
  out.predicted_iou = pred.predicted_iou;
  out.mask = binarize_logits(out.logits);
  return out;
}

}  // namespace dasam::model
