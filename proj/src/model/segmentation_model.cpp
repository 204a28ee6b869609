#include "dasam/model/segmentation_model.hpp"

#include <map>
#include <numeric>

#include "dasam/data/random.hpp"
#include "dasam/error.hpp"
#include "dasam/model/accounting.hpp"

namespace dasam::model {

torch::Tensor image_to_tensor(const data::RgbImage& image) {
  auto t = torch::from_blob(const_cast<float*>(image.pixels.data()), {image.height, image.width, 3}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous();
}

torch::Tensor depth_to_tensor(const data::PreparedDepth& depth) {
  auto t = torch::from_blob(const_cast<float*>(depth.values.data()), {depth.height, depth.width, 3}, torch::kFloat32);
  return t.permute({2, 0, 1}).contiguous();
}

SegmentationModelImpl::SegmentationModelImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  rgb_encoder_ = register_module("rgb_encoder", build_encoder(config_.encoder, dasam::mix_seed({config_.seed, 1})));
  if (depth_aware()) {
    depth_encoder_ =
        register_module("depth_encoder", build_encoder(config_.encoder, dasam::mix_seed({config_.seed, 2})));
    alpha_ = register_parameter("alpha", torch::tensor(config_.alpha_init, torch::kFloat32));
  }
  prompt_encoder_ = register_module("prompt_encoder", PromptEncoder(config_.head.dim));
  decoder_ = register_module("decoder", MaskDecoder(config_.encoder.embed_dim(), config_.head));
  initialize_parameters(*prompt_encoder_, dasam::mix_seed({config_.seed, 3}));
  initialize_parameters(*decoder_, dasam::mix_seed({config_.seed, 4}));
}

double SegmentationModelImpl::alpha_value() const { return alpha_.defined() ? alpha_.item<double>() : 0.0; }

FeatureEmbedding SegmentationModelImpl::embed(const torch::Tensor& rgb, const torch::Tensor& depth, EmbedMode mode) {
  auto depth_in = [&] { return depth.defined() ? depth : torch::zeros_like(rgb); };
  switch (mode) {
    case EmbedMode::rgb_only:
      return encode(rgb_encoder_, rgb, EmbeddingSource::rgb);
    case EmbedMode::depth_only:
      if (!depth_aware()) throw ContractViolation("embed: the rgb_only variant has no depth encoder");
      return encode(depth_encoder_, depth_in(), EmbeddingSource::depth);
    case EmbedMode::fused: {
      if (!depth_aware()) throw ContractViolation("embed: the rgb_only variant cannot fuse");
      auto f_rgb = encode(rgb_encoder_, rgb, EmbeddingSource::rgb);
      auto f_dep = encode(depth_encoder_, depth_in(), EmbeddingSource::depth);
      return fuse(f_rgb, f_dep, FusionParams{alpha_});
    }
  }
  throw ContractViolation("embed: unknown mode");
}

FeatureEmbedding SegmentationModelImpl::embed(const torch::Tensor& rgb, const torch::Tensor& depth) {
  return embed(rgb, depth, depth_aware() ? EmbedMode::fused : EmbedMode::rgb_only);
}

DecoderOutput SegmentationModelImpl::decode(const torch::Tensor& grid, const std::vector<std::int64_t>& image_index,
                                            const std::vector<PromptSet>& prompts, int height, int width) {
  if (prompts.empty() || prompts.size() != image_index.size()) {
    throw ContractViolation("decode: need one image index per prompt set");
  }
  const auto h = grid.size(2), w = grid.size(3);
  const auto pe = prompt_encoder_->grid_encoding(static_cast<int>(h), static_cast<int>(w));

  std::vector<torch::Tensor> tokens(prompts.size());
  std::map<std::int64_t, std::vector<std::int64_t>> groups;  // token count -> rows
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (image_index[i] < 0 || image_index[i] >= grid.size(0)) throw ContractViolation("decode: bad image index");
    tokens[i] = prompt_encoder_->forward(prompts[i], height, width).tokens;
    groups[tokens[i].size(0)].push_back(static_cast<std::int64_t>(i));
  }

  std::vector<torch::Tensor> logits, iou, direct;
  std::vector<std::int64_t> order;
  for (const auto& [count, rows] : groups) {
    std::vector<torch::Tensor> tok;
    std::vector<std::int64_t> idx;
    for (auto r : rows) {
      tok.push_back(tokens[static_cast<std::size_t>(r)]);
      idx.push_back(image_index[static_cast<std::size_t>(r)]);
      order.push_back(r);
    }
    auto g = grid.index_select(0, torch::tensor(idx, torch::kInt64));
    auto out = decoder_->forward(g, torch::stack(tok, 0), pe, height, width);
    logits.push_back(out.logits);
    iou.push_back(out.predicted_iou);
    direct.push_back(out.direct_logits);
  }
  if (groups.size() == 1) return DecoderOutput{logits[0], iou[0], direct[0]};

  std::vector<std::int64_t> inverse(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inverse[static_cast<std::size_t>(order[k])] = static_cast<std::int64_t>(k);
  auto inv = torch::tensor(inverse, torch::kInt64);
  return DecoderOutput{torch::cat(logits, 0).index_select(0, inv), torch::cat(iou, 0).index_select(0, inv),
                       torch::cat(direct, 0).index_select(0, inv)};
}

MaskPrediction SegmentationModelImpl::predict(const FeatureEmbedding& embedding, const PromptSet& prompts, int height,
                                              int width) {
  if (embedding.grid.size(0) != 1) throw ContractViolation("predict: expected a single-image embedding");
  return prediction_at(decode(embedding.grid, {0}, {prompts}, height, width), 0);
}

namespace {

std::vector<torch::Tensor> params_of(torch::nn::Module& m) { return m.parameters(/*recurse=*/true); }

}  // namespace

std::vector<torch::Tensor> SegmentationModelImpl::rgb_encoder_parameters() { return params_of(*rgb_encoder_); }

std::vector<torch::Tensor> SegmentationModelImpl::depth_encoder_parameters() {
  return depth_encoder_ ? params_of(*depth_encoder_) : std::vector<torch::Tensor>{};
}

std::vector<torch::Tensor> SegmentationModelImpl::head_parameters() {
  auto p = params_of(*prompt_encoder_);
  auto d = params_of(*decoder_);
  p.insert(p.end(), d.begin(), d.end());
  return p;
}

std::vector<torch::Tensor> SegmentationModelImpl::fusion_parameters() {
  return alpha_.defined() ? std::vector<torch::Tensor>{alpha_} : std::vector<torch::Tensor>{};
}

std::int64_t estimate_macs(SegmentationModel& model, int height, int width) {
  torch::NoGradGuard no_grad;
  MacScope scope;
  auto rgb = torch::zeros({1, 3, height, width});
  auto emb = model->embed(rgb, model->depth_aware() ? torch::zeros({1, 3, height, width}) : torch::Tensor());
  PromptSet p;
  p.points.push_back({width / 2.0, height / 2.0, PointLabel::foreground});
  model->predict(emb, p, height, width);
  return scope.total();
}

}  // namespace dasam::model
