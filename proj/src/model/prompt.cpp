#include "dasam/model/prompt.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "dasam/error.hpp"

namespace dasam::model {

void PromptSet::validate(int height, int width) const {
  if (empty()) throw ContractViolation("prompt set is empty");
  for (const auto& p : points) {
    if (!(p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height)) {
      throw ContractViolation("point prompt outside the image bounds");
    }
    if (p.label != PointLabel::foreground && p.label != PointLabel::background) {
      throw ContractViolation("point label must be 0 (background) or 1 (foreground)");
    }
  }
  for (const auto& b : boxes) {
    if (!(b.x_min >= 0.0 && b.y_min >= 0.0 && b.x_max <= width && b.y_max <= height)) {
      throw ContractViolation("box prompt outside the image bounds");
    }
    if (!(b.x_min < b.x_max && b.y_min < b.y_max)) {
      throw ContractViolation("box prompt must satisfy x_min < x_max and y_min < y_max");
    }
  }
}

PromptSet PromptSet::canonical() const {
  PromptSet out = *this;
  std::stable_sort(out.points.begin(), out.points.end(), [](const PromptPoint& a, const PromptPoint& b) {
    return std::tuple(a.y, a.x, static_cast<int>(a.label)) < std::tuple(b.y, b.x, static_cast<int>(b.label));
  });
  std::stable_sort(out.boxes.begin(), out.boxes.end(), [](const PromptBox& a, const PromptBox& b) {
    return std::tuple(a.y_min, a.x_min, a.y_max, a.x_max) < std::tuple(b.y_min, b.x_min, b.y_max, b.x_max);
  });
  return out;
}

PromptEncoderImpl::PromptEncoderImpl(int dim) : dim_(dim) {
  gaussian_ = register_buffer("gaussian", torch::randn({2, dim / 2}));
  point_embeddings_ = register_parameter("point_embeddings", torch::randn({2, dim}));
  corner_embeddings_ = register_parameter("corner_embeddings", torch::randn({2, dim}));
}

torch::Tensor PromptEncoderImpl::positional(const torch::Tensor& coords01) {
  auto c = 2.0 * coords01 - 1.0;
  c = torch::matmul(c, gaussian_) * (2.0 * std::numbers::pi);
  return torch::cat({torch::sin(c), torch::cos(c)}, -1);
}

torch::Tensor PromptEncoderImpl::grid_encoding(int h, int w) {
  auto ys = (torch::arange(h, torch::kFloat32) + 0.5) / h;
  auto xs = (torch::arange(w, torch::kFloat32) + 0.5) / w;
  auto grid = torch::stack(torch::meshgrid({ys, xs}, "ij"), -1);  // [h, w, 2] as (y, x)
  grid = grid.flip(-1);                                            // (x, y)
  return positional(grid.to(gaussian_.dtype())).permute({2, 0, 1});
}

torch::Tensor PromptEncoderImpl::label_embedding(PointLabel label) const {
  return point_embeddings_[static_cast<int>(label)];
}

PromptEmbedding PromptEncoderImpl::forward(const PromptSet& prompts, int height, int width) {
  prompts.validate(height, width);
  const auto p = prompts.canonical();
  std::vector<torch::Tensor> tokens;
  if (!p.points.empty()) {
    std::vector<float> xy;
    std::vector<std::int64_t> labels;
    for (const auto& pt : p.points) {
      xy.push_back(static_cast<float>((pt.x + 0.5) / width));
      xy.push_back(static_cast<float>((pt.y + 0.5) / height));
      labels.push_back(static_cast<int>(pt.label));
    }
    const auto n = static_cast<std::int64_t>(p.points.size());
    auto coords = torch::from_blob(xy.data(), {n, 2}, torch::kFloat32).clone().to(gaussian_.dtype());
    auto label_idx = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
    tokens.push_back(positional(coords) + point_embeddings_.index_select(0, label_idx));
  }
  if (!p.boxes.empty()) {
    std::vector<float> xy;
    for (const auto& b : p.boxes) {
      xy.insert(xy.end(), {static_cast<float>(b.x_min / width), static_cast<float>(b.y_min / height),
                           static_cast<float>(b.x_max / width), static_cast<float>(b.y_max / height)});
    }
    const auto n = static_cast<std::int64_t>(p.boxes.size());
    auto coords = torch::from_blob(xy.data(), {n, 2, 2}, torch::kFloat32).clone().to(gaussian_.dtype());
    auto enc = positional(coords) + corner_embeddings_.unsqueeze(0);  // [n, 2, D]
    tokens.push_back(enc.reshape({2 * n, dim_}));
  }
  return PromptEmbedding{torch::cat(tokens, 0)};
}

}  // namespace dasam::model
