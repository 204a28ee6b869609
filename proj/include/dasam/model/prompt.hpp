#pragma once

#include <torch/torch.h>
#include <vector>

#include "dasam/model/config.hpp"

namespace dasam::model {

enum class PointLabel : int { background = 0, foreground = 1 };

/// Click in pixel coordinates; (x, y) addresses the pixel whose centre is at
/// (x + 0.5, y + 0.5).
struct PromptPoint {
  double x = 0.0;
  double y = 0.0;
  PointLabel label = PointLabel::foreground;
  bool operator==(const PromptPoint&) const = default;
};

/// Box with continuous pixel-edge coordinates, e.g. a tight mask box
/// (x_min, y_min, x_max + 1, y_max + 1).
struct PromptBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;
  bool operator==(const PromptBox&) const = default;
};

struct PromptSet {
  std::vector<PromptPoint> points;
  std::vector<PromptBox> boxes;

  bool empty() const noexcept { return points.empty() && boxes.empty(); }
  /// Throws ContractViolation when empty, out of bounds, or a box is
  /// degenerate.
  void validate(int height, int width) const;
  /// Same prompts with points and boxes in a canonical order.
  PromptSet canonical() const;
};

/// Prompt tokens [T, D]: one per point followed by two per box.
struct PromptEmbedding {
  torch::Tensor tokens;
};

/// Random-Fourier positional encoding plus learned type embeddings.
class PromptEncoderImpl : public torch::nn::Module {
 public:
  explicit PromptEncoderImpl(int dim);

  /// Deterministic; prompts are canonicalised first so the token set does
  /// not depend on input order.
  PromptEmbedding forward(const PromptSet& prompts, int height, int width);

  /// Encoding of normalised coordinates in [0,1]: [..., 2] -> [..., D].
  torch::Tensor positional(const torch::Tensor& coords01);
  /// Dense encoding of a h x w grid of cell centres: [D, h, w].
  torch::Tensor grid_encoding(int h, int w);

  /// Learned embedding for a point label: [D].
  torch::Tensor label_embedding(PointLabel label) const;

  int dim() const noexcept { return dim_; }

 private:
  int dim_;
  torch::Tensor gaussian_;
  torch::Tensor point_embeddings_;   // [2, D]: background, foreground
  torch::Tensor corner_embeddings_;  // [2, D]: top-left, bottom-right
};
TORCH_MODULE(PromptEncoder);

}  // namespace dasam::model
