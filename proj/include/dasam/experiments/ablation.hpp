#pragma once

#include <functional>
#include <string>

#include "dasam/data/synthetic.hpp"
#include "dasam/evaluation/protocols.hpp"
#include "dasam/training/trainer.hpp"

namespace dasam::experiments {

/// Depth ablation: same data, seeds and schedule for both variants; the
/// depth-aware model additionally runs the depth-only first stage.
struct AblationConfig {
  std::string preset = "toy";
  int scenes = 600;
  int train_scenes = 500;
  data::SyntheticSceneConfig scene;
  training::TrainConfig train;
  evaluation::ClickProtocolConfig clicks;
  std::uint64_t seed = 0;

  /// Low colour contrast and heavy texture noise so RGB edges are
  /// ambiguous; depth layers stay clean.
  static AblationConfig hard_rgb();
  void validate() const;
};

struct AblationResult {
  evaluation::EvalReport rgb_only;
  evaluation::EvalReport depth_aware;
  double rgb_only_train_seconds = 0.0;
  double depth_aware_train_seconds = 0.0;
  double final_alpha = 0.0;

  /// depth-aware minus RGB-only mIoU, in points (x100), at a click count.
  double gain_points(int clicks) const;
  /// Same restricted to a size bucket; nullopt if the bucket is empty.
  std::optional<double> bucket_gain_points(int clicks, evaluation::SizeBucket bucket) const;
  nlohmann::json to_json() const;
};

using ProgressFn = std::function<void(const std::string& variant, const training::StepRecord&)>;

AblationResult run_depth_ablation(const AblationConfig& config, const ProgressFn& progress = {});

}  // namespace dasam::experiments
